fn main() {
    env_logger::init();
    std::process::exit(gcts::cli::run(std::env::args_os()));
}
