//! Reading case files and configs, writing reports.

mod config;
mod emit;
mod matpower;

pub use config::{
    bids_from_toml, bids_to_toml, parse_bids, stitch, AreaCase, LineLimit, ScenarioConfig,
    StitchConfig, TieLineSpec, FORMAT_VERSION,
};
pub use emit::{emit_report, format_sig6, round_sig6, Cell, Format, Table, Tabular};
pub use matpower::{parse_case, parse_case_str};
