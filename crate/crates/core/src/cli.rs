//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 infeasible
//! program, 3 numerical or audit failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::caseio::{parse_bids, stitch, Cell, Format, ScenarioConfig, StitchConfig, Table, Tabular};
use crate::error::{Error, Result};
use crate::experiments::{audit_loop_flow, run_dpi_sweep, run_realtime_mc, run_w_sweep, scheduled_tie_flows, Study};
use crate::market::{ClearingSolution, Market, Mechanism, KKT_TOLERANCE};
use crate::settlement::{revenue_adequacy_audit, settle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gcts", version, about = "Multi-area interchange scheduling: JED, CTS and GCTS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clear one mechanism at forecast loads and write its solution.
    Solve(SolveArgs),
    /// Monte Carlo real-time comparison of mechanisms.
    Compare(CompareArgs),
    /// Bid-price convergence sweep over a weight and price grid.
    Sweep(SweepArgs),
    /// Check that the inputs load and are consistent.
    Validate(Inputs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Stitching config naming the area cases and tie-lines.
    #[arg(long)]
    pub stitch: PathBuf,
    /// Interface bid book; defaults to opposite bids across every tie.
    #[arg(long)]
    pub bids: Option<PathBuf>,
    /// Scenario settings.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum)]
    pub mechanism: Mechanism,
    #[command(flatten)]
    pub output: Output,
    /// Overrides the scenario seed (recorded only).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Mechanisms to compare, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Mechanism::Jed, Mechanism::Cts, Mechanism::Gcts])]
    pub mechanism: Vec<Mechanism>,
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of real-time load samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Load standard deviation as a fraction of the forecast.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub output: Output,
    /// Price weights, comma separated; defaults to the scenario grid.
    #[arg(long, value_delimiter = ',')]
    pub w: Vec<f64>,
    /// Bid prices, comma separated; defaults to the scenario grid.
    #[arg(long, value_delimiter = ',')]
    pub dpi: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Everything needed to reproduce one run. No timestamps, so equal runs
/// write equal manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub mechanisms: Vec<Mechanism>,
    pub seed: u64,
    pub samples: usize,
    pub sigma: f64,
    pub format: Format,
    pub output_dir: PathBuf,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

fn digest(role: &str, path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        role: role.to_string(),
        path: path.to_path_buf(),
        sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Config(_) | Error::Structure(_) => EXIT_CONFIG,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Singular { .. } | Error::Numerical(_) | Error::Audit(_) => EXIT_NUMERICAL,
    }
}

struct Loaded {
    study: Study,
    digests: Vec<FileDigest>,
}

fn load(inputs: &Inputs) -> Result<Loaded> {
    let mut digests = vec![digest("stitch", &inputs.stitch)?];
    let cfg = StitchConfig::load(&inputs.stitch)?;
    for area in &cfg.areas {
        digests.push(digest(&format!("case area {}", area.id), &area.case)?);
    }
    let (net, part) = stitch(&cfg)?;
    let bids = match &inputs.bids {
        Some(p) => {
            digests.push(digest("bids", p)?);
            Some(parse_bids(p, &net, &part)?)
        }
        None => None,
    };
    let scenario = match &inputs.scenario {
        Some(p) => {
            digests.push(digest("scenario", p)?);
            ScenarioConfig::load(p)?
        }
        None => ScenarioConfig::default(),
    };
    Ok(Loaded {
        study: Study::new(net, part, bids, scenario)?,
        digests,
    })
}

struct Writer<'a> {
    output: &'a Output,
    written: Vec<FileDigest>,
}

impl<'a> Writer<'a> {
    fn new(output: &'a Output) -> Result<Self> {
        std::fs::create_dir_all(&output.out).map_err(|e| Error::io(&output.out, e))?;
        Ok(Writer {
            output,
            written: Vec::new(),
        })
    }

    fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        let ext = match self.output.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let path = self.output.out.join(format!("{name}.{ext}"));
        std::fs::write(&path, table.render(self.output.format)?).map_err(|e| Error::io(&path, e))?;
        self.written.push(digest(name, &path)?);
        Ok(())
    }

    fn manifest(self, command: &str, mechanisms: Vec<Mechanism>, study: &Study, inputs: Vec<FileDigest>) -> Result<()> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            mechanisms,
            seed: study.scenario.rng_seed,
            samples: study.scenario.n_samples,
            sigma: study.scenario.load_sigma_fraction,
            format: self.output.format,
            output_dir: self.output.out.clone(),
            inputs,
            outputs: self.written,
        };
        let path = self.output.out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn bus_table(m: &Market, sol: &ClearingSolution) -> Table {
    let mut t = Table::new(["bus", "area", "load_mw", "theta_rad", "lmp"]);
    for &k in &sol.buses {
        let bus = &m.net.buses()[k];
        t.push(vec![
            bus.id.into(),
            bus.area.into(),
            sol.loads_mw[k].into(),
            sol.theta[k].into(),
            sol.lmp[k].into(),
        ]);
    }
    t
}

fn generator_table(m: &Market, sol: &ClearingSolution) -> Table {
    let mut t = Table::new(["generator", "bus", "dispatch_mw", "g_min_mw", "g_max_mw"]);
    for &g in &sol.generators {
        let gen = &m.net.generators()[g];
        t.push(vec![
            (g + 1).into(),
            gen.bus.into(),
            sol.dispatch_mw[g].into(),
            gen.g_min_mw.into(),
            gen.g_max_mw.into(),
        ]);
    }
    t
}

fn branch_table(m: &Market, sol: &ClearingSolution, exact: Option<&[f64]>) -> Table {
    let mut t = Table::new(["from_bus", "to_bus", "tie", "flow_mw", "limit_mw", "shadow_price", "exact_flow_mw"]);
    for (k, br) in m.net.branches().iter().enumerate() {
        let limit = if br.limit_mw.is_finite() {
            Cell::from(br.limit_mw)
        } else {
            Cell::Empty
        };
        t.push(vec![
            br.from_bus.into(),
            br.to_bus.into(),
            if br.is_tie_line { "yes" } else { "no" }.into(),
            sol.flows_mw[k].into(),
            limit,
            sol.line_price[k].into(),
            exact.map(|f| f[k]).into(),
        ]);
    }
    t
}

fn summary_table(m: &Market, mechanism: Mechanism, sol: &ClearingSolution, tie_discrepancy: f64, overflows: usize) -> Table {
    let mut t = Table::new(["quantity", "value"]);
    let mut row = |name: &str, v: Cell| t.push(vec![name.into(), v]);
    row("mechanism", mechanism.to_string().into());
    row("generation_cost", sol.internal_cost.into());
    row("interface_cost", sol.interface_cost.into());
    row("total_cost", sol.total_cost().into());
    for (a, &id) in m.part.areas.iter().enumerate() {
        row(&format!("net_export_area_{id}"), sol.net_export_mw[a].into());
    }
    for ic in &sol.interchanges {
        row(
            &format!("interchange_{}_{}", m.part.areas[ic.from], m.part.areas[ic.to]),
            ic.scheduled_mw.into(),
        );
    }
    row("tie_discrepancy_pct", tie_discrepancy.into());
    row("overflowed_lines", overflows.into());
    row("kkt_residual", sol.kkt.max().into());
    t
}

fn bid_table(study: &Study, m: &Market, sol: &ClearingSolution) -> Table {
    let book = study.book();
    let sys = &m.blocks.boundary_system;
    let price = |bus: usize| {
        sys.buses
            .iter()
            .position(|&b| b == bus)
            .and_then(|p| sol.boundary_prices.get(p).copied())
    };
    let mut t = Table::new(["bid", "sell_to_bus", "buy_from_bus", "dpi", "s_max", "cleared_mw", "price_gap"]);
    for (bid, &s) in book.bids.iter().zip(&sol.cleared_mw) {
        let gap = price(bid.sell_to.bus).zip(price(bid.buy_from.bus)).map(|(a, b)| a - b);
        t.push(vec![
            bid.id.into(),
            bid.sell_to.bus.into(),
            bid.buy_from.bus.into(),
            bid.dpi.into(),
            bid.s_max.into(),
            s.into(),
            gap.into(),
        ]);
    }
    t
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let Loaded { mut study, digests } = load(&args.inputs)?;
    if let Some(seed) = args.seed {
        study.scenario.rng_seed = seed;
    }
    let m = study.market()?;
    let book = study.book();
    let forecast = m.forecast();
    let sol = match args.mechanism {
        Mechanism::Jed => m.solve_jed(&forecast)?,
        Mechanism::Gcts => m.solve_gcts(&book, &forecast)?,
        Mechanism::Cts => m.solve_cts(&book, &study.proxies(&m)?, &forecast)?,
    };
    sol.audit(KKT_TOLERANCE)?;
    let audit = audit_loop_flow(&m, &sol.dispatch_mw, &forecast, &scheduled_tie_flows(&m, &sol))?;

    let mut w = Writer::new(&args.output)?;
    w.table("summary", &summary_table(&m, args.mechanism, &sol, audit.tie_discrepancy_pct, audit.overflow_count()))?;
    w.table("buses", &bus_table(&m, &sol))?;
    w.table("generators", &generator_table(&m, &sol))?;
    w.table("branches", &branch_table(&m, &sol, Some(&audit.exact_flows_mw)))?;
    if args.mechanism != Mechanism::Jed {
        w.table("bids", &bid_table(&study, &m, &sol))?;
    }
    if args.mechanism == Mechanism::Gcts {
        let realtime = (0..m.part.num_areas())
            .map(|a| m.solve_realtime(a, &sol.theta_boundary, &forecast))
            .collect::<Result<Vec<_>>>()?;
        let report = settle(&m, &book, &sol, &realtime)?;
        revenue_adequacy_audit(&report, 1e-6)?;
        w.table("settlement", &report.to_table())?;
    }
    w.manifest("solve", vec![args.mechanism], &study, digests)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let Loaded { mut study, digests } = load(&args.inputs)?;
    if let Some(seed) = args.seed {
        study.scenario.rng_seed = seed;
    }
    if let Some(n) = args.samples {
        study.scenario.n_samples = n;
    }
    if let Some(sigma) = args.sigma {
        study.scenario.load_sigma_fraction = sigma;
    }
    study.scenario.validate()?;
    let mut mechanisms = args.mechanism.clone();
    mechanisms.sort();
    mechanisms.dedup();
    let comparison = run_realtime_mc(&study, &mechanisms)?;

    let mut w = Writer::new(&args.output)?;
    w.table("comparison", &comparison.to_table())?;
    let mut per = Table::new(["scenario", "mechanism", "total_cost", "relaxed", "overflowed_lines", "tie_discrepancy_pct"]);
    for outcomes in &comparison.scenarios {
        for o in outcomes {
            per.push(vec![
                o.scenario.into(),
                o.mechanism.to_string().into(),
                o.total_cost.into(),
                if o.relaxed { "yes" } else { "no" }.into(),
                o.overflow_count.into(),
                o.tie_discrepancy_pct.into(),
            ]);
        }
    }
    w.table("scenarios", &per)?;
    w.manifest("compare", mechanisms, &study, digests)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let Loaded { mut study, digests } = load(&args.inputs)?;
    if let Some(seed) = args.seed {
        study.scenario.rng_seed = seed;
    }
    let pick = |given: &[f64], configured: &[f64], fallback: &[f64]| -> Vec<f64> {
        if !given.is_empty() {
            given.to_vec()
        } else if !configured.is_empty() {
            configured.to_vec()
        } else {
            fallback.to_vec()
        }
    };
    let ws = pick(&args.w, &study.scenario.w_grid, &[0.1, 0.15, 0.2, 1.0]);
    let dpis = pick(&args.dpi, &study.scenario.dpi_grid, &[10.0, 1.0, 0.5, 0.1, 0.01, 0.0]);
    if ws.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Config("price weights must be positive".into()));
    }
    if dpis.iter().any(|d| !d.is_finite()) {
        return Err(Error::Config("bid prices must be finite".into()));
    }
    let points = run_dpi_sweep(&study, &ws, &dpis)?;
    let weights = run_w_sweep(&study, &ws)?;
    let mut w = Writer::new(&args.output)?;
    w.table("sweep", &points.to_table())?;
    w.table("clearing", &weights.to_table())?;
    w.manifest("sweep", vec![Mechanism::Gcts], &study, digests)
}

pub fn cmd_validate(inputs: &Inputs) -> Result<()> {
    let Loaded { study, .. } = load(inputs)?;
    let m = study.market()?;
    study.proxies(&m)?;
    println!(
        "ok: {} buses, {} branches ({} tie-lines), {} generators, {} areas, {} boundary buses, {} bids",
        m.net.num_buses(),
        m.net.branches().len(),
        m.part.tie_lines.len(),
        m.net.generators().len(),
        m.part.num_areas(),
        m.blocks.boundary_system.len(),
        study.book().len()
    );
    Ok(())
}
