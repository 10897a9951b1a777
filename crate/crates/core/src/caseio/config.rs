//! TOML inputs: stitching configs, bid books and scenarios.
//!
//! Every file carries `format_version = 1`. Relative case paths in a stitch
//! config are resolved against the directory of the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::matpower::parse_case;
use crate::bids::{BidBook, BusRef, InterfaceBid};
use crate::error::{Error, Result};
use crate::netmodel::{AreaPartition, Branch, Bus, PowerNetwork, DEFAULT_BASE_MVA};

pub const FORMAT_VERSION: u32 = 1;

fn default_base() -> f64 {
    DEFAULT_BASE_MVA
}
fn default_reactance() -> f64 {
    0.1
}
fn default_limit() -> f64 {
    100.0
}
fn default_samples() -> usize {
    100
}
fn default_sigma() -> f64 {
    0.05
}
fn default_one() -> f64 {
    1.0
}
fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaCase {
    pub id: usize,
    pub case: PathBuf,
    /// Added to every bus id of the case.
    #[serde(default)]
    pub offset: usize,
    /// Replaces the rating of every internal line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_limit_mw: Option<f64>,
}

/// A tie-line between two areas, with bus ids as written in the case files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLineSpec {
    pub area_a: usize,
    pub bus_a: usize,
    pub area_b: usize,
    pub bus_b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_mw: Option<f64>,
}

/// Rating override for one internal line, case-local bus ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineLimit {
    pub area: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub limit_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StitchConfig {
    pub format_version: u32,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    #[serde(default = "default_reactance")]
    pub default_reactance_pu: f64,
    #[serde(default = "default_limit")]
    pub default_limit_mw: f64,
    pub areas: Vec<AreaCase>,
    #[serde(default)]
    pub tie_lines: Vec<TieLineSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub line_limits: Vec<LineLimit>,
}

fn check_version(v: u32, what: &str) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "{what}: unsupported format_version {v}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn toml_error(origin: &str, text: &str, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        path: origin.to_string(),
        line,
        message: e.message().to_string(),
    }
}

impl StitchConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: StitchConfig = toml::from_str(text).map_err(|e| toml_error(origin, text, e))?;
        check_version(cfg.format_version, origin)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for area in &mut cfg.areas {
            if area.case.is_relative() {
                area.case = dir.join(&area.case);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize stitch config: {e}")))
    }
}

/// Join the area cases into one interconnection.
pub fn stitch(config: &StitchConfig) -> Result<(PowerNetwork, AreaPartition)> {
    check_version(config.format_version, "stitch config")?;
    if config.areas.is_empty() {
        return Err(Error::Config("stitch config lists no areas".into()));
    }
    let mut seen = BTreeSet::new();
    for a in &config.areas {
        if !seen.insert(a.id) {
            return Err(Error::Config(format!("area {} listed twice", a.id)));
        }
    }

    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut generators = Vec::new();
    let mut local_ids: Vec<(usize, BTreeSet<usize>)> = Vec::new();

    for area in &config.areas {
        let net = parse_case(&area.case)?;
        let rescale = config.base_mva / net.base_mva();
        let ids: BTreeSet<usize> = net.buses().iter().map(|b| b.id).collect();
        for bus in net.buses() {
            buses.push(Bus {
                id: bus.id + area.offset,
                area: area.id,
                load_mw: bus.load_mw,
                is_boundary: false,
            });
        }
        for br in net.branches() {
            let mut limit = area.line_limit_mw.unwrap_or(br.limit_mw);
            if let Some(o) = config.line_limits.iter().find(|o| {
                o.area == area.id
                    && ((o.from_bus == br.from_bus && o.to_bus == br.to_bus)
                        || (o.from_bus == br.to_bus && o.to_bus == br.from_bus))
            }) {
                limit = o.limit_mw;
            }
            branches.push(Branch {
                from_bus: br.from_bus + area.offset,
                to_bus: br.to_bus + area.offset,
                reactance_pu: br.reactance_pu * rescale,
                limit_mw: limit,
                is_tie_line: false,
            });
        }
        for g in net.generators() {
            let mut g = g.clone();
            g.bus += area.offset;
            generators.push(g);
        }
        local_ids.push((area.id, ids));
    }

    for o in &config.line_limits {
        let Some((_, ids)) = local_ids.iter().find(|(a, _)| *a == o.area) else {
            return Err(Error::Config(format!("line limit names unknown area {}", o.area)));
        };
        if !ids.contains(&o.from_bus) || !ids.contains(&o.to_bus) {
            return Err(Error::Config(format!(
                "line limit {}-{} is not a line of area {}",
                o.from_bus, o.to_bus, o.area
            )));
        }
    }

    let global = |area: usize, bus: usize| -> Result<usize> {
        let pos = config.areas.iter().position(|a| a.id == area).ok_or_else(|| {
            Error::Config(format!("tie-line names unknown area {area}"))
        })?;
        if !local_ids[pos].1.contains(&bus) {
            return Err(Error::Config(format!(
                "tie-line endpoint bus {bus} does not exist in area {area}"
            )));
        }
        Ok(bus + config.areas[pos].offset)
    };
    for tie in &config.tie_lines {
        if tie.area_a == tie.area_b {
            return Err(Error::Config(format!(
                "tie-line {}-{} connects area {} to itself",
                tie.bus_a, tie.bus_b, tie.area_a
            )));
        }
        branches.push(Branch {
            from_bus: global(tie.area_a, tie.bus_a)?,
            to_bus: global(tie.area_b, tie.bus_b)?,
            reactance_pu: tie.reactance_pu.unwrap_or(config.default_reactance_pu),
            limit_mw: tie.limit_mw.unwrap_or(config.default_limit_mw),
            is_tie_line: true,
        });
    }

    let net = PowerNetwork::new(buses, branches, generators, config.base_mva)?;
    let part = AreaPartition::from_network(&net);
    Ok((net, part))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BidFile {
    format_version: u32,
    #[serde(default)]
    bids: Vec<InterfaceBid>,
}

/// Parse a bid book without checking it against a network.
pub fn bids_from_toml(text: &str, origin: &str) -> Result<BidBook> {
    let file: BidFile = toml::from_str(text).map_err(|e| toml_error(origin, text, e))?;
    check_version(file.format_version, origin)?;
    Ok(BidBook::new(file.bids))
}

pub fn bids_to_toml(book: &BidBook) -> Result<String> {
    let file = BidFile {
        format_version: FORMAT_VERSION,
        bids: book.bids.clone(),
    };
    toml::to_string(&file).map_err(|e| Error::Config(format!("cannot serialize bids: {e}")))
}

/// Read a bid book and validate it against the interconnection.
pub fn parse_bids(path: impl AsRef<Path>, net: &PowerNetwork, part: &AreaPartition) -> Result<BidBook> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let book = bids_from_toml(&text, &path.display().to_string())?;
    book.validate(net, part)?;
    Ok(book)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: u32,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Standard deviation of each real-time load as a fraction of its
    /// forecast.
    #[serde(default = "default_sigma")]
    pub load_sigma_fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Price weight applied to the generators of `weighted_area`.
    #[serde(default = "default_one")]
    pub w: f64,
    /// Defaults to the first area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted_area: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_dpi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_s_max: Option<f64>,
    /// Constant consumer utility added to each area's local surplus.
    #[serde(default)]
    pub consumer_utility: f64,
    /// Share of each bid price charged on the importing side under separate
    /// clearing.
    #[serde(default = "default_half")]
    pub split_ratio: f64,
    /// Price level around which separate clearing splits bids.
    #[serde(default)]
    pub reference_price: f64,
    /// One proxy bus per area for CTS; defaults to the lowest boundary bus.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proxies: Vec<BusRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub w_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dpi_grid: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            format_version: FORMAT_VERSION,
            n_samples: default_samples(),
            load_sigma_fraction: default_sigma(),
            rng_seed: 0,
            w: 1.0,
            weighted_area: None,
            uniform_dpi: None,
            uniform_s_max: None,
            consumer_utility: 0.0,
            split_ratio: 0.5,
            reference_price: 0.0,
            proxies: Vec::new(),
            w_grid: Vec::new(),
            dpi_grid: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| toml_error(origin, text, e))?;
        check_version(cfg.format_version, origin)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if !(self.load_sigma_fraction >= 0.0) {
            return Err(Error::Config("load_sigma_fraction must be non-negative".into()));
        }
        if !(self.w > 0.0) || !self.w.is_finite() {
            return Err(Error::Config(format!("w must be positive, got {}", self.w)));
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::Config("split_ratio must lie in [0, 1]".into()));
        }
        if self.w_grid.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("w_grid entries must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bid_book_round_trip() {
        let book = BidBook::new(vec![InterfaceBid {
            id: 1,
            sell_to: BusRef { area: 2, bus: 15 },
            buy_from: BusRef { area: 1, bus: 5 },
            dpi: 1.0,
            s_max: 30.0,
        }]);
        let text = bids_to_toml(&book).unwrap();
        assert_eq!(bids_from_toml(&text, "mem").unwrap(), book);
    }

    #[test]
    fn version_is_checked() {
        let err = bids_from_toml("format_version = 2\n", "v2.toml").unwrap_err();
        assert!(err.to_string().contains("format_version"));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        match bids_from_toml("format_version = 1\n[[bids]]\nid = \"x\"\n", "bad.toml") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn scenario_defaults() {
        let s = ScenarioConfig::from_toml("format_version = 1\n", "s.toml").unwrap();
        assert_eq!(s.n_samples, 100);
        assert_eq!(s.load_sigma_fraction, 0.05);
        assert!(ScenarioConfig::from_toml("format_version = 1\nn_samples = 0\n", "s").is_err());
    }
}
