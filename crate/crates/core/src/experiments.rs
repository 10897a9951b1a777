//! Study designs built on the market programs: price-weight and bid-price
//! sweeps, Monte Carlo real-time comparison, loop-flow audits and the
//! surplus comparison against separate clearing.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bids::BidBook;
use crate::caseio::{Cell, ScenarioConfig, Table, Tabular};
use crate::error::{Error, Result};
use crate::market::{ClearingSolution, Market, Mechanism, Proxies, SeparateClearing};
use crate::netmodel::{dc_flows, AreaPartition, PowerNetwork};
use crate::settlement::{local_surplus, SurplusReport};

/// Default uniform bid price and cap when a study has no bid book.
pub const DEFAULT_DPI: f64 = 0.1;
pub const DEFAULT_S_MAX: f64 = 100.0;

/// A network, its bids and the scenario settings of one study.
#[derive(Debug, Clone)]
pub struct Study {
    pub net: PowerNetwork,
    pub part: AreaPartition,
    /// Bids as configured, before scenario overrides.
    pub bids: BidBook,
    pub scenario: ScenarioConfig,
}

impl Study {
    /// A study without an explicit bid book trades both ways across every
    /// tie at the scenario's uniform price and cap.
    pub fn new(net: PowerNetwork, part: AreaPartition, bids: Option<BidBook>, scenario: ScenarioConfig) -> Result<Self> {
        scenario.validate()?;
        let bids = bids.unwrap_or_else(|| {
            BidBook::tie_pairs(
                &net,
                &part,
                scenario.uniform_dpi.unwrap_or(DEFAULT_DPI),
                scenario.uniform_s_max.unwrap_or(DEFAULT_S_MAX),
            )
        });
        bids.validate(&net, &part)?;
        if let Some(a) = scenario.weighted_area {
            if part.area_position(a).is_none() {
                return Err(Error::Config(format!("weighted area {a} is not in the network")));
            }
        }
        Ok(Study {
            net,
            part,
            bids,
            scenario,
        })
    }

    /// Bids with the scenario's uniform overrides applied.
    pub fn book(&self) -> BidBook {
        let mut book = self.bids.clone();
        for b in &mut book.bids {
            if let Some(dpi) = self.scenario.uniform_dpi {
                b.dpi = dpi;
            }
            if let Some(s_max) = self.scenario.uniform_s_max {
                b.s_max = s_max;
            }
        }
        book
    }

    pub fn weighted_area(&self) -> usize {
        self.scenario.weighted_area.unwrap_or(self.part.areas[0])
    }

    /// The market with the weighted area's costs scaled by `w`.
    pub fn market_at(&self, w: f64) -> Result<Market> {
        let net = self.net.with_area_cost_weight(self.weighted_area(), w);
        Market::new(net, self.part.clone())
    }

    pub fn market(&self) -> Result<Market> {
        self.market_at(self.scenario.w)
    }

    pub fn proxies(&self, m: &Market) -> Result<Proxies> {
        Proxies::from_refs(m, &self.scenario.proxies)
    }
}

/// Largest mismatch between tie flows from the boundary angles and those
/// implied by the cleared bids through the shift factors, per unit.
pub fn boundary_flow_residual(m: &Market, book: &BidBook, sol: &ClearingSolution) -> Result<f64> {
    let sys = &m.blocks.boundary_system;
    let injections = m.boundary_injections(book, &sol.cleared_mw)?;
    let s = sys.shift_factors();
    let predicted = &s * nalgebra::DVector::from_column_slice(&injections);
    let base = m.net.base_mva();
    Ok(sys
        .ties
        .iter()
        .enumerate()
        .map(|(t, &k)| (sol.flows_mw[k] - predicted[t]).abs() / base)
        .fold(0.0, f64::max))
}

/// One price weight of a clearing sweep.
#[derive(Debug, Clone)]
pub struct WeightPoint {
    pub w: f64,
    /// `None` when the clearing failed; the message says why.
    pub solution: Option<ClearingSolution>,
    pub error: Option<String>,
    /// MW cleared on bids selling into the weighted area.
    pub imports: f64,
    /// MW cleared on bids buying from the weighted area.
    pub exports: f64,
    pub boundary_residual_pu: f64,
}

#[derive(Debug, Clone)]
pub struct WeightSweep {
    pub bid_ids: Vec<usize>,
    /// Tie branch indices and their `(from, to)` bus ids.
    pub tie_branches: Vec<usize>,
    pub ties: Vec<(usize, usize)>,
    pub boundary_buses: Vec<usize>,
    pub points: Vec<WeightPoint>,
}

/// Clear the study's bids at each price weight.
pub fn run_w_sweep(study: &Study, ws: &[f64]) -> Result<WeightSweep> {
    let book = study.book();
    let area = study.weighted_area();
    let points = ws
        .par_iter()
        .map(|&w| -> Result<WeightPoint> {
            let m = study.market_at(w)?;
            match m.solve_gcts(&book, &m.forecast()) {
                Ok(sol) => {
                    let mut imports = 0.0;
                    let mut exports = 0.0;
                    for (bid, s) in book.bids.iter().zip(&sol.cleared_mw) {
                        if bid.sell_to.area == area {
                            imports += s;
                        } else if bid.buy_from.area == area {
                            exports += s;
                        }
                    }
                    let boundary_residual_pu = boundary_flow_residual(&m, &book, &sol)?;
                    Ok(WeightPoint {
                        w,
                        solution: Some(sol),
                        error: None,
                        imports,
                        exports,
                        boundary_residual_pu,
                    })
                }
                Err(e @ Error::Infeasible(_)) | Err(e @ Error::Numerical(_)) => Ok(WeightPoint {
                    w,
                    solution: None,
                    error: Some(e.to_string()),
                    imports: 0.0,
                    exports: 0.0,
                    boundary_residual_pu: 0.0,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let m = study.market()?;
    Ok(WeightSweep {
        bid_ids: book.bids.iter().map(|b| b.id).collect(),
        tie_branches: study.part.tie_lines.clone(),
        ties: study
            .part
            .tie_lines
            .iter()
            .map(|&k| {
                let br = &study.net.branches()[k];
                (br.from_bus, br.to_bus)
            })
            .collect(),
        boundary_buses: m.blocks.boundary_system.buses.clone(),
        points,
    })
}

impl Tabular for WeightSweep {
    fn to_table(&self) -> Table {
        let mut cols = vec!["w".to_string()];
        cols.extend(self.bid_ids.iter().map(|id| format!("s_{id}")));
        cols.extend(self.ties.iter().map(|(a, b)| format!("flow_{a}_{b}")));
        cols.extend(self.boundary_buses.iter().map(|b| format!("price_{b}")));
        cols.extend(
            ["imports", "exports", "internal_cost", "interface_cost", "total_cost", "boundary_residual_pu", "status"]
                .map(String::from),
        );
        let mut t = Table::new(cols);
        for p in &self.points {
            let mut row: Vec<Cell> = vec![p.w.into()];
            match &p.solution {
                Some(sol) => {
                    row.extend(sol.cleared_mw.iter().map(|&v| Cell::from(v)));
                    row.extend(self.tie_branches.iter().map(|&k| Cell::from(sol.flows_mw[k])));
                    row.extend(sol.boundary_prices.iter().map(|&v| Cell::from(v)));
                    row.extend([
                        p.imports.into(),
                        p.exports.into(),
                        sol.internal_cost.into(),
                        sol.interface_cost.into(),
                        sol.total_cost().into(),
                        p.boundary_residual_pu.into(),
                        "ok".into(),
                    ]);
                }
                None => {
                    let blanks = self.bid_ids.len() + self.ties.len() + self.boundary_buses.len() + 6;
                    row.extend(std::iter::repeat_n(Cell::Empty, blanks));
                    row.push(p.error.clone().unwrap_or_default().into());
                }
            }
            t.push(row);
        }
        t
    }
}

/// One point of a bid-price sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub w: f64,
    pub dpi: f64,
    /// Generation cost of the bid clearing, excluding bid charges.
    pub cost_gcts: f64,
    pub cost_jed: f64,
    pub gap: f64,
}

/// For each weight, clear a uniform-price book at each price and compare the
/// generation cost with joint dispatch.
pub fn run_dpi_sweep(study: &Study, ws: &[f64], dpis: &[f64]) -> Result<Vec<SweepPoint>> {
    let s_max = study.scenario.uniform_s_max.unwrap_or(DEFAULT_S_MAX);
    let base = study.book();
    let grid: Vec<(f64, f64)> = ws.iter().flat_map(|&w| dpis.iter().map(move |&d| (w, d))).collect();
    let jed: Vec<f64> = ws
        .par_iter()
        .map(|&w| {
            let m = study.market_at(w)?;
            Ok(m.solve_jed(&m.forecast())?.internal_cost)
        })
        .collect::<Result<_>>()?;
    grid.par_iter()
        .map(|&(w, dpi)| {
            let m = study.market_at(w)?;
            let book = base.uniform(dpi, s_max);
            let sol = m.solve_gcts(&book, &m.forecast())?;
            let cost_jed = jed[ws.iter().position(|&x| x == w).expect("grid weight")];
            Ok(SweepPoint {
                w,
                dpi,
                cost_gcts: sol.internal_cost,
                cost_jed,
                gap: sol.internal_cost - cost_jed,
            })
        })
        .collect()
}

/// Largest price at which the relative gap is within `tol`, scanning a
/// weight's points from the lowest price up; `None` if even the lowest
/// price misses.
pub fn convergence_threshold(points: &[SweepPoint], w: f64, tol: f64) -> Option<f64> {
    let mut pts: Vec<&SweepPoint> = points.iter().filter(|p| p.w == w).collect();
    pts.sort_by(|a, b| a.dpi.total_cmp(&b.dpi));
    let mut best = None;
    for p in pts {
        if p.gap <= tol * p.cost_jed.abs().max(1.0) {
            best = Some(p.dpi);
        } else {
            break;
        }
    }
    best
}

impl Tabular for Vec<SweepPoint> {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["w", "dpi", "cost_gcts", "cost_jed", "gap"]);
        for p in self {
            t.push(vec![p.w.into(), p.dpi.into(), p.cost_gcts.into(), p.cost_jed.into(), p.gap.into()]);
        }
        t
    }
}

/// Exact-flow check of one dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAudit {
    /// Full-network DC flows of the dispatch, MW per branch.
    pub exact_flows_mw: Vec<f64>,
    /// `(branch, (|flow| − limit)/limit)` for every overloaded branch.
    pub overflows: Vec<(usize, f64)>,
    /// `Σ|exact − scheduled| / max(Σ|scheduled|, Σ|exact|)` over all ties, %.
    pub tie_discrepancy_pct: f64,
    /// The same restricted to each area's ties, by area position.
    pub area_tie_discrepancy_pct: Vec<f64>,
}

impl FlowAudit {
    pub fn overflow_count(&self) -> usize {
        self.overflows.len()
    }

    pub fn mean_overflow_ratio(&self) -> Option<f64> {
        (!self.overflows.is_empty())
            .then(|| self.overflows.iter().map(|o| o.1).sum::<f64>() / self.overflows.len() as f64)
    }
}

/// Tie flows a mechanism's own model predicts, MW, in partition tie order.
/// Proxy clearing spreads each pairwise schedule over the pair's ties in
/// proportion to their limits.
pub fn scheduled_tie_flows(m: &Market, sol: &ClearingSolution) -> Vec<f64> {
    if sol.interchanges.is_empty() {
        return m.part.tie_lines.iter().map(|&k| sol.flows_mw[k]).collect();
    }
    m.part
        .tie_lines
        .iter()
        .map(|&k| {
            let br = &m.net.branches()[k];
            let from = m.area_of_bus(m.net.bus_index(br.from_bus).expect("validated"));
            for ic in &sol.interchanges {
                if ic.ties.contains(&k) {
                    let share = if ic.limit_mw.is_finite() && ic.limit_mw > 0.0 {
                        br.limit_mw / ic.limit_mw
                    } else {
                        1.0 / ic.ties.len() as f64
                    };
                    let sign = if from == ic.from { 1.0 } else { -1.0 };
                    return sign * share * ic.scheduled_mw;
                }
            }
            0.0
        })
        .collect()
}

fn discrepancy_pct(exact: &[f64], scheduled: &[f64]) -> f64 {
    let diff: f64 = exact.iter().zip(scheduled).map(|(a, b)| (a - b).abs()).sum();
    let scale = scheduled
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        .max(exact.iter().map(|v| v.abs()).sum::<f64>());
    if scale <= 1e-9 {
        0.0
    } else {
        100.0 * diff / scale
    }
}

/// Recompute the flows a dispatch actually causes on the full network and
/// compare them with the limits and with the scheduled tie flows.
pub fn audit_loop_flow(m: &Market, dispatch: &[f64], loads: &[f64], scheduled_ties: &[f64]) -> Result<FlowAudit> {
    let net = &m.net;
    let mut injection: Vec<f64> = loads.iter().map(|d| -d).collect();
    for (g, p) in net.generators().iter().zip(dispatch) {
        injection[net.bus_index(g.bus).expect("validated")] += p;
    }
    let theta = m.blocks.angles(&injection)?;
    let exact_flows_mw = dc_flows(net, &theta);
    let overflows = net
        .branches()
        .iter()
        .enumerate()
        .filter_map(|(k, br)| {
            let excess = exact_flows_mw[k].abs() - br.limit_mw;
            (br.limit_mw.is_finite() && excess > 1e-6 * br.limit_mw.max(1.0)).then(|| (k, excess / br.limit_mw))
        })
        .collect();
    let exact_ties: Vec<f64> = m.part.tie_lines.iter().map(|&k| exact_flows_mw[k]).collect();
    let tie_discrepancy_pct = discrepancy_pct(&exact_ties, scheduled_ties);
    let area_tie_discrepancy_pct = (0..m.part.num_areas())
        .map(|a| {
            let adjacent = m.area_ties(a);
            let (e, s): (Vec<f64>, Vec<f64>) = m
                .part
                .tie_lines
                .iter()
                .enumerate()
                .filter(|(_, k)| adjacent.contains(k))
                .map(|(t, _)| (exact_ties[t], scheduled_ties[t]))
                .unzip();
            discrepancy_pct(&e, &s)
        })
        .collect();
    Ok(FlowAudit {
        exact_flows_mw,
        overflows,
        tie_discrepancy_pct,
        area_tie_discrepancy_pct,
    })
}

/// Real-time loads for one scenario: independent normal draws around the
/// forecast, truncated at zero. Each scenario has its own generator stream
/// so draws do not depend on evaluation order.
pub fn sample_loads(forecast: &[f64], sigma_fraction: f64, seed: u64, scenario: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(scenario);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    forecast
        .iter()
        .map(|&d| {
            // Uniform on the open interval (0, 1).
            let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            let z = normal.inverse_cdf(u);
            let x = d + sigma_fraction * d.abs() * z;
            if d >= 0.0 {
                x.max(0.0)
            } else {
                x
            }
        })
        .collect()
}

/// Outcome of one mechanism in one real-time scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub mechanism: Mechanism,
    pub scenario: usize,
    /// Generation cost plus the look-ahead bid charges; `None` if infeasible.
    pub total_cost: Option<f64>,
    pub relaxed: bool,
    pub overflow_count: usize,
    pub overflow_ratios: Vec<f64>,
    pub tie_discrepancy_pct: f64,
}

/// One row of the mechanism comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub mechanism: Mechanism,
    /// Net import into the weighted area, MW.
    pub net_interchange_mw: f64,
    pub look_ahead_generation_cost: f64,
    /// Generation plus bid charges; not reported for joint dispatch.
    pub look_ahead_total_cost: Option<f64>,
    pub average_realtime_cost: f64,
    pub scenarios_with_overflow: usize,
    pub mean_overflowed_lines: f64,
    /// Mean over overloaded lines of the excess ratio, %.
    pub mean_overflow_ratio_pct: Option<f64>,
    pub look_ahead_tie_discrepancy_pct: f64,
    pub relaxed_scenarios: usize,
    pub failed_scenarios: usize,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub scenarios: Vec<Vec<ScenarioOutcome>>,
    /// Scenarios where bid clearing beat proxy clearing in real time.
    pub gcts_wins: Option<usize>,
}

struct LookAhead {
    mechanism: Mechanism,
    solution: ClearingSolution,
    scheduled_ties: Vec<f64>,
}

fn realtime_outcome(
    m: &Market,
    la: &LookAhead,
    proxies: &Proxies,
    loads: &[f64],
    scenario: usize,
) -> Result<ScenarioOutcome> {
    let na = m.part.num_areas();
    let mut dispatch = vec![0.0; m.net.generators().len()];
    let mut cost = la.solution.interface_cost;
    let mut relaxed = false;
    let result: Result<()> = (|| {
        match la.mechanism {
            Mechanism::Jed => {
                let s = m.solve_jed(loads)?;
                dispatch = s.dispatch_mw;
                cost = s.internal_cost;
            }
            Mechanism::Gcts => {
                for a in 0..na {
                    let s = m.solve_realtime(a, &la.solution.theta_boundary, loads)?;
                    relaxed |= s.relaxation_mw.is_some();
                    cost += s.internal_cost;
                    for &g in m.area_generators(a) {
                        dispatch[g] = s.dispatch_mw[g];
                    }
                }
            }
            Mechanism::Cts => {
                for a in 0..na {
                    let s = m.solve_proxy_realtime(a, proxies.buses[a], la.solution.net_export_mw[a], loads)?;
                    relaxed |= s.relaxation_mw.is_some();
                    cost += s.internal_cost;
                    for &g in m.area_generators(a) {
                        dispatch[g] = s.dispatch_mw[g];
                    }
                }
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => {
            let audit = audit_loop_flow(m, &dispatch, loads, &la.scheduled_ties)?;
            Ok(ScenarioOutcome {
                mechanism: la.mechanism,
                scenario,
                total_cost: Some(cost),
                relaxed,
                overflow_count: audit.overflow_count(),
                overflow_ratios: audit.overflows.iter().map(|o| o.1).collect(),
                tie_discrepancy_pct: audit.tie_discrepancy_pct,
            })
        }
        Err(Error::Infeasible(report)) => {
            log::warn!("scenario {scenario}, {}: {report}", la.mechanism);
            Ok(ScenarioOutcome {
                mechanism: la.mechanism,
                scenario,
                total_cost: None,
                relaxed,
                overflow_count: 0,
                overflow_ratios: Vec::new(),
                tie_discrepancy_pct: 0.0,
            })
        }
        Err(e) => Err(e),
    }
}

/// Clear each mechanism at forecast loads, then re-dispatch every area
/// against the same sampled real-time loads with each mechanism's
/// interchange held fixed. Joint dispatch is simply re-solved.
pub fn run_realtime_mc(study: &Study, mechanisms: &[Mechanism]) -> Result<Comparison> {
    let m = study.market()?;
    let book = study.book();
    let proxies = study.proxies(&m)?;
    let forecast = m.forecast();
    let looks = mechanisms
        .iter()
        .map(|&mech| {
            let solution = match mech {
                Mechanism::Jed => m.solve_jed(&forecast)?,
                Mechanism::Gcts => m.solve_gcts(&book, &forecast)?,
                Mechanism::Cts => m.solve_cts(&book, &proxies, &forecast)?,
            };
            let scheduled_ties = scheduled_tie_flows(&m, &solution);
            Ok(LookAhead {
                mechanism: mech,
                solution,
                scheduled_ties,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sc = &study.scenario;
    let scenarios: Vec<Vec<ScenarioOutcome>> = (0..sc.n_samples)
        .into_par_iter()
        .map(|i| {
            let loads = sample_loads(&forecast, sc.load_sigma_fraction, sc.rng_seed, i as u64);
            looks
                .iter()
                .map(|la| realtime_outcome(&m, la, &proxies, &loads, i))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let weighted = m
        .part
        .area_position(study.weighted_area())
        .expect("validated weighted area");
    let mut rows = Vec::new();
    for (j, la) in looks.iter().enumerate() {
        let outcomes: Vec<&ScenarioOutcome> = scenarios.iter().map(|s| &s[j]).collect();
        let costs: Vec<f64> = outcomes.iter().filter_map(|o| o.total_cost).collect();
        let ratios: Vec<f64> = outcomes.iter().flat_map(|o| o.overflow_ratios.iter().copied()).collect();
        let look_audit = audit_loop_flow(&m, &la.solution.dispatch_mw, &forecast, &la.scheduled_ties)?;
        rows.push(ComparisonRow {
            mechanism: la.mechanism,
            net_interchange_mw: -la.solution.net_export_mw[weighted],
            look_ahead_generation_cost: la.solution.internal_cost,
            look_ahead_total_cost: (la.mechanism != Mechanism::Jed).then(|| la.solution.total_cost()),
            average_realtime_cost: if costs.is_empty() {
                f64::NAN
            } else {
                costs.iter().sum::<f64>() / costs.len() as f64
            },
            scenarios_with_overflow: outcomes.iter().filter(|o| o.overflow_count > 0).count(),
            mean_overflowed_lines: outcomes.iter().map(|o| o.overflow_count as f64).sum::<f64>()
                / outcomes.len() as f64,
            mean_overflow_ratio_pct: (!ratios.is_empty())
                .then(|| 100.0 * ratios.iter().sum::<f64>() / ratios.len() as f64),
            look_ahead_tie_discrepancy_pct: look_audit.tie_discrepancy_pct,
            relaxed_scenarios: outcomes.iter().filter(|o| o.relaxed).count(),
            failed_scenarios: outcomes.iter().filter(|o| o.total_cost.is_none()).count(),
        });
    }
    let position = |mech| mechanisms.iter().position(|&x| x == mech);
    let gcts_wins = match (position(Mechanism::Gcts), position(Mechanism::Cts)) {
        (Some(g), Some(c)) => Some(
            scenarios
                .iter()
                .filter(|s| match (s[g].total_cost, s[c].total_cost) {
                    (Some(a), Some(b)) => a < b,
                    _ => false,
                })
                .count(),
        ),
        _ => None,
    };
    Ok(Comparison {
        rows,
        scenarios,
        gcts_wins,
    })
}

impl Tabular for Comparison {
    fn to_table(&self) -> Table {
        let mut t = Table::new([
            "Mechanism",
            "Net interchange (MW)",
            "Look-ahead generation cost ($/h)",
            "Look-ahead total cost ($/h)",
            "Average real-time total cost ($/h)",
            "Scenarios with overflows",
            "Overflowed lines per scenario",
            "Average overflow ratio (%)",
            "Tie-flow discrepancy (%)",
            "Relaxed scenarios",
            "Infeasible scenarios",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.mechanism.to_string().into(),
                r.net_interchange_mw.into(),
                r.look_ahead_generation_cost.into(),
                r.look_ahead_total_cost.into(),
                r.average_realtime_cost.into(),
                r.scenarios_with_overflow.into(),
                r.mean_overflowed_lines.into(),
                r.mean_overflow_ratio_pct.into(),
                r.look_ahead_tie_discrepancy_pct.into(),
                r.relaxed_scenarios.into(),
                r.failed_scenarios.into(),
            ]);
        }
        t
    }
}

/// Local surplus of every area under bid clearing and under separate
/// clearing, both evaluated by real-time dispatch at `loads`.
#[derive(Debug, Clone)]
pub struct SurplusComparison {
    pub joint: Vec<SurplusReport>,
    pub separate: Vec<SurplusReport>,
    pub joint_cleared: Vec<f64>,
    pub separate_cleared: Vec<f64>,
    /// Some real-time dispatch had to widen line limits, so its prices are
    /// not the areas' marginal costs.
    pub relaxed: bool,
}

pub fn compare_surplus(
    m: &Market,
    book: &BidBook,
    rule: &SeparateClearing,
    loads: &[f64],
    utility: f64,
) -> Result<SurplusComparison> {
    let forecast = m.forecast();
    let joint = m.solve_gcts(book, &forecast)?;
    let separate = m.solve_separate(book, rule, &forecast)?;
    let sep_theta = m.boundary_angles(book, &separate.cleared_mw)?;
    let mut relaxed = false;
    let mut evaluate = |theta: &[f64]| -> Result<Vec<SurplusReport>> {
        (0..m.part.num_areas())
            .map(|a| {
                let rt = m.solve_realtime(a, theta, loads)?;
                relaxed |= rt.relaxation_mw.is_some();
                Ok(local_surplus(m, a, &rt, utility))
            })
            .collect()
    };
    let joint_surplus = evaluate(&joint.theta_boundary)?;
    let separate_surplus = evaluate(&sep_theta)?;
    Ok(SurplusComparison {
        joint: joint_surplus,
        separate: separate_surplus,
        joint_cleared: joint.cleared_mw,
        separate_cleared: separate.cleared_mw,
        relaxed,
    })
}
