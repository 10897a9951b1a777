//! The dispatch programs: joint economic dispatch, interface-bid clearing on
//! the exact boundary model, proxy-bus clearing, per-area real-time
//! dispatch, and separate per-area bid clearing.

mod clearing;
mod program;
mod realtime;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bids::BidBook;
use crate::error::{Error, Result};
use crate::netmodel::{build_susceptance, AreaPartition, PowerNetwork, SusceptanceBlocks};
use crate::solver::{InteriorPointSolver, KktResiduals};

pub use clearing::{Proxies, SeparateClearing, SeparateOutcome};
pub use program::TIE_BREAK;

/// Tolerance of the KKT audit applied to every returned solution.
pub const KKT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Jed,
    Cts,
    Gcts,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Jed => "JED",
            Mechanism::Cts => "CTS",
            Mechanism::Gcts => "GCTS",
        })
    }
}

/// Which program produced a [`ClearingSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramKind {
    Jed,
    Gcts,
    Cts,
    /// One area with its boundary angles held fixed.
    RealTime,
    /// One area with its net export held fixed at its proxy bus.
    ProxyRealTime,
    /// One area clearing bids on its own at a posted price.
    Separate,
}

/// Pairwise interchange between two areas in a proxy-bus clearing.
#[derive(Debug, Clone, PartialEq)]
pub struct Interchange {
    /// Area positions, `from < to`.
    pub from: usize,
    pub to: usize,
    /// Scheduled MW from `from` to `to`.
    pub scheduled_mw: f64,
    /// Sum of the tie limits, infinite when the areas share no tie.
    pub limit_mw: f64,
    /// Branch indices of the ties between the two areas.
    pub ties: Vec<usize>,
    /// Signed shadow price of the interface limit, $/MWh.
    pub price: f64,
}

/// Primal and dual values of one solved program. Vectors indexed by bus,
/// generator and branch cover the whole interconnection and hold zeros for
/// elements outside the program.
#[derive(Debug, Clone)]
pub struct ClearingSolution {
    pub kind: ProgramKind,
    /// Area position for single-area programs.
    pub area: Option<usize>,
    /// Bus indices the program models.
    pub buses: Vec<usize>,
    /// Generator indices the program dispatches.
    pub generators: Vec<usize>,
    pub dispatch_mw: Vec<f64>,
    pub cleared_mw: Vec<f64>,
    pub theta: Vec<f64>,
    /// Boundary angles in boundary-system order.
    pub theta_boundary: Vec<f64>,
    /// Loads the program balanced, per bus.
    pub loads_mw: Vec<f64>,
    pub lmp: Vec<f64>,
    pub flows_mw: Vec<f64>,
    /// Signed line shadow price: positive when the forward limit binds.
    pub line_price: Vec<f64>,
    /// Per branch, the limit used by the program (widened under relaxation).
    pub line_limit_mw: Vec<f64>,
    /// Duals of the boundary rows, boundary-system order; the reference
    /// boundary bus carries zero.
    pub boundary_prices: Vec<f64>,
    /// Sensitivity of the optimal cost to each fixed boundary angle,
    /// $/h per rad, boundary-system order.
    pub boundary_gradient: Vec<f64>,
    pub gen_lower_price: Vec<f64>,
    pub gen_upper_price: Vec<f64>,
    pub interchanges: Vec<Interchange>,
    /// Net export per area position.
    pub net_export_mw: Vec<f64>,
    pub internal_cost: f64,
    pub interface_cost: f64,
    pub objective: f64,
    /// Uniform line-limit widening applied to reach feasibility.
    pub relaxation_mw: Option<f64>,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

impl ClearingSolution {
    pub fn total_cost(&self) -> f64 {
        self.internal_cost + self.interface_cost
    }

    pub fn congestion_rent(&self, branches: impl IntoIterator<Item = usize>) -> f64 {
        branches
            .into_iter()
            .map(|k| self.flows_mw[k] * self.line_price[k])
            .sum()
    }

    /// Fail unless the KKT residuals are within `tol`.
    pub fn audit(&self, tol: f64) -> Result<()> {
        let worst = self.kkt.max();
        if worst.is_finite() && worst <= tol {
            Ok(())
        } else {
            Err(Error::Audit(format!(
                "{:?} solution violates KKT conditions: {:?}",
                self.kind, self.kkt
            )))
        }
    }
}

/// A network, its partition and the derived data every program needs.
#[derive(Debug, Clone)]
pub struct Market {
    pub net: PowerNetwork,
    pub part: AreaPartition,
    pub blocks: SusceptanceBlocks,
    pub(crate) solver: InteriorPointSolver,
    area_of_bus: Vec<usize>,
    area_buses: Vec<Vec<usize>>,
    area_generators: Vec<Vec<usize>>,
    internal_lines: Vec<Vec<usize>>,
    incident: Vec<Vec<usize>>,
}

impl Market {
    pub fn new(net: PowerNetwork, part: AreaPartition) -> Result<Self> {
        let blocks = build_susceptance(&net, &part)?;
        let n = net.num_buses();
        let mut area_of_bus = vec![0; n];
        let mut area_buses = vec![Vec::new(); part.num_areas()];
        for (k, bus) in net.buses().iter().enumerate() {
            let a = part
                .area_position(bus.area)
                .ok_or_else(|| Error::Structure(format!("bus {} has unknown area {}", bus.id, bus.area)))?;
            area_of_bus[k] = a;
            area_buses[a].push(k);
        }
        let mut area_generators = vec![Vec::new(); part.num_areas()];
        for (k, g) in net.generators().iter().enumerate() {
            let b = net.bus_index(g.bus).expect("validated");
            area_generators[area_of_bus[b]].push(k);
        }
        let mut internal_lines = vec![Vec::new(); part.num_areas()];
        let mut incident = vec![Vec::new(); n];
        for (k, br) in net.branches().iter().enumerate() {
            let a = net.bus_index(br.from_bus).expect("validated");
            let b = net.bus_index(br.to_bus).expect("validated");
            incident[a].push(k);
            incident[b].push(k);
            if area_of_bus[a] == area_of_bus[b] {
                internal_lines[area_of_bus[a]].push(k);
            }
        }
        Ok(Market {
            net,
            part,
            blocks,
            solver: InteriorPointSolver::default(),
            area_of_bus,
            area_buses,
            area_generators,
            internal_lines,
            incident,
        })
    }

    pub fn with_solver(mut self, solver: InteriorPointSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn forecast(&self) -> Vec<f64> {
        self.net.loads()
    }

    /// Area position of each bus index.
    pub fn area_of_bus(&self, bus: usize) -> usize {
        self.area_of_bus[bus]
    }

    /// Bus indices of one area, ascending.
    pub fn area_buses(&self, area: usize) -> &[usize] {
        &self.area_buses[area]
    }

    pub fn area_generators(&self, area: usize) -> &[usize] {
        &self.area_generators[area]
    }

    /// Branch indices with both ends in the area.
    pub fn internal_lines(&self, area: usize) -> &[usize] {
        &self.internal_lines[area]
    }

    /// Tie-lines with one end in the area.
    pub fn area_ties(&self, area: usize) -> Vec<usize> {
        self.part
            .tie_lines
            .iter()
            .copied()
            .filter(|&k| {
                let br = &self.net.branches()[k];
                let a = self.net.bus_index(br.from_bus).expect("validated");
                let b = self.net.bus_index(br.to_bus).expect("validated");
                self.area_of_bus[a] == area || self.area_of_bus[b] == area
            })
            .collect()
    }

    /// Bus index of the lowest bus id in an area.
    pub fn area_reference(&self, area: usize) -> usize {
        self.area_buses[area][0]
    }

    /// Boundary angles implied by cleared bids: the boundary-equivalent
    /// system solved for the injections `M·s`.
    pub fn boundary_angles(&self, book: &BidBook, cleared: &[f64]) -> Result<Vec<f64>> {
        let injections = self.boundary_injections(book, cleared)?;
        Ok(self.blocks.boundary_system.angles_from_injections(&injections))
    }

    /// `M·s` in boundary-system order.
    pub fn boundary_injections(&self, book: &BidBook, cleared: &[f64]) -> Result<Vec<f64>> {
        let sys = &self.blocks.boundary_system;
        let mut out = vec![0.0; sys.len()];
        for (bid, &s) in book.bids.iter().zip(cleared) {
            for (end, sign) in [(bid.buy_from, 1.0), (bid.sell_to, -1.0)] {
                let p = sys.buses.iter().position(|&b| b == end.bus).ok_or_else(|| {
                    Error::Config(format!("bid {} references non-boundary bus {}", bid.id, end.bus))
                })?;
                out[p] += sign * s;
            }
        }
        Ok(out)
    }

    pub(crate) fn check_loads(&self, loads: &[f64]) -> Result<()> {
        if loads.len() != self.net.num_buses() {
            return Err(Error::Config(format!(
                "{} loads given for {} buses",
                loads.len(),
                self.net.num_buses()
            )));
        }
        if let Some(k) = loads.iter().position(|d| !d.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite load at bus {}",
                self.net.buses()[k].id
            )));
        }
        Ok(())
    }
}

/// Joint dispatch of the whole interconnection at forecast loads.
pub fn solve_jed(net: &PowerNetwork, part: &AreaPartition) -> Result<ClearingSolution> {
    let m = Market::new(net.clone(), part.clone())?;
    m.solve_jed(&m.forecast())
}

/// Two-area interface-bid clearing at forecast loads.
pub fn solve_gcts(net: &PowerNetwork, part: &AreaPartition, book: &BidBook) -> Result<ClearingSolution> {
    if part.num_areas() != 2 {
        return Err(Error::Config(format!(
            "two-area clearing called on {} areas",
            part.num_areas()
        )));
    }
    solve_gcts_n_area(net, part, book)
}

/// Interface-bid clearing over any number of areas at forecast loads.
pub fn solve_gcts_n_area(net: &PowerNetwork, part: &AreaPartition, book: &BidBook) -> Result<ClearingSolution> {
    if part.num_areas() < 2 {
        return Err(Error::Config("interface-bid clearing needs at least two areas".into()));
    }
    let m = Market::new(net.clone(), part.clone())?;
    m.solve_gcts(book, &m.forecast())
}

/// Proxy-bus clearing at forecast loads.
pub fn solve_cts(
    net: &PowerNetwork,
    part: &AreaPartition,
    proxies: &Proxies,
    book: &BidBook,
) -> Result<ClearingSolution> {
    let m = Market::new(net.clone(), part.clone())?;
    m.solve_cts(book, proxies, &m.forecast())
}

/// Real-time dispatch of one area (by id) with boundary angles fixed.
pub fn solve_realtime(
    net: &PowerNetwork,
    part: &AreaPartition,
    area: usize,
    theta_boundary: &[f64],
    loads: &[f64],
) -> Result<ClearingSolution> {
    let m = Market::new(net.clone(), part.clone())?;
    let a = part
        .area_position(area)
        .ok_or_else(|| Error::Config(format!("unknown area {area}")))?;
    m.solve_realtime(a, theta_boundary, loads)
}
