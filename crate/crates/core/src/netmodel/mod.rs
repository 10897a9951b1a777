//! DC network model of a multi-area interconnection.
//!
//! All public quantities are in MW and radians. Susceptances are kept in per
//! unit on the network's MVA base, so an injection vector in MW equals
//! `base_mva · B · θ`.

mod susceptance;

pub use susceptance::{
    build_susceptance, dc_flows, kron_reduce, BoundaryEquivalent, BoundarySystem, SusceptanceBlocks,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BASE_MVA: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub area: usize,
    /// Forecast load.
    pub load_mw: f64,
    pub is_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub reactance_pu: f64,
    pub limit_mw: f64,
    pub is_tie_line: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Linear,
    Quadratic,
}

/// `c0 + c1·g + c2·g²` in $/h with `g` in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub kind: CostKind,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl CostCurve {
    pub fn linear(c0: f64, c1: f64) -> Self {
        CostCurve {
            kind: CostKind::Linear,
            c0,
            c1,
            c2: 0.0,
        }
    }

    pub fn quadratic(c0: f64, c1: f64, c2: f64) -> Self {
        CostCurve {
            kind: if c2 == 0.0 {
                CostKind::Linear
            } else {
                CostKind::Quadratic
            },
            c0,
            c1,
            c2,
        }
    }

    pub fn eval(&self, g: f64) -> f64 {
        self.c0 + self.c1 * g + self.c2 * g * g
    }

    pub fn marginal(&self, g: f64) -> f64 {
        self.c1 + 2.0 * self.c2 * g
    }

    /// Multiply the price-bearing coefficients by `w`, leaving `c0` alone.
    pub fn weighted(&self, w: f64) -> Self {
        CostCurve {
            c1: self.c1 * w,
            c2: self.c2 * w,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub g_min_mw: f64,
    pub g_max_mw: f64,
    pub cost: CostCurve,
}

/// Buses sorted by id, branches with parallel circuits merged, and the tie
/// and boundary flags derived from bus areas.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    base_mva: f64,
    index: BTreeMap<usize, usize>,
}

impl PowerNetwork {
    pub fn new(
        mut buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        base_mva: f64,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::Structure(format!("base MVA must be positive, got {base_mva}")));
        }
        buses.sort_by_key(|b| b.id);
        let mut index = BTreeMap::new();
        for (k, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(Error::Structure(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.load_mw.is_finite()) {
                return Err(Error::Structure(format!("bus {} has a non-finite load", bus.id)));
            }
        }
        if generators.is_empty() {
            return Err(Error::Structure("network has no generators".into()));
        }
        for g in &generators {
            if !index.contains_key(&g.bus) {
                return Err(Error::Structure(format!("generator at unknown bus {}", g.bus)));
            }
            if !(g.g_min_mw <= g.g_max_mw) {
                return Err(Error::Structure(format!(
                    "generator at bus {} has g_min {} above g_max {}",
                    g.bus, g.g_min_mw, g.g_max_mw
                )));
            }
            if !(g.cost.c2 >= 0.0) || !g.cost.c1.is_finite() || !g.cost.c0.is_finite() {
                return Err(Error::Structure(format!(
                    "generator at bus {} has a non-convex cost curve",
                    g.bus
                )));
            }
        }

        // Merge parallel circuits: susceptances and limits add.
        let mut merged: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for br in &branches {
            for end in [br.from_bus, br.to_bus] {
                if !index.contains_key(&end) {
                    return Err(Error::Structure(format!(
                        "branch {}-{} references unknown bus {end}",
                        br.from_bus, br.to_bus
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Structure(format!("branch {0}-{0} is a self loop", br.from_bus)));
            }
            if !(br.reactance_pu > 0.0) || !br.reactance_pu.is_finite() {
                return Err(Error::Structure(format!(
                    "branch {}-{} has non-positive reactance {}",
                    br.from_bus, br.to_bus, br.reactance_pu
                )));
            }
            if !(br.limit_mw > 0.0) {
                return Err(Error::Structure(format!(
                    "branch {}-{} has non-positive limit {}",
                    br.from_bus, br.to_bus, br.limit_mw
                )));
            }
            let key = (br.from_bus.min(br.to_bus), br.from_bus.max(br.to_bus));
            let entry = merged.entry(key).or_insert((0.0, 0.0));
            entry.0 += 1.0 / br.reactance_pu;
            entry.1 += br.limit_mw;
        }

        let area_of = |id: usize| buses[index[&id]].area;
        let branches: Vec<Branch> = merged
            .into_iter()
            .map(|((a, b), (susceptance, limit))| Branch {
                from_bus: a,
                to_bus: b,
                reactance_pu: 1.0 / susceptance,
                limit_mw: limit,
                is_tie_line: area_of(a) != area_of(b),
            })
            .collect();

        let mut boundary = BTreeSet::new();
        for br in branches.iter().filter(|b| b.is_tie_line) {
            boundary.insert(br.from_bus);
            boundary.insert(br.to_bus);
        }
        for bus in &mut buses {
            bus.is_boundary = boundary.contains(&bus.id);
        }

        Ok(PowerNetwork {
            buses,
            branches,
            generators,
            base_mva,
            index,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Position of a bus id in [`PowerNetwork::buses`].
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.bus_index(id).map(|k| &self.buses[k])
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.load_mw).collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load_mw).sum()
    }

    /// Copy with every generator in `area` re-priced by `w`.
    pub fn with_area_cost_weight(&self, area: usize, w: f64) -> Self {
        let mut net = self.clone();
        for g in &mut net.generators {
            if self.buses[self.index[&g.bus]].area == area {
                g.cost = g.cost.weighted(w);
            }
        }
        net
    }

    /// Copy with the forecast loads replaced (indexed like `buses()`).
    pub fn with_loads(&self, loads: &[f64]) -> Result<Self> {
        if loads.len() != self.buses.len() {
            return Err(Error::Structure(format!(
                "expected {} loads, got {}",
                self.buses.len(),
                loads.len()
            )));
        }
        let mut net = self.clone();
        for (bus, &d) in net.buses.iter_mut().zip(loads) {
            bus.load_mw = d;
        }
        Ok(net)
    }

    /// Generation cost of a dispatch vector in generator order.
    pub fn generation_cost(&self, dispatch: &[f64]) -> f64 {
        self.generators
            .iter()
            .zip(dispatch)
            .map(|(g, &p)| g.cost.eval(p))
            .sum()
    }
}

/// Area membership and the ordered index sets that define the block
/// structure of the nodal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaPartition {
    pub areas: Vec<usize>,
    /// Boundary bus ids per area, sorted, aligned with `areas`.
    pub boundary_buses: Vec<Vec<usize>>,
    /// Interior bus ids per area, sorted, aligned with `areas`.
    pub interior_buses: Vec<Vec<usize>>,
    /// Indices into `PowerNetwork::branches()` of the tie-lines.
    pub tie_lines: Vec<usize>,
}

impl AreaPartition {
    pub fn from_network(net: &PowerNetwork) -> Self {
        let areas: Vec<usize> = net
            .buses()
            .iter()
            .map(|b| b.area)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut boundary_buses = vec![Vec::new(); areas.len()];
        let mut interior_buses = vec![Vec::new(); areas.len()];
        for bus in net.buses() {
            let k = areas.binary_search(&bus.area).expect("area listed");
            if bus.is_boundary {
                boundary_buses[k].push(bus.id);
            } else {
                interior_buses[k].push(bus.id);
            }
        }
        let tie_lines = net
            .branches()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_tie_line)
            .map(|(k, _)| k)
            .collect();
        AreaPartition {
            areas,
            boundary_buses,
            interior_buses,
            tie_lines,
        }
    }

    pub fn num_areas(&self) -> usize {
        self.areas.len()
    }

    /// Position of an area id in `areas`.
    pub fn area_position(&self, area: usize) -> Option<usize> {
        self.areas.iter().position(|&a| a == area)
    }

    /// All boundary buses, area by area.
    pub fn all_boundary_buses(&self) -> Vec<usize> {
        self.boundary_buses.iter().flatten().copied().collect()
    }

    /// Position of a boundary bus in [`AreaPartition::all_boundary_buses`].
    pub fn boundary_position(&self, bus: usize) -> Option<usize> {
        self.all_boundary_buses().iter().position(|&b| b == bus)
    }

    /// Reference bus for full-network angles: lowest id in the first area.
    pub fn angle_reference(&self) -> usize {
        let k = 0;
        let first_boundary = self.boundary_buses[k].first().copied();
        let first_interior = self.interior_buses[k].first().copied();
        match (first_boundary, first_interior) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("areas are derived from buses"),
        }
    }

    /// Reference for boundary-equivalent systems: lowest boundary bus of the
    /// first area that has one.
    pub fn boundary_reference(&self) -> Option<usize> {
        self.boundary_buses.iter().find_map(|b| b.first().copied())
    }
}
