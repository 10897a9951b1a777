#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use gcts::bids::{BidBook, BusRef, InterfaceBid};
use gcts::caseio::{parse_bids, stitch, ScenarioConfig, StitchConfig};
use gcts::experiments::Study;
use gcts::market::Market;
use gcts::netmodel::{AreaPartition, Branch, Bus, CostCurve, Generator, PowerNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

/// A shipped interconnection with optional bids and scenario file.
pub fn study(stitch_cfg: &str, bids: Option<&str>, scenario: Option<&str>) -> Study {
    let cfg = StitchConfig::load(data(stitch_cfg)).unwrap();
    let (net, part) = stitch(&cfg).unwrap();
    let bids = bids.map(|b| parse_bids(data(b), &net, &part).unwrap());
    let scenario = scenario
        .map(|s| ScenarioConfig::load(data(s)).unwrap())
        .unwrap_or_default();
    Study::new(net, part, bids, scenario).unwrap()
}

/// The two-area interconnection with its shipped bid book at the uniform
/// price and cap of the scenario file.
pub fn two_area_uniform() -> Study {
    study(
        "configs/two_area.toml",
        Some("configs/two_area_bids.toml"),
        Some("configs/scenario.toml"),
    )
}

pub fn three_area() -> Study {
    study(
        "configs/three_area.toml",
        None,
        Some("configs/three_area_scenario.toml"),
    )
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub areas: usize,
    pub buses_per_area: (usize, usize),
    pub ties: usize,
    /// Range of internal line ratings, MW.
    pub limits: (f64, f64),
}

impl Shape {
    pub fn two_area(ties: usize) -> Self {
        Shape {
            areas: 2,
            buses_per_area: (4, 12),
            ties,
            limits: (60.0, 200.0),
        }
    }
}

/// A random connected interconnection. Bus ids run from 1 area by area;
/// every area can serve its own load, and costs differ between areas so
/// that trading pays.
pub fn random_network(seed: u64, shape: &Shape) -> (PowerNetwork, AreaPartition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut gens = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let line = |a, b, x, limit| Branch {
        from_bus: a,
        to_bus: b,
        reactance_pu: x,
        limit_mw: limit,
        is_tie_line: false,
    };
    let mut next_id = 1;
    for area in 1..=shape.areas {
        let n = rng.random_range(shape.buses_per_area.0..=shape.buses_per_area.1);
        let ids: Vec<usize> = (next_id..next_id + n).collect();
        next_id += n;
        let mut load = 0.0;
        for &id in &ids {
            let d = if rng.random_bool(0.8) { rng.random_range(5.0..40.0) } else { 0.0 };
            load += d;
            buses.push(Bus {
                id,
                area,
                load_mw: d,
                is_boundary: false,
            });
        }
        for k in 1..n {
            let parent = ids[rng.random_range(0..k)];
            let x = rng.random_range(0.05..0.3);
            branches.push(line(parent, ids[k], x, rng.random_range(shape.limits.0..shape.limits.1)));
        }
        for _ in 0..n / 3 {
            let a = ids[rng.random_range(0..n)];
            let b = ids[rng.random_range(0..n)];
            if a != b {
                let x = rng.random_range(0.05..0.3);
                branches.push(line(a, b, x, rng.random_range(shape.limits.0..shape.limits.1)));
            }
        }
        let level = rng.random_range(15.0..45.0);
        let count = rng.random_range(2..=3usize);
        for _ in 0..count {
            let bus = ids[rng.random_range(0..n)];
            gens.push(Generator {
                bus,
                g_min_mw: 0.0,
                g_max_mw: 1.6 * load / count as f64 + 20.0,
                cost: CostCurve::quadratic(0.0, level + rng.random_range(-5.0..5.0), rng.random_range(0.01..0.1)),
            });
        }
        members.push(ids);
    }
    let mut pairs = Vec::new();
    for t in 0..shape.ties {
        // A chain through the areas first so the interconnection is
        // connected, then random pairs.
        let (a, b) = if t + 1 < shape.areas {
            (t, t + 1)
        } else {
            let a = rng.random_range(0..shape.areas);
            let mut b = rng.random_range(0..shape.areas - 1);
            if b >= a {
                b += 1;
            }
            (a.min(b), a.max(b))
        };
        let u = members[a][rng.random_range(0..members[a].len())];
        let v = members[b][rng.random_range(0..members[b].len())];
        if pairs.contains(&(u, v)) {
            continue;
        }
        pairs.push((u, v));
        branches.push(line(u, v, rng.random_range(0.05..0.3), rng.random_range(40.0..120.0)));
    }
    let net = PowerNetwork::new(buses, branches, gens, 100.0).unwrap();
    let part = AreaPartition::from_network(&net);
    (net, part)
}

/// One bid in each direction across every pair of boundary buses in
/// different areas.
pub fn all_pairs_book(net: &PowerNetwork, part: &AreaPartition, dpi: f64, s_max: f64) -> BidBook {
    let refs: Vec<BusRef> = part
        .all_boundary_buses()
        .into_iter()
        .map(|bus| BusRef {
            area: net.bus(bus).unwrap().area,
            bus,
        })
        .collect();
    let mut bids = Vec::new();
    for a in &refs {
        for b in &refs {
            if a.area != b.area {
                bids.push(InterfaceBid {
                    id: bids.len() + 1,
                    sell_to: *a,
                    buy_from: *b,
                    dpi,
                    s_max,
                });
            }
        }
    }
    BidBook::new(bids)
}

/// Random instances that joint dispatch can serve, in seed order.
pub fn feasible_markets(first_seed: u64, count: usize, shape: &Shape) -> Vec<(u64, Market)> {
    let mut out = Vec::new();
    let mut seed = first_seed;
    while out.len() < count {
        let (net, part) = random_network(seed, shape);
        if let Ok(m) = Market::new(net, part) {
            if m.solve_jed(&m.forecast()).is_ok() {
                out.push((seed, m));
            }
        }
        seed += 1;
        assert!(seed < first_seed + 20 * count as u64 + 100, "too few feasible instances");
    }
    out
}
