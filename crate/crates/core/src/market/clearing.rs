use crate::bids::{BidBook, BusRef};
use crate::error::{Error, Result};
use crate::netmodel::PowerNetwork;

use super::program::{solve_relaxing, Angle, Limits, Program, Solved};
use super::{ClearingSolution, Interchange, Market, ProgramKind};

/// One proxy bus id per area position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proxies {
    pub buses: Vec<usize>,
}

impl Proxies {
    /// Lowest boundary bus of each area, or its lowest bus when it has none.
    pub fn default_for(m: &Market) -> Self {
        let buses = (0..m.part.num_areas())
            .map(|a| {
                m.part.boundary_buses[a]
                    .first()
                    .copied()
                    .unwrap_or_else(|| m.net.buses()[m.area_reference(a)].id)
            })
            .collect();
        Proxies { buses }
    }

    /// Proxies from explicit references; areas not listed take the default.
    pub fn from_refs(m: &Market, refs: &[BusRef]) -> Result<Self> {
        let mut out = Self::default_for(m);
        for r in refs {
            let a = m
                .part
                .area_position(r.area)
                .ok_or_else(|| Error::Config(format!("proxy names unknown area {}", r.area)))?;
            match m.net.bus(r.bus) {
                Some(b) if b.area == r.area => out.buses[a] = r.bus,
                Some(b) => {
                    return Err(Error::Config(format!(
                        "proxy bus {} is in area {}, not area {}",
                        r.bus, b.area, r.area
                    )))
                }
                None => return Err(Error::Config(format!("proxy bus {} is not in the network", r.bus))),
            }
        }
        Ok(out)
    }

    fn validate(&self, m: &Market) -> Result<()> {
        if self.buses.len() != m.part.num_areas() {
            return Err(Error::Config(format!(
                "{} proxies for {} areas",
                self.buses.len(),
                m.part.num_areas()
            )));
        }
        for (a, &id) in self.buses.iter().enumerate() {
            match m.net.bus_index(id) {
                Some(k) if m.area_of_bus(k) == a => {}
                _ => {
                    return Err(Error::Config(format!(
                        "proxy bus {id} is not in area {}",
                        m.part.areas[a]
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Price split for separate per-area clearing: the importing area pays
/// `reference_price + split_ratio·dpi` per MW, the exporting area is paid
/// `reference_price − (1 − split_ratio)·dpi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparateClearing {
    pub split_ratio: f64,
    pub reference_price: f64,
}

impl Default for SeparateClearing {
    fn default() -> Self {
        SeparateClearing {
            split_ratio: 0.5,
            reference_price: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeparateOutcome {
    /// Per bid, the smaller of the two areas' cleared quantities.
    pub cleared_mw: Vec<f64>,
    /// Each area's own clearing, by area position.
    pub areas: Vec<ClearingSolution>,
}

/// Area pair, ties, summed rating, `(bid variable, direction)` terms and
/// the forward and reverse rows.
type InterfaceRows = (usize, usize, Vec<usize>, f64, Vec<(usize, f64)>, Option<(usize, usize)>);

/// `+1` when the bid exports from the area, `−1` when it imports, else 0.
fn export_sign(book: &BidBook, j: usize, area_id: usize) -> f64 {
    let bid = &book.bids[j];
    if bid.buy_from.area == area_id {
        1.0
    } else if bid.sell_to.area == area_id {
        -1.0
    } else {
        0.0
    }
}

fn line_flow(net: &PowerNetwork, k: usize, theta: &[f64]) -> f64 {
    let br = &net.branches()[k];
    let a = net.bus_index(br.from_bus).expect("validated");
    let b = net.bus_index(br.to_bus).expect("validated");
    net.base_mva() * (theta[a] - theta[b]) / br.reactance_pu
}

/// Read a solved program back into network-indexed vectors.
pub(crate) fn assemble(
    p: &Program<'_>,
    solved: Solved,
    kind: ProgramKind,
    area: Option<usize>,
    loads: &[f64],
    bid_prices: &[f64],
    relaxation_mw: Option<f64>,
) -> ClearingSolution {
    let m = p.m;
    let net = &m.net;
    let sol = &solved.sol;
    let x = &sol.x;
    let theta = p.angles(x);

    let buses: Vec<usize> = (0..net.num_buses()).filter(|&k| p.angle[k] != Angle::Absent).collect();
    let generators: Vec<usize> = (0..p.gen_var.len()).filter(|&k| p.gen_var[k].is_some()).collect();
    let mut dispatch_mw = vec![0.0; p.gen_var.len()];
    let mut gen_lower_price = vec![0.0; p.gen_var.len()];
    let mut gen_upper_price = vec![0.0; p.gen_var.len()];
    let mut internal_cost = 0.0;
    for &k in &generators {
        let v = p.gen_var[k].expect("listed");
        dispatch_mw[k] = x[v];
        gen_lower_price[k] = sol.lower_duals[v];
        gen_upper_price[k] = sol.upper_duals[v];
        internal_cost += net.generators()[k].cost.eval(x[v]);
    }
    let cleared_mw: Vec<f64> = p.bid_var.iter().map(|v| v.map_or(0.0, |v| x[v])).collect();
    let interface_cost = cleared_mw.iter().zip(bid_prices).map(|(s, c)| s * c).sum();

    let lmp = p
        .balance_row
        .iter()
        .map(|r| r.map_or(0.0, |r| -sol.eq_duals[r]))
        .collect();

    let widen = match p.limits {
        Limits::Widened(t) => t,
        _ => 0.0,
    };
    let nbr = net.branches().len();
    let mut flows_mw = vec![0.0; nbr];
    let mut line_price = vec![0.0; nbr];
    let mut line_limit_mw = vec![0.0; nbr];
    for k in 0..nbr {
        let br = &net.branches()[k];
        let a = net.bus_index(br.from_bus).expect("validated");
        let b = net.bus_index(br.to_bus).expect("validated");
        if p.angle[a] != Angle::Absent && p.angle[b] != Angle::Absent {
            flows_mw[k] = line_flow(net, k, &theta);
        }
        line_limit_mw[k] = br.limit_mw;
        if let Some((plus, minus)) = p.line_rows[k] {
            line_price[k] = sol.ineq_duals[plus] - sol.ineq_duals[minus];
            line_limit_mw[k] = br.limit_mw + widen;
        }
    }

    let sys = &m.blocks.boundary_system;
    let theta_boundary = sys
        .buses
        .iter()
        .map(|&id| theta[net.bus_index(id).expect("validated")])
        .collect();
    let grad = p.fixed_angle_gradient(sol);
    let boundary_gradient = sys
        .buses
        .iter()
        .map(|&id| grad[net.bus_index(id).expect("validated")])
        .collect();

    // Net export from tie flows where the program sees both ends.
    let mut net_export_mw = vec![0.0; m.part.num_areas()];
    for &k in &m.part.tie_lines {
        let br = &net.branches()[k];
        let a = net.bus_index(br.from_bus).expect("validated");
        let b = net.bus_index(br.to_bus).expect("validated");
        net_export_mw[m.area_of_bus(a)] += flows_mw[k];
        net_export_mw[m.area_of_bus(b)] -= flows_mw[k];
    }

    ClearingSolution {
        kind,
        area,
        buses,
        generators,
        dispatch_mw,
        cleared_mw,
        theta,
        theta_boundary,
        loads_mw: loads.to_vec(),
        lmp,
        flows_mw,
        line_price,
        line_limit_mw,
        boundary_prices: Vec::new(),
        boundary_gradient,
        gen_lower_price,
        gen_upper_price,
        interchanges: Vec::new(),
        net_export_mw,
        internal_cost,
        interface_cost,
        objective: sol.objective,
        relaxation_mw,
        kkt: solved.kkt,
        iterations: sol.iterations,
    }
}

impl Market {
    /// Exact full-network program; with a bid book the boundary injections
    /// are tied to the cleared bids.
    fn full_network_program(&self, book: Option<&BidBook>, loads: &[f64]) -> Result<Program<'_>> {
        let name = if book.is_some() { "interface-bid clearing" } else { "joint dispatch" };
        let mut p = Program::new(self, name, Limits::Hard);
        let reference = self.blocks.angle_reference();
        for k in 0..self.net.num_buses() {
            p.angle_var(k, k == reference);
        }
        p.add_generators(0..self.net.generators().len());
        if let Some(book) = book {
            p.add_bids(book, |_| true, |j| book.bids[j].dpi);
        }
        for k in 0..self.net.num_buses() {
            p.add_balance(k, &self.incident[k], Vec::new(), loads[k])?;
        }
        for k in 0..self.net.branches().len() {
            p.add_line(k)?;
        }
        if let Some(book) = book {
            let sys = &self.blocks.boundary_system;
            let base = self.net.base_mva();
            let cols: Vec<Vec<(usize, f64)>> = (0..sys.len())
                .map(|r| {
                    let id = sys.buses[r];
                    book.bids
                        .iter()
                        .enumerate()
                        .filter_map(|(j, bid)| {
                            let v = p.bid_var[j]?;
                            let mut c = 0.0;
                            if bid.buy_from.bus == id {
                                c -= 1.0;
                            }
                            if bid.sell_to.bus == id {
                                c += 1.0;
                            }
                            (c != 0.0).then_some((v, c))
                        })
                        .collect()
                })
                .collect();
            for r in 0..sys.len() {
                if r == sys.reference {
                    continue;
                }
                let terms: Vec<(usize, f64)> = (0..sys.len())
                    .filter(|&c| sys.matrix[(r, c)] != 0.0)
                    .map(|c| {
                        let k = self.net.bus_index(sys.buses[c]).expect("validated");
                        (k, base * sys.matrix[(r, c)])
                    })
                    .collect();
                p.add_eq(format!("boundary[{}]", sys.buses[r]), &terms, cols[r].clone(), 0.0)?;
            }
        }
        Ok(p)
    }

    /// Joint economic dispatch of the whole interconnection.
    pub fn solve_jed(&self, loads: &[f64]) -> Result<ClearingSolution> {
        self.check_loads(loads)?;
        let p = self.full_network_program(None, loads)?;
        let solved = p.solve()?;
        Ok(assemble(&p, solved, ProgramKind::Jed, None, loads, &[], None))
    }

    /// Interface-bid clearing on the exact boundary model, any number of
    /// areas.
    pub fn solve_gcts(&self, book: &BidBook, loads: &[f64]) -> Result<ClearingSolution> {
        self.check_loads(loads)?;
        book.validate(&self.net, &self.part)?;
        let p = self.full_network_program(Some(book), loads)?;
        let solved = p.solve()?;
        let sys = &self.blocks.boundary_system;
        // Boundary rows follow the balance and reference rows in order.
        let first = p.qp.equalities.len() - sys.len().saturating_sub(1);
        let mut prices = vec![0.0; sys.len()];
        let mut row = first;
        for (r, price) in prices.iter_mut().enumerate() {
            if r == sys.reference {
                continue;
            }
            *price = solved.sol.eq_duals[row];
            row += 1;
        }
        let dpi: Vec<f64> = book.bids.iter().map(|b| b.dpi).collect();
        let mut out = assemble(&p, solved, ProgramKind::Gcts, None, loads, &dpi, None);
        out.boundary_prices = prices;
        Ok(out)
    }

    /// Rows capping the net scheduled interchange of every area pair by
    /// the summed rating of the ties between them, restricted to pairs
    /// involving `only` when given.
    fn add_interfaces(&self, p: &mut Program<'_>, book: &BidBook, only: Option<usize>) -> Vec<InterfaceRows> {
        let na = self.part.num_areas();
        let mut pairs = Vec::new();
        for a in 0..na {
            for b in a + 1..na {
                if only.is_some_and(|o| o != a && o != b) {
                    continue;
                }
                let ties: Vec<usize> = self
                    .part
                    .tie_lines
                    .iter()
                    .copied()
                    .filter(|&k| {
                        let br = &self.net.branches()[k];
                        let x = self.area_of_bus(self.net.bus_index(br.from_bus).expect("validated"));
                        let y = self.area_of_bus(self.net.bus_index(br.to_bus).expect("validated"));
                        (x == a && y == b) || (x == b && y == a)
                    })
                    .collect();
                let coeffs: Vec<(usize, f64)> = book
                    .bids
                    .iter()
                    .enumerate()
                    .filter_map(|(j, bid)| {
                        let (ida, idb) = (self.part.areas[a], self.part.areas[b]);
                        let c = if bid.buy_from.area == ida && bid.sell_to.area == idb {
                            1.0
                        } else if bid.buy_from.area == idb && bid.sell_to.area == ida {
                            -1.0
                        } else {
                            return None;
                        };
                        Some((p.bid_var[j]?, c))
                    })
                    .collect();
                // Ratings of zero or less are unlimited.
                let limit: f64 = if ties.is_empty() || ties.iter().any(|&k| self.net.branches()[k].limit_mw <= 0.0) {
                    f64::INFINITY
                } else {
                    ties.iter().map(|&k| self.net.branches()[k].limit_mw).sum()
                };
                let rows = if limit.is_finite() && !coeffs.is_empty() {
                    let label = format!("interface {}-{}", self.part.areas[a], self.part.areas[b]);
                    let up = p.qp.add_le(format!("{label} forward"), coeffs.clone(), limit);
                    let down = p.qp.add_le(
                        format!("{label} reverse"),
                        coeffs.iter().map(|&(v, c)| (v, -c)).collect(),
                        limit,
                    );
                    p.le_fixed.push(Vec::new());
                    p.le_fixed.push(Vec::new());
                    Some((up, down))
                } else {
                    None
                };
                pairs.push((a, b, ties, limit, coeffs, rows));
            }
        }
        pairs
    }

    /// Proxy-bus clearing: each area sees the bids only as a net injection
    /// at its proxy bus, ties are replaced by pairwise interface limits.
    pub fn solve_cts(&self, book: &BidBook, proxies: &Proxies, loads: &[f64]) -> Result<ClearingSolution> {
        self.check_loads(loads)?;
        book.validate(&self.net, &self.part)?;
        proxies.validate(self)?;
        let mut p = Program::new(self, "proxy-bus clearing", Limits::Hard);
        let na = self.part.num_areas();
        for a in 0..na {
            let reference = self.area_reference(a);
            for &k in self.area_buses(a) {
                p.angle_var(k, k == reference);
            }
        }
        p.add_generators(0..self.net.generators().len());
        p.add_bids(book, |_| true, |j| book.bids[j].dpi);
        for a in 0..na {
            let area_id = self.part.areas[a];
            let proxy = self.net.bus_index(proxies.buses[a]).expect("validated");
            let internal: Vec<usize> = self.internal_lines(a).to_vec();
            for &k in self.area_buses(a) {
                let lines: Vec<usize> = self.incident[k]
                    .iter()
                    .copied()
                    .filter(|l| internal.contains(l))
                    .collect();
                let extra = if k == proxy {
                    (0..book.len())
                        .filter_map(|j| {
                            let e = export_sign(book, j, area_id);
                            (e != 0.0).then(|| (p.bid_var[j].expect("all bids"), e))
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                p.add_balance(k, &lines, extra, loads[k])?;
            }
            for k in internal {
                p.add_line(k)?;
            }
        }

        let pairs = self.add_interfaces(&mut p, book, None);

        let solved = p.solve()?;
        let mut interchanges = Vec::new();
        for (a, b, ties, limit_mw, coeffs, rows) in pairs {
            let scheduled_mw = coeffs.iter().map(|&(v, c)| c * solved.sol.x[v]).sum();
            let price = rows.map_or(0.0, |(u, d)| solved.sol.ineq_duals[u] - solved.sol.ineq_duals[d]);
            interchanges.push(Interchange {
                from: a,
                to: b,
                scheduled_mw,
                limit_mw,
                ties,
                price,
            });
        }
        let dpi: Vec<f64> = book.bids.iter().map(|b| b.dpi).collect();
        let mut out = assemble(&p, solved, ProgramKind::Cts, None, loads, &dpi, None);
        out.net_export_mw = (0..na)
            .map(|a| {
                let id = self.part.areas[a];
                (0..book.len()).map(|j| export_sign(book, j, id) * out.cleared_mw[j]).sum()
            })
            .collect();
        out.interchanges = interchanges;
        Ok(out)
    }

    /// Each area clears the bids touching it on its own, at its side of the
    /// split price; a bid goes through at the smaller of the two amounts.
    pub fn solve_separate(&self, book: &BidBook, rule: &SeparateClearing, loads: &[f64]) -> Result<SeparateOutcome> {
        self.check_loads(loads)?;
        book.validate(&self.net, &self.part)?;
        if !(0.0..=1.0).contains(&rule.split_ratio) {
            return Err(Error::Config(format!("split ratio {} outside [0, 1]", rule.split_ratio)));
        }
        let mut areas = Vec::new();
        let mut cleared_mw = vec![f64::INFINITY; book.len()];
        for a in 0..self.part.num_areas() {
            let id = self.part.areas[a];
            let price: Vec<f64> = (0..book.len())
                .map(|j| match export_sign(book, j, id) {
                    e if e > 0.0 => -rule.reference_price + (1.0 - rule.split_ratio) * book.bids[j].dpi,
                    e if e < 0.0 => rule.reference_price + rule.split_ratio * book.bids[j].dpi,
                    _ => 0.0,
                })
                .collect();
            let build = |limits: Limits| -> Result<Program<'_>> {
                let mut p = Program::new(self, "separate clearing", limits);
                let reference = self.area_reference(a);
                for &k in self.area_buses(a) {
                    p.angle_var(k, k == reference);
                }
                p.add_generators(self.area_generators(a).to_vec());
                p.add_bids(book, |j| export_sign(book, j, id) != 0.0, |j| price[j]);
                let internal = self.internal_lines(a).to_vec();
                for &k in self.area_buses(a) {
                    let lines: Vec<usize> = self.incident[k]
                        .iter()
                        .copied()
                        .filter(|l| internal.contains(l))
                        .collect();
                    let bus_id = self.net.buses()[k].id;
                    let extra = book
                        .bids
                        .iter()
                        .enumerate()
                        .filter_map(|(j, bid)| {
                            let v = p.bid_var[j]?;
                            let mut c = 0.0;
                            if bid.buy_from.bus == bus_id {
                                c += 1.0;
                            }
                            if bid.sell_to.bus == bus_id {
                                c -= 1.0;
                            }
                            (c != 0.0).then_some((v, c))
                        })
                        .collect();
                    p.add_balance(k, &lines, extra, loads[k])?;
                }
                for k in internal {
                    p.add_line(k)?;
                }
                self.add_interfaces(&mut p, book, Some(a));
                Ok(p)
            };
            let (p, solved, _) = solve_relaxing(build, false)?;
            let sol = assemble(&p, solved, ProgramKind::Separate, Some(a), loads, &price, None);
            for (j, slot) in cleared_mw.iter_mut().enumerate() {
                if p.bid_var[j].is_some() {
                    *slot = slot.min(sol.cleared_mw[j]);
                }
            }
            areas.push(sol);
        }
        for s in &mut cleared_mw {
            if !s.is_finite() {
                *s = 0.0;
            }
        }
        Ok(SeparateOutcome { cleared_mw, areas })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bids::InterfaceBid;
    use crate::netmodel::{AreaPartition, Branch, Bus, CostCurve, Generator};
    use approx::assert_abs_diff_eq;

    fn bus(id: usize, area: usize, load: f64) -> Bus {
        Bus {
            id,
            area,
            load_mw: load,
            is_boundary: false,
        }
    }

    fn line(a: usize, b: usize, x: f64, limit: f64) -> Branch {
        Branch {
            from_bus: a,
            to_bus: b,
            reactance_pu: x,
            limit_mw: limit,
            is_tie_line: false,
        }
    }

    fn gen(bus: usize, c1: f64, gmax: f64) -> Generator {
        Generator {
            bus,
            g_min_mw: 0.0,
            g_max_mw: gmax,
            cost: CostCurve::linear(0.0, c1),
        }
    }

    fn market(buses: Vec<Bus>, branches: Vec<Branch>, gens: Vec<Generator>) -> Market {
        let net = PowerNetwork::new(buses, branches, gens, 100.0).unwrap();
        let part = AreaPartition::from_network(&net);
        Market::new(net, part).unwrap()
    }

    fn two_bus(limit: f64) -> Market {
        market(
            vec![bus(1, 1, 0.0), bus(2, 2, 50.0)],
            vec![line(1, 2, 0.1, limit)],
            vec![gen(1, 10.0, 100.0), gen(2, 20.0, 100.0)],
        )
    }

    #[test]
    fn uncongested_two_bus_dispatch() {
        let m = two_bus(f64::INFINITY);
        let s = m.solve_jed(&m.forecast()).unwrap();
        assert_abs_diff_eq!(s.dispatch_mw[0], 50.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.dispatch_mw[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.internal_cost, 500.0, epsilon = 1e-5);
        assert_abs_diff_eq!(s.lmp[0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.lmp[1], 10.0, epsilon = 1e-6);
        s.audit(1e-6).unwrap();
    }

    #[test]
    fn congested_two_bus_dispatch() {
        let m = two_bus(30.0);
        let s = m.solve_jed(&m.forecast()).unwrap();
        assert_abs_diff_eq!(s.dispatch_mw[0], 30.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.dispatch_mw[1], 20.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.lmp[0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.lmp[1], 20.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.line_price[0], 10.0, epsilon = 1e-6);
    }

    fn four_bus() -> Market {
        // Area 1: 1-2, area 2: 3-4, tie 2-3.
        market(
            vec![bus(1, 1, 10.0), bus(2, 1, 20.0), bus(3, 2, 10.0), bus(4, 2, 40.0)],
            vec![line(1, 2, 0.1, 200.0), line(2, 3, 0.2, 200.0), line(3, 4, 0.1, 200.0)],
            vec![gen(1, 10.0, 200.0), gen(4, 30.0, 200.0)],
        )
    }

    fn bid(id: usize, sell: (usize, usize), buy: (usize, usize), dpi: f64) -> InterfaceBid {
        InterfaceBid {
            id,
            sell_to: BusRef { area: sell.0, bus: sell.1 },
            buy_from: BusRef { area: buy.0, bus: buy.1 },
            dpi,
            s_max: 100.0,
        }
    }

    #[test]
    fn empty_book_is_autarky() {
        let m = four_bus();
        let s = m.solve_gcts(&BidBook::default(), &m.forecast()).unwrap();
        assert_abs_diff_eq!(s.flows_mw[1], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.dispatch_mw[0], 30.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.dispatch_mw[1], 50.0, epsilon = 1e-6);
    }

    #[test]
    fn prohibitive_price_clears_nothing() {
        let m = four_bus();
        let book = BidBook::new(vec![bid(1, (2, 3), (1, 2), 1e6)]);
        let s = m.solve_gcts(&book, &m.forecast()).unwrap();
        assert_abs_diff_eq!(s.cleared_mw[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn cheap_bid_matches_joint_dispatch() {
        let m = four_bus();
        let book = BidBook::new(vec![bid(1, (2, 3), (1, 2), 0.1), bid(2, (1, 2), (2, 3), 0.1)]);
        let g = m.solve_gcts(&book, &m.forecast()).unwrap();
        let j = m.solve_jed(&m.forecast()).unwrap();
        assert_abs_diff_eq!(g.cleared_mw[0], 50.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.cleared_mw[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.flows_mw[1], 50.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.internal_cost, j.internal_cost, epsilon = 1e-5);
        // Partially cleared: the boundary price gap equals the bid price.
        let sys = &m.blocks.boundary_system;
        let p = |id: usize| g.boundary_prices[sys.buses.iter().position(|&b| b == id).unwrap()];
        assert_abs_diff_eq!(p(3) - p(2), 0.1 + 1e-9, epsilon = 1e-6);
        g.audit(1e-6).unwrap();
    }

    #[test]
    fn proxy_clearing_on_single_tie_matches() {
        let m = four_bus();
        let book = BidBook::new(vec![bid(1, (2, 3), (1, 2), 0.1), bid(2, (1, 2), (2, 3), 0.1)]);
        let g = m.solve_gcts(&book, &m.forecast()).unwrap();
        let c = m.solve_cts(&book, &Proxies::default_for(&m), &m.forecast()).unwrap();
        assert_abs_diff_eq!(g.net_export_mw[0], c.net_export_mw[0], epsilon = 1e-6);
        assert_abs_diff_eq!(c.interchanges[0].scheduled_mw, 50.0, epsilon = 1e-6);
    }

    #[test]
    fn proxy_outside_area_is_rejected() {
        let m = four_bus();
        let err = Proxies::from_refs(&m, &[BusRef { area: 1, bus: 3 }]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn separate_clearing_takes_the_smaller_side() {
        let m = four_bus();
        let book = BidBook::new(vec![bid(1, (2, 3), (1, 2), 2.0)]);
        let rule = SeparateClearing {
            split_ratio: 0.5,
            reference_price: 20.0,
        };
        let out = m.solve_separate(&book, &rule, &m.forecast()).unwrap();
        // Exporter sells at 19 against 10 at home and offers all 100 MW;
        // the importer pays 21 against 30 at home but can only idle its
        // generator, taking 50 MW.
        assert_abs_diff_eq!(out.areas[0].cleared_mw[0], 100.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out.areas[1].cleared_mw[0], 50.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out.cleared_mw[0], 50.0, epsilon = 1e-6);
    }

    #[test]
    fn separate_clearing_respects_the_tie_rating() {
        let m = market(
            vec![bus(1, 1, 10.0), bus(2, 1, 20.0), bus(3, 2, 10.0), bus(4, 2, 40.0)],
            vec![line(1, 2, 0.1, 200.0), line(2, 3, 0.2, 40.0), line(3, 4, 0.1, 200.0)],
            vec![gen(1, 10.0, 200.0), gen(4, 30.0, 200.0)],
        );
        let book = BidBook::new(vec![bid(1, (2, 3), (1, 2), 2.0)]);
        let rule = SeparateClearing {
            split_ratio: 0.5,
            reference_price: 20.0,
        };
        let out = m.solve_separate(&book, &rule, &m.forecast()).unwrap();
        for area in &out.areas {
            assert_abs_diff_eq!(area.cleared_mw[0], 40.0, epsilon = 1e-6);
        }
        let g = m.solve_gcts(&book, &m.forecast()).unwrap();
        assert_abs_diff_eq!(g.cleared_mw[0], 40.0, epsilon = 1e-6);
    }
}
