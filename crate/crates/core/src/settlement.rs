//! Settlement of real-time dispatch: nodal prices, interface-bid prices,
//! tie congestion prices and their split, revenue adequacy and surplus.

use nalgebra::DVector;

use crate::bids::BidBook;
use crate::caseio::{Cell, Table, Tabular};
use crate::error::{Error, Result};
use crate::market::{ClearingSolution, Market};

/// Price of each bid in one area's real-time dispatch, $/MWh: the
/// sensitivity of the area's optimal cost to the cleared quantity, through
/// the boundary angles the quantities fix.
pub fn interface_price_mu(m: &Market, book: &BidBook, realtime: &ClearingSolution) -> Result<Vec<f64>> {
    let sys = &m.blocks.boundary_system;
    if realtime.boundary_gradient.len() != sys.len() {
        return Err(Error::Structure("solution does not match the boundary system".into()));
    }
    let r = sys.reduced_inverse() / m.net.base_mva();
    let d = &r * DVector::from_column_slice(&realtime.boundary_gradient);
    column_transpose(m, book, d.as_slice())
}

/// `Mᵀ·v` for a vector in boundary-system order.
fn column_transpose(m: &Market, book: &BidBook, v: &[f64]) -> Result<Vec<f64>> {
    let sys = &m.blocks.boundary_system;
    let pos = |bus: usize| {
        sys.buses
            .iter()
            .position(|&b| b == bus)
            .ok_or_else(|| Error::Config(format!("bus {bus} is not a boundary bus")))
    };
    book.bids
        .iter()
        .map(|bid| Ok(v[pos(bid.buy_from.bus)?] - v[pos(bid.sell_to.bus)?]))
        .collect()
}

/// Tie congestion price of each bid, $/MWh, from the look-ahead tie duals.
/// With `area` set, only ties touching that area count and the result is
/// that area's half share.
pub fn congestion_price_rho(
    m: &Market,
    book: &BidBook,
    look_ahead: &ClearingSolution,
    area: Option<usize>,
) -> Result<Vec<f64>> {
    let sys = &m.blocks.boundary_system;
    let adjacent = area.map(|a| m.area_ties(a));
    let eta: Vec<f64> = sys
        .ties
        .iter()
        .map(|&k| match &adjacent {
            Some(list) if !list.contains(&k) => 0.0,
            Some(_) => 0.5 * look_ahead.line_price[k],
            None => look_ahead.line_price[k],
        })
        .collect();
    let s = sys.shift_factors();
    let v = s.transpose() * DVector::from_column_slice(&eta);
    column_transpose(m, book, v.as_slice())
}

/// One area's settlement.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSettlement {
    pub area: usize,
    /// `(bus id, price)` for every bus of the area.
    pub lmp: Vec<(usize, f64)>,
    pub mu: Vec<f64>,
    pub rho_share: Vec<f64>,
    /// `(d − g)ᵀλ`, $/h.
    pub energy_surplus: f64,
    /// `sᵀ(μ + ρ share)`, $/h.
    pub bid_payments: f64,
    pub internal_rent: f64,
    pub tie_rent_share: f64,
    pub net_revenue: f64,
}

impl AreaSettlement {
    /// Net revenue less the rents it should equal.
    pub fn residual(&self) -> f64 {
        self.net_revenue - (self.internal_rent + self.tie_rent_share)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlementReport {
    pub bid_ids: Vec<usize>,
    pub cleared_mw: Vec<f64>,
    pub areas: Vec<AreaSettlement>,
    /// Look-ahead tie rent `f̄ᵀη̄`.
    pub tie_rent: f64,
}

/// Settle per-area real-time solutions (by area position) against the
/// look-ahead clearing that fixed their boundary angles.
pub fn settle(
    m: &Market,
    book: &BidBook,
    look_ahead: &ClearingSolution,
    realtime: &[ClearingSolution],
) -> Result<SettlementReport> {
    if realtime.len() != m.part.num_areas() {
        return Err(Error::Config(format!(
            "{} real-time solutions for {} areas",
            realtime.len(),
            m.part.num_areas()
        )));
    }
    let s = &look_ahead.cleared_mw;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut areas = Vec::new();
    for (a, rt) in realtime.iter().enumerate() {
        let mu = interface_price_mu(m, book, rt)?;
        let rho_share = congestion_price_rho(m, book, look_ahead, Some(a))?;
        let energy_surplus: f64 = m
            .area_buses(a)
            .iter()
            .map(|&k| rt.loads_mw[k] * rt.lmp[k])
            .sum::<f64>()
            - m.area_generators(a)
                .iter()
                .map(|&g| {
                    let bus = m.net.bus_index(m.net.generators()[g].bus).expect("validated");
                    rt.dispatch_mw[g] * rt.lmp[bus]
                })
                .sum::<f64>();
        let bid_payments = dot(s, &mu) + dot(s, &rho_share);
        let internal_rent = rt.congestion_rent(m.internal_lines(a).iter().copied());
        let tie_rent_share = 0.5 * look_ahead.congestion_rent(m.area_ties(a));
        areas.push(AreaSettlement {
            area: m.part.areas[a],
            lmp: m
                .area_buses(a)
                .iter()
                .map(|&k| (m.net.buses()[k].id, rt.lmp[k]))
                .collect(),
            mu,
            rho_share,
            energy_surplus,
            bid_payments,
            internal_rent,
            tie_rent_share,
            net_revenue: energy_surplus + bid_payments,
        });
    }
    Ok(SettlementReport {
        bid_ids: book.bids.iter().map(|b| b.id).collect(),
        cleared_mw: s.clone(),
        areas,
        tie_rent: look_ahead.congestion_rent(m.part.tie_lines.iter().copied()),
    })
}

/// Worst residual found by [`revenue_adequacy_audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdequacyAudit {
    pub max_residual: f64,
    pub min_rent: f64,
}

/// Check that every area's net revenue equals its internal rent plus its
/// tie rent share, and that this is not negative.
pub fn revenue_adequacy_audit(report: &SettlementReport, tol: f64) -> Result<AdequacyAudit> {
    let mut audit = AdequacyAudit {
        max_residual: 0.0,
        min_rent: f64::INFINITY,
    };
    for area in &report.areas {
        let r = area.residual();
        let rent = area.internal_rent + area.tie_rent_share;
        audit.max_residual = audit.max_residual.max(r.abs());
        audit.min_rent = audit.min_rent.min(rent);
        if !(r.abs() <= tol) {
            return Err(Error::Audit(format!(
                "area {}: net revenue {:.9} differs from rents {:.9} by {r:.3e} $/h",
                area.area, area.net_revenue, rent
            )));
        }
        if rent < -tol {
            return Err(Error::Audit(format!("area {}: negative rent {rent:.9} $/h", area.area)));
        }
    }
    // Shares of the tie rent add back up.
    let shares: f64 = report.areas.iter().map(|a| a.tie_rent_share).sum();
    if (shares - report.tie_rent).abs() > tol {
        return Err(Error::Audit(format!(
            "tie rent shares sum to {shares:.9}, total is {:.9}",
            report.tie_rent
        )));
    }
    Ok(audit)
}

impl Tabular for SettlementReport {
    /// Long format: one value per row.
    fn to_table(&self) -> Table {
        let mut t = Table::new(["area", "quantity", "element", "value"]);
        for a in &self.areas {
            for &(bus, price) in &a.lmp {
                t.push(vec![a.area.into(), "lmp".into(), bus.into(), price.into()]);
            }
            for (j, &id) in self.bid_ids.iter().enumerate() {
                t.push(vec![a.area.into(), "mu".into(), id.into(), a.mu[j].into()]);
                t.push(vec![a.area.into(), "rho_share".into(), id.into(), a.rho_share[j].into()]);
                t.push(vec![a.area.into(), "bid_payment".into(), id.into(), (a.mu[j] + a.rho_share[j]).into()]);
            }
            for (name, v) in [
                ("energy_surplus", a.energy_surplus),
                ("bid_payments", a.bid_payments),
                ("internal_rent", a.internal_rent),
                ("tie_rent_share", a.tie_rent_share),
                ("net_revenue", a.net_revenue),
            ] {
                t.push(vec![a.area.into(), name.into(), Cell::Empty, v.into()]);
            }
        }
        t
    }
}

/// Local surplus of one area, $/h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurplusReport {
    pub area: usize,
    pub consumer: f64,
    pub supplier: f64,
    pub transmission: f64,
}

impl SurplusReport {
    pub fn total(&self) -> f64 {
        self.consumer + self.supplier + self.transmission
    }
}

/// Consumer, supplier and internal transmission surplus of area `area`
/// (position) in a real-time solution, with `utility` the constant value of
/// served load.
pub fn local_surplus(m: &Market, area: usize, realtime: &ClearingSolution, utility: f64) -> SurplusReport {
    let payments: f64 = m.area_buses(area).iter().map(|&k| realtime.loads_mw[k] * realtime.lmp[k]).sum();
    let (revenue, cost) = m.area_generators(area).iter().fold((0.0, 0.0), |(r, c), &g| {
        let gen = &m.net.generators()[g];
        let bus = m.net.bus_index(gen.bus).expect("validated");
        let p = realtime.dispatch_mw[g];
        (r + p * realtime.lmp[bus], c + gen.cost.eval(p))
    });
    SurplusReport {
        area: m.part.areas[area],
        consumer: utility - payments,
        supplier: revenue - cost,
        transmission: realtime.congestion_rent(m.internal_lines(area).iter().copied()),
    }
}

impl Tabular for Vec<SurplusReport> {
    fn to_table(&self) -> Table {
        let mut t = Table::new(["area", "consumer", "supplier", "transmission", "total"]);
        for s in self {
            t.push(vec![
                s.area.into(),
                s.consumer.into(),
                s.supplier.into(),
                s.transmission.into(),
                s.total().into(),
            ]);
        }
        t
    }
}
