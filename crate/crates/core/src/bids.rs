//! Interface bids and the incidence matrices that turn cleared quantities
//! into boundary injections.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::netmodel::{AreaPartition, PowerNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusRef {
    pub area: usize,
    pub bus: usize,
}

/// Moves up to `s_max` MW out of `buy_from` and into `sell_to`, asking for
/// at least `dpi` $/MWh of price difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceBid {
    pub id: usize,
    pub sell_to: BusRef,
    pub buy_from: BusRef,
    pub dpi: f64,
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BidBook {
    pub bids: Vec<InterfaceBid>,
}

impl BidBook {
    pub fn new(bids: Vec<InterfaceBid>) -> Self {
        BidBook { bids }
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }

    /// Check every bid against the network's areas and boundary buses.
    pub fn validate(&self, net: &PowerNetwork, part: &AreaPartition) -> Result<()> {
        let mut ids = BTreeSet::new();
        for bid in &self.bids {
            if !ids.insert(bid.id) {
                return Err(Error::Config(format!("duplicate bid id {}", bid.id)));
            }
            if bid.sell_to.area == bid.buy_from.area {
                return Err(Error::Config(format!(
                    "bid {} trades within area {}",
                    bid.id, bid.sell_to.area
                )));
            }
            for end in [bid.sell_to, bid.buy_from] {
                let Some(pos) = part.area_position(end.area) else {
                    return Err(Error::Config(format!("bid {} names unknown area {}", bid.id, end.area)));
                };
                if !part.boundary_buses[pos].contains(&end.bus) {
                    let what = match net.bus(end.bus) {
                        Some(b) if b.area != end.area => format!("a bus of area {}", b.area),
                        Some(_) => "not a boundary bus".to_string(),
                        None => "not in the network".to_string(),
                    };
                    return Err(Error::Config(format!(
                        "bid {} references bus {} of area {}, which is {what}",
                        bid.id, end.bus, end.area
                    )));
                }
            }
            if !(bid.s_max >= 0.0) || !bid.s_max.is_finite() {
                return Err(Error::Config(format!("bid {} has invalid s_max {}", bid.id, bid.s_max)));
            }
            if !bid.dpi.is_finite() {
                return Err(Error::Config(format!("bid {} has non-finite price", bid.id)));
            }
            if bid.dpi < 0.0 {
                log::warn!("bid {} has negative price {} $/MWh", bid.id, bid.dpi);
            }
        }
        Ok(())
    }

    /// Same bids with one price and one quantity cap.
    pub fn uniform(&self, dpi: f64, s_max: f64) -> Self {
        BidBook {
            bids: self
                .bids
                .iter()
                .map(|b| InterfaceBid { dpi, s_max, ..*b })
                .collect(),
        }
    }

    /// Same bids with every price replaced.
    pub fn with_price(&self, dpi: f64) -> Self {
        BidBook {
            bids: self.bids.iter().map(|b| InterfaceBid { dpi, ..*b }).collect(),
        }
    }

    /// Two opposite bids between the endpoints of every tie-line.
    pub fn tie_pairs(net: &PowerNetwork, part: &AreaPartition, dpi: f64, s_max: f64) -> Self {
        let mut bids = Vec::new();
        for &k in &part.tie_lines {
            let br = &net.branches()[k];
            let a = BusRef {
                area: net.bus(br.from_bus).expect("validated").area,
                bus: br.from_bus,
            };
            let b = BusRef {
                area: net.bus(br.to_bus).expect("validated").area,
                bus: br.to_bus,
            };
            for (sell_to, buy_from) in [(b, a), (a, b)] {
                bids.push(InterfaceBid {
                    id: bids.len() + 1,
                    sell_to,
                    buy_from,
                    dpi,
                    s_max,
                });
            }
        }
        BidBook { bids }
    }
}

/// Rows are the boundary buses of one area, columns are bids.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub area: usize,
    pub buses: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl IncidenceMatrix {
    /// `M_i·s`: the area's equivalent boundary injections.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|r| (0..self.matrix.ncols()).map(|c| self.matrix[(r, c)] * s[c]).sum())
            .collect()
    }

    /// `1ᵀM_i·s`: the area's net export.
    pub fn net_export(&self, s: &[f64]) -> f64 {
        self.apply(s).iter().sum()
    }
}

/// One incidence matrix per area: `+1` where a bid buys from the area, `−1`
/// where it sells into it.
pub fn build_incidence(book: &BidBook, part: &AreaPartition) -> Result<Vec<IncidenceMatrix>> {
    let mut out: Vec<IncidenceMatrix> = part
        .areas
        .iter()
        .zip(&part.boundary_buses)
        .map(|(&area, buses)| IncidenceMatrix {
            area,
            buses: buses.clone(),
            matrix: DMatrix::zeros(buses.len(), book.len()),
        })
        .collect();
    for (col, bid) in book.bids.iter().enumerate() {
        for (end, sign) in [(bid.buy_from, 1.0), (bid.sell_to, -1.0)] {
            let row = part
                .area_position(end.area)
                .and_then(|a| out[a].buses.iter().position(|&b| b == end.bus).map(|r| (a, r)));
            let Some((a, r)) = row else {
                return Err(Error::Config(format!(
                    "bid {} references bus {} which is not a boundary bus of area {}",
                    bid.id, end.bus, end.area
                )));
            };
            out[a].matrix[(r, col)] = sign;
        }
    }
    Ok(out)
}

/// `[M_1; …; M_n]`.
pub fn stack(ms: &[IncidenceMatrix]) -> DMatrix<f64> {
    let rows: usize = ms.iter().map(|m| m.matrix.nrows()).sum();
    let cols = ms.first().map_or(0, |m| m.matrix.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for m in ms {
        out.view_mut((r, 0), m.matrix.shape()).copy_from(&m.matrix);
        r += m.matrix.nrows();
    }
    out
}

/// Whether the stacked incidence matrix keeps full row rank once the
/// reference row is removed.
pub fn bid_rank_check(stacked: &DMatrix<f64>, reference_row: usize) -> bool {
    let n = stacked.nrows();
    if n == 0 {
        return true;
    }
    let keep: Vec<usize> = (0..n).filter(|&r| r != reference_row).collect();
    let cols: Vec<usize> = (0..stacked.ncols()).collect();
    let reduced = linalg::submatrix(stacked, &keep, &cols);
    linalg::rank(&reduced, 1e-9) == n - 1
}
