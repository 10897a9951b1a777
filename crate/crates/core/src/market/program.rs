//! Assembly of dispatch programs from network pieces.
//!
//! Rows are written in MW: a balance row reads
//! `Σ base/x·(θ_k − θ_o) − Σ g_k (+ exports) = −d_k`, a line row reads
//! `base/x·(θ_a − θ_b) <= limit`. Angles held at a fixed value contribute to
//! the right-hand side; their coefficients are remembered per row so that
//! sensitivities with respect to fixed angles can be recovered from duals.

use crate::bids::BidBook;
use crate::error::{Error, Result};
use crate::solver::{kkt_residuals, KktResiduals, QpProblem, QpSolution, QpSolver};

use super::Market;

/// Secondary per-bid penalty that picks the lowest-id allocation among
/// equally priced ones.
pub const TIE_BREAK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Angle {
    Var(usize),
    Fixed(f64),
    Absent,
}

/// How line limits are treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Limits {
    Hard,
    /// Minimize one uniform relaxation of every line limit, ignoring cost.
    FindSlack,
    /// Limits widened by this many MW.
    Widened(f64),
}

pub(crate) struct Program<'a> {
    pub m: &'a Market,
    pub qp: QpProblem,
    pub angle: Vec<Angle>,
    pub gen_var: Vec<Option<usize>>,
    pub bid_var: Vec<Option<usize>>,
    /// Fixed-angle coefficients `(bus index, coeff)` per equality row.
    pub eq_fixed: Vec<Vec<(usize, f64)>>,
    /// Fixed-angle coefficients per inequality row.
    pub le_fixed: Vec<Vec<(usize, f64)>>,
    pub balance_row: Vec<Option<usize>>,
    /// Per branch, the `+flow <= L` and `−flow <= L` rows.
    pub line_rows: Vec<Option<(usize, usize)>>,
    pub limits: Limits,
    pub slack_var: Option<usize>,
    pub ignore_costs: bool,
}

impl<'a> Program<'a> {
    pub fn new(m: &'a Market, name: &str, limits: Limits) -> Self {
        let mut qp = QpProblem::new(name);
        let slack_var = match limits {
            Limits::FindSlack => Some(qp.add_var("line slack", 0.0, f64::INFINITY, 1.0, 0.0)),
            _ => None,
        };
        Program {
            m,
            qp,
            angle: vec![Angle::Absent; m.net.num_buses()],
            gen_var: vec![None; m.net.generators().len()],
            bid_var: Vec::new(),
            eq_fixed: Vec::new(),
            le_fixed: Vec::new(),
            balance_row: vec![None; m.net.num_buses()],
            line_rows: vec![None; m.net.branches().len()],
            limits,
            slack_var,
            ignore_costs: matches!(limits, Limits::FindSlack),
        }
    }

    pub fn angle_var(&mut self, bus: usize, pinned: bool) {
        let id = self.m.net.buses()[bus].id;
        let (lo, hi) = if pinned {
            (0.0, 0.0)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        let v = self.qp.add_var(format!("theta[{id}]"), lo, hi, 0.0, 0.0);
        self.angle[bus] = Angle::Var(v);
    }

    pub fn add_generators(&mut self, which: impl IntoIterator<Item = usize>) {
        for k in which {
            let g = &self.m.net.generators()[k];
            let (c1, q) = if self.ignore_costs {
                (0.0, 0.0)
            } else {
                self.qp.constant += g.cost.c0;
                (g.cost.c1, 2.0 * g.cost.c2)
            };
            let v = self
                .qp
                .add_var(format!("g[{k}]@{}", g.bus), g.g_min_mw, g.g_max_mw, c1, q);
            self.gen_var[k] = Some(v);
        }
    }

    /// One variable per bid with `price(bid index)` as its linear cost.
    pub fn add_bids(&mut self, book: &BidBook, include: impl Fn(usize) -> bool, price: impl Fn(usize) -> f64) {
        self.bid_var = vec![None; book.len()];
        for (j, bid) in book.bids.iter().enumerate() {
            if !include(j) {
                continue;
            }
            let c = if self.ignore_costs { 0.0 } else { price(j) + TIE_BREAK * bid.id as f64 };
            let v = self.qp.add_var(format!("s[{}]", bid.id), 0.0, bid.s_max, c, 0.0);
            self.bid_var[j] = Some(v);
        }
    }

    /// Split angle terms into variable coefficients and a fixed part.
    fn split(&self, terms: &[(usize, f64)]) -> Result<(Vec<(usize, f64)>, f64, Vec<(usize, f64)>)> {
        let mut vars = Vec::new();
        let mut constant = 0.0;
        let mut fixed = Vec::new();
        for &(bus, a) in terms {
            match self.angle[bus] {
                Angle::Var(v) => vars.push((v, a)),
                Angle::Fixed(t) => {
                    constant += a * t;
                    fixed.push((bus, a));
                }
                Angle::Absent => {
                    return Err(Error::Structure(format!(
                        "{}: row references bus {} outside the model",
                        self.qp.name,
                        self.m.net.buses()[bus].id
                    )))
                }
            }
        }
        Ok((vars, constant, fixed))
    }

    pub fn add_eq(&mut self, label: String, angle_terms: &[(usize, f64)], extra: Vec<(usize, f64)>, rhs: f64) -> Result<usize> {
        let (mut vars, constant, fixed) = self.split(angle_terms)?;
        vars.extend(extra);
        self.eq_fixed.push(fixed);
        Ok(self.qp.add_eq(label, vars, rhs - constant))
    }

    fn add_le(&mut self, label: String, angle_terms: &[(usize, f64)], rhs: f64) -> Result<usize> {
        let (mut vars, constant, fixed) = self.split(angle_terms)?;
        if let Some(t) = self.slack_var {
            vars.push((t, -1.0));
        }
        self.le_fixed.push(fixed);
        Ok(self.qp.add_le(label, vars, rhs - constant))
    }

    /// Nodal balance at `bus` over the given branches, with extra variable
    /// terms counted as withdrawals.
    pub fn add_balance(&mut self, bus: usize, branches: &[usize], extra: Vec<(usize, f64)>, load: f64) -> Result<()> {
        let net = &self.m.net;
        let base = net.base_mva();
        let mut terms = Vec::new();
        for &k in branches {
            let br = &net.branches()[k];
            let a = net.bus_index(br.from_bus).expect("validated");
            let b = net.bus_index(br.to_bus).expect("validated");
            let y = base / br.reactance_pu;
            if a == bus {
                terms.push((a, y));
                terms.push((b, -y));
            } else if b == bus {
                terms.push((b, y));
                terms.push((a, -y));
            }
        }
        let mut vars = extra;
        for (k, g) in net.generators().iter().enumerate() {
            if let Some(v) = self.gen_var[k] {
                if net.bus_index(g.bus) == Some(bus) {
                    vars.push((v, -1.0));
                }
            }
        }
        let id = net.buses()[bus].id;
        let row = self.add_eq(format!("balance[{id}]"), &terms, vars, -load)?;
        self.balance_row[bus] = Some(row);
        Ok(())
    }

    pub fn add_line(&mut self, branch: usize) -> Result<()> {
        let net = &self.m.net;
        let br = &net.branches()[branch];
        if !br.limit_mw.is_finite() {
            return Ok(());
        }
        let limit = match self.limits {
            Limits::Widened(t) => br.limit_mw + t,
            _ => br.limit_mw,
        };
        let a = net.bus_index(br.from_bus).expect("validated");
        let b = net.bus_index(br.to_bus).expect("validated");
        let y = net.base_mva() / br.reactance_pu;
        let label = format!("line {}-{}", br.from_bus, br.to_bus);
        let plus = self.add_le(format!("{label} forward"), &[(a, y), (b, -y)], limit)?;
        let minus = self.add_le(format!("{label} reverse"), &[(a, -y), (b, y)], limit)?;
        self.line_rows[branch] = Some((plus, minus));
        Ok(())
    }

    pub fn solve(&self) -> Result<Solved> {
        let sol = self.m.solver.solve(&self.qp)?;
        let kkt = kkt_residuals(&self.qp, &sol);
        Ok(Solved { sol, kkt })
    }

    /// Angles for every bus: variables from the solution, fixed values as
    /// given, zero where absent.
    pub fn angles(&self, x: &[f64]) -> Vec<f64> {
        self.angle
            .iter()
            .map(|a| match *a {
                Angle::Var(v) => x[v],
                Angle::Fixed(t) => t,
                Angle::Absent => 0.0,
            })
            .collect()
    }

    /// `∂(optimal cost)/∂θ_fixed` per bus index, by the chain rule through
    /// the right-hand sides.
    pub fn fixed_angle_gradient(&self, sol: &QpSolution) -> Vec<f64> {
        let mut grad = vec![0.0; self.angle.len()];
        for (row, fixed) in self.eq_fixed.iter().enumerate() {
            for &(bus, a) in fixed {
                grad[bus] -= sol.eq_duals[row] * a;
            }
        }
        for (row, fixed) in self.le_fixed.iter().enumerate() {
            for &(bus, a) in fixed {
                grad[bus] += sol.ineq_duals[row] * a;
            }
        }
        grad
    }
}

pub(crate) struct Solved {
    pub sol: QpSolution,
    pub kkt: KktResiduals,
}

/// Build and solve; on infeasibility, find the smallest uniform widening of
/// the line limits that restores feasibility and solve again with it.
pub(crate) fn solve_relaxing<'a>(
    build: impl Fn(Limits) -> Result<Program<'a>>,
    allow_relaxation: bool,
) -> Result<(Program<'a>, Solved, Option<f64>)> {
    let program = build(Limits::Hard)?;
    match program.solve() {
        Ok(solved) => Ok((program, solved, None)),
        Err(Error::Infeasible(report)) if allow_relaxation => {
            let aux = build(Limits::FindSlack)?;
            let t = match aux.solve() {
                Ok(s) => s.sol.x[aux.slack_var.expect("slack variable")],
                Err(Error::Infeasible(_)) => return Err(Error::Infeasible(report)),
                Err(e) => return Err(e),
            };
            // Exactly t leaves a region without interior; grow the margin
            // until the barrier method copes.
            let mut last = None;
            for margin in [1e-4, 1e-3, 1e-2] {
                let widen = t * (1.0 + margin) + margin;
                let relaxed = build(Limits::Widened(widen))?;
                match relaxed.solve() {
                    Ok(solved) => {
                        log::warn!("{}: line limits relaxed by {widen:.6} MW", program.qp.name);
                        return Ok((relaxed, solved, Some(widen)));
                    }
                    Err(e @ (Error::Numerical(_) | Error::Infeasible(_))) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one margin tried"))
        }
        Err(e) => Err(e),
    }
}
