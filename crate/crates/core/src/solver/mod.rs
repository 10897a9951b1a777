//! Convex quadratic programs with a diagonal Hessian.
//!
//! Every dispatch and clearing program in the crate is expressed as a
//! [`QpProblem`] and handed to a [`QpSolver`]. The returned multipliers follow
//! one sign convention throughout:
//!
//! * `eq_duals[i]` is the sensitivity of the optimal objective to the
//!   right-hand side of equality row `i`;
//! * `ineq_duals[i] >= 0` belongs to `row_i · x <= rhs_i`, and the optimal
//!   objective moves by `-ineq_duals[i]` per unit of extra right-hand side;
//! * `lower_duals`, `upper_duals >= 0` belong to the variable bounds.
//!
//! so that stationarity reads `q∘x + c − Aᵀy + Gᵀz − z_l + z_u = 0`.

mod ipm;

pub use ipm::InteriorPointSolver;

use crate::error::{Error, Result};

/// A linear constraint row `Σ coeff·x[var] (=|<=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `min constant + cᵀx + ½ xᵀ diag(q) x` over box, equality and `<=` rows.
#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    pub name: String,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    pub constant: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_labels: Vec<String>,
    pub equalities: Vec<Constraint>,
    pub inequalities: Vec<Constraint>,
}

impl QpProblem {
    pub fn new(name: impl Into<String>) -> Self {
        QpProblem {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn add_var(
        &mut self,
        label: impl Into<String>,
        lower: f64,
        upper: f64,
        linear: f64,
        quadratic: f64,
    ) -> usize {
        self.linear.push(linear);
        self.quadratic.push(quadratic);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_labels.push(label.into());
        self.linear.len() - 1
    }

    pub fn add_eq(&mut self, label: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.equalities.push(Constraint {
            label: label.into(),
            coeffs,
            rhs,
        });
        self.equalities.len() - 1
    }

    pub fn add_le(&mut self, label: impl Into<String>, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.inequalities.push(Constraint {
            label: label.into(),
            coeffs,
            rhs,
        });
        self.inequalities.len() - 1
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.constant
            + x.iter()
                .enumerate()
                .map(|(j, &v)| self.linear[j] * v + 0.5 * self.quadratic[j] * v * v)
                .sum::<f64>()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let lens = [self.quadratic.len(), self.lower.len(), self.upper.len(), self.var_labels.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Numerical(format!("{}: inconsistent variable arrays", self.name)));
        }
        for j in 0..n {
            if self.quadratic[j] < 0.0 || !self.quadratic[j].is_finite() {
                return Err(Error::Numerical(format!(
                    "{}: objective not convex in {}",
                    self.name, self.var_labels[j]
                )));
            }
            if self.lower[j] > self.upper[j] {
                return Err(Error::Numerical(format!(
                    "{}: empty bounds on {}",
                    self.name, self.var_labels[j]
                )));
            }
        }
        for row in self.equalities.iter().chain(&self.inequalities) {
            if let Some(&(j, _)) = row.coeffs.iter().find(|&&(j, _)| j >= n) {
                return Err(Error::Numerical(format!(
                    "{}: row {} references undeclared variable {j}",
                    self.name, row.label
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    /// True when the active-set polish produced an exactly complementary pair.
    pub polished: bool,
    pub iterations: usize,
}

/// Anything that returns a primal-dual optimal pair for a [`QpProblem`].
pub trait QpSolver: Send + Sync {
    fn solve(&self, problem: &QpProblem) -> Result<QpSolution>;
}

/// Worst violations of each optimality condition, in the problem's units.
/// Complementarity is `|slack·dual| / max(1, |dual|)`, so a rounding-level
/// slack on a row with a large price does not read as a violation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
    pub stationarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual_sign)
            .max(self.complementarity)
            .max(self.stationarity)
    }
}

fn complementarity(slack: f64, dual: f64) -> f64 {
    (slack * dual).abs() / dual.abs().max(1.0)
}

pub fn kkt_residuals(problem: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let n = problem.num_vars();
    let x = &sol.x;
    let mut r = KktResiduals::default();
    let mut grad: Vec<f64> = (0..n)
        .map(|j| problem.quadratic[j] * x[j] + problem.linear[j])
        .collect();

    for (row, &y) in problem.equalities.iter().zip(&sol.eq_duals) {
        r.primal = r.primal.max((row.eval(x) - row.rhs).abs());
        for &(j, a) in &row.coeffs {
            grad[j] -= a * y;
        }
    }
    for (row, &z) in problem.inequalities.iter().zip(&sol.ineq_duals) {
        let slack = row.rhs - row.eval(x);
        r.primal = r.primal.max(-slack);
        r.dual_sign = r.dual_sign.max(-z);
        r.complementarity = r.complementarity.max(complementarity(slack, z));
        for &(j, a) in &row.coeffs {
            grad[j] += a * z;
        }
    }
    for j in 0..n {
        let (zl, zu) = (sol.lower_duals[j], sol.upper_duals[j]);
        r.dual_sign = r.dual_sign.max(-zl).max(-zu);
        if problem.lower[j].is_finite() {
            let slack = x[j] - problem.lower[j];
            r.primal = r.primal.max(-slack);
            r.complementarity = r.complementarity.max(complementarity(slack, zl));
        } else {
            r.dual_sign = r.dual_sign.max(zl.abs());
        }
        if problem.upper[j].is_finite() {
            let slack = problem.upper[j] - x[j];
            r.primal = r.primal.max(-slack);
            r.complementarity = r.complementarity.max(complementarity(slack, zu));
        } else {
            r.dual_sign = r.dual_sign.max(zu.abs());
        }
        grad[j] += zu - zl;
    }
    r.stationarity = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    r
}

/// Fail unless every KKT condition holds to `tol`.
pub fn audit(problem: &QpProblem, sol: &QpSolution, tol: f64) -> Result<KktResiduals> {
    let r = kkt_residuals(problem, sol);
    if r.max() > tol {
        return Err(Error::Audit(format!(
            "{}: KKT residuals exceed {tol:e}: {r:?}",
            problem.name
        )));
    }
    Ok(r)
}
