//! Dense Mehrotra predictor-corrector with an active-set polish.
//!
//! The interior-point iterate is only accurate to the stopping tolerance. The
//! polish step takes the constraints it identifies as active, solves the
//! resulting equality-constrained KKT system by regularized iterative
//! refinement started from the interior point, and accepts the result only
//! if it is primal feasible with correctly signed multipliers. Accepted
//! solutions satisfy complementarity exactly and stationarity to rounding.

use nalgebra::{DMatrix, DVector};

use super::{QpProblem, QpSolution, QpSolver};
use crate::error::{Error, InfeasibilityReport, Result};

/// Scaled residual at which a stalled iterate is still handed to the polish.
const ACCEPTABLE_RESIDUAL: f64 = 1e-6;

/// Primal and dual diagonal regularization of the Newton system.
const REGULARIZATION: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct InteriorPointSolver {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub polish: bool,
}

impl Default for InteriorPointSolver {
    fn default() -> Self {
        InteriorPointSolver {
            tolerance: 1e-9,
            max_iterations: 200,
            polish: true,
        }
    }
}

impl QpSolver for InteriorPointSolver {
    fn solve(&self, problem: &QpProblem) -> Result<QpSolution> {
        problem.validate()?;
        let form = StandardForm::build(problem)?;
        match self.run(&form) {
            Ok(mut state) => {
                let polished = self.polish && form.polish(&mut state);
                Ok(form.recover(problem, &state, polished))
            }
            Err(reason) => Err(self.diagnose(problem, &form, reason)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    Eq(usize),
    Fixed(usize),
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

type Row = Vec<(usize, f64)>;

/// The scaled problem `min cᵀx + ½xᵀQx, Ax = b, Gx <= h` with bounds folded
/// into `G`.
struct StandardForm {
    n: usize,
    c: Vec<f64>,
    q: Vec<f64>,
    a: Vec<Row>,
    b: Vec<f64>,
    g: Vec<Row>,
    h: Vec<f64>,
    a_origin: Vec<Origin>,
    g_origin: Vec<Origin>,
    /// x_original = col_scale ∘ x_scaled
    col_scale: Vec<f64>,
    a_scale: Vec<f64>,
    g_scale: Vec<f64>,
    obj_scale: f64,
    x_start: Vec<f64>,
}

#[derive(Clone)]
struct IpmState {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    iterations: usize,
}

fn merged(coeffs: &[(usize, f64)]) -> Row {
    let mut row: Row = Vec::with_capacity(coeffs.len());
    for &(j, a) in coeffs {
        match row.iter_mut().find(|(k, _)| *k == j) {
            Some(entry) => entry.1 += a,
            None => row.push((j, a)),
        }
    }
    row.retain(|&(_, a)| a != 0.0);
    row
}

fn row_dot(row: &Row, x: &[f64]) -> f64 {
    row.iter().map(|&(j, a)| a * x[j]).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn infeasible(problem: &QpProblem, label: &str) -> Error {
    Error::Infeasible(InfeasibilityReport {
        program: problem.name.clone(),
        min_violation: None,
        binding_rows: vec![label.to_string()],
    })
}

impl StandardForm {
    fn build(p: &QpProblem) -> Result<Self> {
        let n = p.num_vars();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut a_origin = Vec::new();
        let mut g = Vec::new();
        let mut h = Vec::new();
        let mut g_origin = Vec::new();

        for (i, row) in p.equalities.iter().enumerate() {
            let r = merged(&row.coeffs);
            if r.is_empty() {
                if row.rhs.abs() > 1e-9 * (1.0 + row.rhs.abs()) {
                    return Err(infeasible(p, &row.label));
                }
                continue;
            }
            a.push(r);
            b.push(row.rhs);
            a_origin.push(Origin::Eq(i));
        }
        for (i, row) in p.inequalities.iter().enumerate() {
            let r = merged(&row.coeffs);
            if r.is_empty() {
                if row.rhs < -1e-9 * (1.0 + row.rhs.abs()) {
                    return Err(infeasible(p, &row.label));
                }
                continue;
            }
            g.push(r);
            h.push(row.rhs);
            g_origin.push(Origin::Ineq(i));
        }
        for j in 0..n {
            let (lo, up) = (p.lower[j], p.upper[j]);
            if lo.is_finite() && up.is_finite() && lo == up {
                a.push(vec![(j, 1.0)]);
                b.push(lo);
                a_origin.push(Origin::Fixed(j));
                continue;
            }
            if lo.is_finite() {
                g.push(vec![(j, -1.0)]);
                h.push(-lo);
                g_origin.push(Origin::Lower(j));
            }
            if up.is_finite() {
                g.push(vec![(j, 1.0)]);
                h.push(up);
                g_origin.push(Origin::Upper(j));
            }
        }

        // Ruiz equilibration of [A; G].
        let mut col_scale = vec![1.0; n];
        let mut a_scale = vec![1.0; a.len()];
        let mut g_scale = vec![1.0; g.len()];
        for _ in 0..12 {
            let mut col_max = vec![0.0f64; n];
            for (rows, scales) in [(&mut a, &mut a_scale), (&mut g, &mut g_scale)] {
                for (row, sc) in rows.iter_mut().zip(scales.iter_mut()) {
                    let m = row.iter().fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
                    let f = 1.0 / m.sqrt();
                    *sc *= f;
                    for entry in row.iter_mut() {
                        entry.1 *= f;
                        col_max[entry.0] = col_max[entry.0].max(entry.1.abs());
                    }
                }
            }
            for (j, m) in col_max.iter().enumerate() {
                if *m > 0.0 {
                    col_scale[j] /= m.sqrt();
                }
            }
            for rows in [&mut a, &mut g] {
                for row in rows.iter_mut() {
                    for entry in row.iter_mut() {
                        if col_max[entry.0] > 0.0 {
                            entry.1 /= col_max[entry.0].sqrt();
                        }
                    }
                }
            }
        }
        for (bi, sc) in b.iter_mut().zip(&a_scale) {
            *bi *= sc;
        }
        for (hi, sc) in h.iter_mut().zip(&g_scale) {
            *hi *= sc;
        }

        let mut c: Vec<f64> = (0..n).map(|j| p.linear[j] * col_scale[j]).collect();
        let mut q: Vec<f64> = (0..n)
            .map(|j| p.quadratic[j] * col_scale[j] * col_scale[j])
            .collect();
        let obj_scale = inf_norm(&c).max(inf_norm(&q)).max(1.0);
        c.iter_mut().for_each(|v| *v /= obj_scale);
        q.iter_mut().for_each(|v| *v /= obj_scale);

        let x_start = (0..n)
            .map(|j| {
                let (lo, up) = (p.lower[j], p.upper[j]);
                let v = match (lo.is_finite(), up.is_finite()) {
                    (true, true) => 0.5 * (lo + up),
                    (true, false) => lo + 1.0_f64.max(lo.abs() * 0.1),
                    (false, true) => up - 1.0_f64.max(up.abs() * 0.1),
                    (false, false) => 0.0,
                };
                v / col_scale[j]
            })
            .collect();

        Ok(StandardForm {
            n,
            c,
            q,
            a,
            b,
            g,
            h,
            a_origin,
            g_origin,
            col_scale,
            a_scale,
            g_scale,
            obj_scale,
            x_start,
        })
    }

    fn row_label(&self, p: &QpProblem, origin: Origin) -> String {
        match origin {
            Origin::Eq(i) => p.equalities[i].label.clone(),
            Origin::Ineq(i) => p.inequalities[i].label.clone(),
            Origin::Fixed(j) => format!("fixed {}", p.var_labels[j]),
            Origin::Lower(j) => format!("lower bound {}", p.var_labels[j]),
            Origin::Upper(j) => format!("upper bound {}", p.var_labels[j]),
        }
    }

    /// Dual residual `q∘x + c − Aᵀy + Gᵀz`.
    fn dual_residual(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = (0..self.n).map(|j| self.q[j] * x[j] + self.c[j]).collect();
        for (row, &yi) in self.a.iter().zip(y) {
            for &(j, v) in row {
                r[j] -= v * yi;
            }
        }
        for (row, &zi) in self.g.iter().zip(z) {
            for &(j, v) in row {
                r[j] += v * zi;
            }
        }
        r
    }

    /// Try to replace the interior iterate by an exactly complementary one.
    fn polish(&self, st: &mut IpmState) -> bool {
        let n = self.n;
        let me = self.a.len();
        let mut active: Vec<bool> = st.z.iter().zip(&st.s).map(|(z, s)| z > s).collect();
        let reg = 1e-8;

        for _round in 0..8 {
            let act: Vec<usize> = (0..self.g.len()).filter(|&i| active[i]).collect();
            let k = act.len();
            let dim = n + me + k;
            let mut kkt = DMatrix::<f64>::zeros(dim, dim);
            for j in 0..n {
                kkt[(j, j)] = self.q[j];
            }
            for (i, row) in self.a.iter().enumerate() {
                for &(j, v) in row {
                    kkt[(n + i, j)] = v;
                    kkt[(j, n + i)] = v;
                }
            }
            for (t, &i) in act.iter().enumerate() {
                for &(j, v) in &self.g[i] {
                    kkt[(n + me + t, j)] = v;
                    kkt[(j, n + me + t)] = v;
                }
            }
            let mut rhs = DVector::<f64>::zeros(dim);
            for j in 0..n {
                rhs[j] = -self.c[j];
            }
            for i in 0..me {
                rhs[n + i] = self.b[i];
            }
            for (t, &i) in act.iter().enumerate() {
                rhs[n + me + t] = self.h[i];
            }
            let mut regularized = kkt.clone();
            for j in 0..n {
                regularized[(j, j)] += reg;
            }
            for i in n..dim {
                regularized[(i, i)] -= reg;
            }
            let lu = regularized.lu();

            let mut v = DVector::<f64>::zeros(dim);
            for j in 0..n {
                v[j] = st.x[j];
            }
            for i in 0..me {
                v[n + i] = -st.y[i];
            }
            for (t, &i) in act.iter().enumerate() {
                v[n + me + t] = st.z[i];
            }
            let target = 1e-14 * (1.0 + rhs.amax());
            let mut converged = false;
            for _ in 0..80 {
                let res = &rhs - &kkt * &v;
                if res.amax() <= target {
                    converged = true;
                    break;
                }
                match lu.solve(&res) {
                    Some(step) => v += step,
                    None => {
                        log::debug!("polish: singular active-set system");
                        return false;
                    }
                }
            }
            if !converged {
                let res = &rhs - &kkt * &v;
                // Rank-deficient active sets leave rounding-level residuals
                // that refinement cannot remove.
                if res.amax() > 1e-9 * (1.0 + rhs.amax()) {
                    log::debug!("polish: refinement stalled at {:e} with {k} active rows", res.amax());
                    return false;
                }
            }

            let x: Vec<f64> = (0..n).map(|j| v[j]).collect();
            let zmax = act.iter().map(|&i| st.z[i]).fold(1.0f64, f64::max);
            let mut changed = false;
            for (t, &i) in act.iter().enumerate() {
                if v[n + me + t] < -1e-10 * zmax {
                    active[i] = false;
                    changed = true;
                }
            }
            for (i, row) in self.g.iter().enumerate() {
                if !active[i] && row_dot(row, &x) > self.h[i] + 1e-10 * (1.0 + self.h[i].abs()) {
                    active[i] = true;
                    changed = true;
                }
            }
            if changed {
                log::debug!("polish: active set changed in round {_round}");
                continue;
            }

            st.x = x;
            st.y = (0..me).map(|i| -v[n + i]).collect();
            let mut z = vec![0.0; self.g.len()];
            for (t, &i) in act.iter().enumerate() {
                z[i] = v[n + me + t].max(0.0);
            }
            st.z = z;
            st.s = self
                .g
                .iter()
                .zip(&self.h)
                .enumerate()
                .map(|(i, (row, h))| if active[i] { 0.0 } else { h - row_dot(row, &st.x) })
                .collect();
            return true;
        }
        log::debug!("polish: active set did not settle");
        false
    }

    fn recover(&self, p: &QpProblem, st: &IpmState, polished: bool) -> QpSolution {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|j| st.x[j] * self.col_scale[j]).collect();
        // Undo rounding introduced by the column scaling on bound-active variables.
        for j in 0..n {
            x[j] = x[j].clamp(p.lower[j], p.upper[j]);
        }
        let mut sol = QpSolution {
            objective: 0.0,
            eq_duals: vec![0.0; p.equalities.len()],
            ineq_duals: vec![0.0; p.inequalities.len()],
            lower_duals: vec![0.0; n],
            upper_duals: vec![0.0; n],
            polished,
            iterations: st.iterations,
            x,
        };
        for (i, origin) in self.a_origin.iter().enumerate() {
            let y = st.y[i] * self.a_scale[i] * self.obj_scale;
            match *origin {
                Origin::Eq(k) => sol.eq_duals[k] = y,
                Origin::Fixed(j) => {
                    if y >= 0.0 {
                        sol.lower_duals[j] = y;
                    } else {
                        sol.upper_duals[j] = -y;
                    }
                }
                _ => unreachable!("equality origin"),
            }
        }
        for (i, origin) in self.g_origin.iter().enumerate() {
            let z = st.z[i] * self.g_scale[i] * self.obj_scale;
            match *origin {
                Origin::Ineq(k) => sol.ineq_duals[k] = z,
                Origin::Lower(j) => sol.lower_duals[j] = z,
                Origin::Upper(j) => sol.upper_duals[j] = z,
                _ => unreachable!("inequality origin"),
            }
        }
        sol.objective = p.objective(&sol.x);
        sol
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = 1.0f64;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            alpha = alpha.min(-x / d);
        }
    }
    alpha
}

impl InteriorPointSolver {
    fn run(&self, f: &StandardForm) -> std::result::Result<IpmState, String> {
        let n = f.n;
        let me = f.a.len();
        let mi = f.g.len();
        let mut x = f.x_start.clone();
        let mut y = vec![0.0; me];
        let mut s: Vec<f64> = f
            .g
            .iter()
            .zip(&f.h)
            .map(|(row, h)| (h - row_dot(row, &x)).max(1.0))
            .collect();
        let mut z = vec![1.0; mi];

        let b_norm = inf_norm(&f.b);
        let h_norm = inf_norm(&f.h);
        let c_norm = inf_norm(&f.c);
        let mut stalled = 0;
        // Best iterate so far by its worst scaled residual. Near the optimum
        // the dual residual can stall above the tolerance while the barrier
        // keeps shrinking; the best point is then handed to the polish.
        let mut best: Option<(f64, IpmState)> = None;
        let mut since_best = 0;
        let acceptable = ACCEPTABLE_RESIDUAL.max(self.tolerance);
        let fallback = |best: Option<(f64, IpmState)>, reason: String| match best {
            Some((merit, st)) if merit <= acceptable => {
                log::debug!("accepting iterate with scaled residual {merit:.2e} after: {reason}");
                Ok(st)
            }
            _ => Err(reason),
        };

        for it in 0..self.max_iterations {
            let r_p: Vec<f64> = f.a.iter().zip(&f.b).map(|(row, b)| row_dot(row, &x) - b).collect();
            let gx: Vec<f64> = f.g.iter().map(|row| row_dot(row, &x)).collect();
            let r_g: Vec<f64> = (0..mi).map(|i| gx[i] + s[i] - f.h[i]).collect();
            let r_d = f.dual_residual(&x, &y, &z);
            let gap: f64 = s.iter().zip(&z).map(|(a, b)| a * b).sum();
            let mu = if mi > 0 { gap / mi as f64 } else { 0.0 };
            let pobj: f64 = (0..n).map(|j| f.c[j] * x[j] + 0.5 * f.q[j] * x[j] * x[j]).sum();

            if !pobj.is_finite() || inf_norm(&x) > 1e15 {
                return fallback(best, "iterates diverged".into());
            }
            let merit = (inf_norm(&r_p) / (1.0 + b_norm))
                .max(inf_norm(&r_g) / (1.0 + h_norm))
                .max(inf_norm(&r_d) / (1.0 + c_norm))
                .max(gap / (1.0 + pobj.abs()));
            if merit <= self.tolerance {
                return Ok(IpmState {
                    x,
                    y,
                    z,
                    s,
                    iterations: it,
                });
            }
            if best.as_ref().is_none_or(|(m, _)| merit < *m) {
                best = Some((
                    merit,
                    IpmState {
                        x: x.clone(),
                        y: y.clone(),
                        z: z.clone(),
                        s: s.clone(),
                        iterations: it,
                    },
                ));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= 8 {
                    return fallback(best, "residuals stopped improving".into());
                }
            }

            log::trace!(
                "it {it}: primal {:.2e} ineq {:.2e} dual {:.2e} gap {:.2e} obj {pobj:.6e}",
                inf_norm(&r_p),
                inf_norm(&r_g),
                inf_norm(&r_d),
                gap
            );
            let w: Vec<f64> = (0..mi).map(|i| z[i] / s[i]).collect();
            let dim = n + me;
            let assemble = |reg: f64| {
                let mut kkt = DMatrix::<f64>::zeros(dim, dim);
                for j in 0..n {
                    kkt[(j, j)] = f.q[j] + reg;
                }
                for (i, row) in f.g.iter().enumerate() {
                    for &(j, vj) in row {
                        for &(k, vk) in row {
                            kkt[(j, k)] += w[i] * vj * vk;
                        }
                    }
                }
                for (i, row) in f.a.iter().enumerate() {
                    for &(j, v) in row {
                        kkt[(n + i, j)] = v;
                        kkt[(j, n + i)] = v;
                    }
                    kkt[(n + i, n + i)] = -reg;
                }
                kkt.lu()
            };
            // Nearly parallel columns (bids sharing both ends) can leave an
            // exactly zero pivot; stronger regularization only perturbs the
            // direction, which the next iterations correct.
            let Some(lu) = [REGULARIZATION, 1e3 * REGULARIZATION, 1e6 * REGULARIZATION]
                .into_iter()
                .map(assemble)
                .find(|lu| lu.is_invertible())
            else {
                return fallback(best, "singular Newton system".into());
            };

            // Newton direction for a given complementarity target r_c.
            let newton = |r_c: &[f64]| -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
                let mut rhs = DVector::<f64>::zeros(dim);
                for j in 0..n {
                    rhs[j] = -r_d[j];
                }
                for (i, row) in f.g.iter().enumerate() {
                    let t = w[i] * r_g[i] - r_c[i] / s[i];
                    for &(j, v) in row {
                        rhs[j] -= v * t;
                    }
                }
                for i in 0..me {
                    rhs[n + i] = -r_p[i];
                }
                let sol = lu.solve(&rhs)?;
                let dx: Vec<f64> = (0..n).map(|j| sol[j]).collect();
                let dy: Vec<f64> = (0..me).map(|i| -sol[n + i]).collect();
                let gdx: Vec<f64> = f.g.iter().map(|row| row_dot(row, &dx)).collect();
                let dz: Vec<f64> = (0..mi).map(|i| w[i] * (gdx[i] + r_g[i]) - r_c[i] / s[i]).collect();
                let ds: Vec<f64> = (0..mi).map(|i| -r_g[i] - gdx[i]).collect();
                if dx.iter().chain(&dz).any(|v| !v.is_finite()) {
                    return None;
                }
                Some((dx, dy, dz, ds))
            };

            let rc_aff: Vec<f64> = (0..mi).map(|i| s[i] * z[i]).collect();
            let Some((_, _, dz_a, ds_a)) = newton(&rc_aff) else {
                return fallback(best, "singular Newton system".into());
            };
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
            let sigma = if mi > 0 {
                let mu_aff: f64 = (0..mi)
                    .map(|i| (s[i] + alpha_aff * ds_a[i]) * (z[i] + alpha_aff * dz_a[i]))
                    .sum::<f64>()
                    / mi as f64;
                (mu_aff / mu).powi(3).min(1.0)
            } else {
                0.0
            };
            let rc: Vec<f64> = (0..mi)
                .map(|i| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu)
                .collect();
            let Some(mut step) = newton(&rc) else {
                return fallback(best, "singular Newton system".into());
            };
            let step_len = |(_, _, dz, ds): &(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)| {
                (0.995 * max_step(&s, ds).min(max_step(&z, dz))).min(1.0)
            };
            let gap_after = |(_, _, dz, ds): &(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>), a: f64| -> f64 {
                (0..mi).map(|i| (s[i] + a * ds[i]) * (z[i] + a * dz[i])).sum()
            };
            // The second-order term can overshoot and raise the gap, which
            // makes the iterates cycle; a plain centered step cannot.
            if gap_after(&step, step_len(&step)) > gap {
                let centered: Vec<f64> = (0..mi).map(|i| s[i] * z[i] - sigma.max(0.1) * mu).collect();
                if let Some(plain) = newton(&centered) {
                    step = plain;
                }
            }
            let alpha = step_len(&step);
            let (dx, dy, dz, ds) = step;
            if alpha < 1e-10 {
                stalled += 1;
                if stalled > 5 {
                    return fallback(best, "step length collapsed".into());
                }
            }
            for j in 0..n {
                x[j] += alpha * dx[j];
            }
            for i in 0..me {
                y[i] += alpha * dy[i];
            }
            for i in 0..mi {
                z[i] = (z[i] + alpha * dz[i]).max(1e-300);
                s[i] = (s[i] + alpha * ds[i]).max(1e-300);
            }
        }
        fallback(best, format!("no convergence in {} iterations", self.max_iterations))
    }

    /// Phase one: minimize a uniform relaxation `t` of every inequality row.
    fn diagnose(&self, p: &QpProblem, f: &StandardForm, reason: String) -> Error {
        let n = f.n;
        let mut g: Vec<Row> = f.g.iter().map(|row| {
            let mut r = row.clone();
            r.push((n, -1.0));
            r
        }).collect();
        let mut h = f.h.clone();
        g.push(vec![(n, -1.0)]);
        h.push(0.0);
        let mut x_start = f.x_start.clone();
        x_start.push(1.0);
        let mut c = vec![0.0; n];
        c.push(1.0);
        let phase_one = StandardForm {
            n: n + 1,
            c,
            q: vec![0.0; n + 1],
            a: f.a.to_vec(),
            b: f.b.clone(),
            g,
            h,
            a_origin: f.a_origin.clone(),
            g_origin: f.g_origin.clone(),
            col_scale: vec![1.0; n + 1],
            a_scale: vec![1.0; f.a.len()],
            g_scale: vec![1.0; f.g.len() + 1],
            obj_scale: 1.0,
            x_start,
        };
        match self.run(&phase_one) {
            Ok(st) => {
                let t = st.x[n];
                log::debug!("{}: phase one after '{reason}' gives t = {t:e}", p.name);
                if t > 1e-7 {
                    let binding = (0..f.g.len())
                        .filter(|&i| st.z[i] > st.s[i])
                        .map(|i| f.row_label(p, f.g_origin[i]))
                        .collect();
                    Error::Infeasible(InfeasibilityReport {
                        program: p.name.clone(),
                        min_violation: Some(t),
                        binding_rows: binding,
                    })
                } else {
                    Error::Numerical(format!("{}: {reason}", p.name))
                }
            }
            Err(e) => {
                log::debug!("{}: phase one failed: {e}", p.name);
                Error::Infeasible(InfeasibilityReport {
                program: p.name.clone(),
                min_violation: None,
                binding_rows: Vec::new(),
                })
            }
        }
    }
}
