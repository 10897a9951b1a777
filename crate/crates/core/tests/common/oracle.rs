//! Reference computations built from the branch list alone, sharing no
//! code with the library.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use gcts::netmodel::PowerNetwork;
use nalgebra::{DMatrix, DVector};

/// Nodal susceptance matrix, per unit, one row at a time.
pub fn dense_susceptance(net: &PowerNetwork) -> DMatrix<f64> {
    let n = net.num_buses();
    let ids: Vec<usize> = net.buses().iter().map(|b| b.id).collect();
    let pos = |id: usize| ids.iter().position(|&x| x == id).unwrap();
    DMatrix::from_fn(n, n, |r, c| {
        let mut v = 0.0;
        for br in net.branches() {
            let (a, b) = (pos(br.from_bus), pos(br.to_bus));
            let y = 1.0 / br.reactance_pu;
            if r == c && (a == r || b == r) {
                v += y;
            } else if (a == r && b == c) || (a == c && b == r) {
                v -= y;
            }
        }
        v
    })
}

/// Angles for balanced MW injections with bus position `reference` at zero.
pub fn dc_angles(net: &PowerNetwork, injections_mw: &[f64], reference: usize) -> Vec<f64> {
    let b = dense_susceptance(net);
    let n = b.nrows();
    let keep: Vec<usize> = (0..n).filter(|&k| k != reference).collect();
    let br = DMatrix::from_fn(keep.len(), keep.len(), |r, c| b[(keep[r], keep[c])]);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| injections_mw[k] / net.base_mva()));
    let x = br.lu().solve(&rhs).expect("connected network");
    let mut theta = vec![0.0; n];
    for (t, &k) in keep.iter().enumerate() {
        theta[k] = x[t];
    }
    theta
}

/// Branch flow in MW per MW injected at each bus, withdrawn at bus 0.
pub fn ptdf(net: &PowerNetwork) -> DMatrix<f64> {
    let n = net.num_buses();
    let ids: Vec<usize> = net.buses().iter().map(|b| b.id).collect();
    let pos = |id: usize| ids.iter().position(|&x| x == id).unwrap();
    let mut out = DMatrix::zeros(net.branches().len(), n);
    for k in 1..n {
        let mut p = vec![0.0; n];
        p[k] = 1.0;
        p[0] = -1.0;
        let theta = dc_angles(net, &p, 0);
        for (l, br) in net.branches().iter().enumerate() {
            out[(l, k)] = net.base_mva() * (theta[pos(br.from_bus)] - theta[pos(br.to_bus)]) / br.reactance_pu;
        }
    }
    out
}

pub struct OpfResult {
    pub cost: f64,
    pub dispatch: Vec<f64>,
}

/// Single-block DC OPF in generator variables only: one system balance row
/// and flows through the PTDF. Ratings of zero or less are unlimited.
pub fn dc_opf(net: &PowerNetwork, loads: &[f64]) -> OpfResult {
    let gens = net.generators();
    let ng = gens.len();
    let ids: Vec<usize> = net.buses().iter().map(|b| b.id).collect();
    let pos = |id: usize| ids.iter().position(|&x| x == id).unwrap();
    let h = ptdf(net);

    let mut p_i = Vec::new();
    let mut p_v = Vec::new();
    let mut q = Vec::new();
    let mut c0 = 0.0;
    for (g, gen) in gens.iter().enumerate() {
        if gen.cost.c2 != 0.0 {
            p_i.push(g);
            p_v.push(2.0 * gen.cost.c2);
        }
        q.push(gen.cost.c1);
        c0 += gen.cost.c0;
    }
    let p = CscMatrix::new_from_triplets(ng, ng, p_i.clone(), p_i, p_v);

    let (mut ai, mut aj, mut av, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut row = 0;
    // Σg = Σd.
    for g in 0..ng {
        ai.push(row);
        aj.push(g);
        av.push(1.0);
    }
    b.push(loads.iter().sum::<f64>());
    row += 1;
    // ±H(Cg − d) ≤ L.
    let hd = &h * DVector::from_column_slice(loads);
    let mut n_ineq = 0;
    for (l, br) in net.branches().iter().enumerate() {
        if br.limit_mw <= 0.0 {
            continue;
        }
        for sign in [1.0, -1.0] {
            for (g, gen) in gens.iter().enumerate() {
                let v = sign * h[(l, pos(gen.bus))];
                if v.abs() > 1e-12 {
                    ai.push(row);
                    aj.push(g);
                    av.push(v);
                }
            }
            b.push(br.limit_mw + sign * hd[l]);
            row += 1;
            n_ineq += 1;
        }
    }
    for (g, gen) in gens.iter().enumerate() {
        ai.push(row);
        aj.push(g);
        av.push(1.0);
        b.push(gen.g_max_mw);
        row += 1;
        ai.push(row);
        aj.push(g);
        av.push(-1.0);
        b.push(-gen.g_min_mw);
        row += 1;
        n_ineq += 2;
    }
    let a = CscMatrix::new_from_triplets(row, ng, ai, aj, av);
    let cones = [SupportedConeT::ZeroConeT(1), SupportedConeT::NonnegativeConeT(n_ineq)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-9)
        .tol_gap_rel(1e-10)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).unwrap();
    solver.solve();
    assert!(
        matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved),
        "oracle OPF status {:?}",
        solver.solution.status
    );
    let x = solver.solution.x.clone();
    let cost = gens.iter().zip(&x).map(|(gen, &g)| gen.cost.c1 * g + gen.cost.c2 * g * g).sum::<f64>() + c0;
    OpfResult { cost, dispatch: x }
}
