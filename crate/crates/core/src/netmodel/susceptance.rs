use nalgebra::{DMatrix, DVector};

use super::{AreaPartition, PowerNetwork};
use crate::error::{Error, Result};
use crate::linalg::{submatrix, DenseLu};

/// Interior buses of one area eliminated onto its boundary buses.
///
/// For interior injections `p_i` and boundary angles `θ̄`, the boundary
/// injections of the full model satisfy
/// `p_ī = base·matrix·θ̄ − injection_map·p_i`, so the area's equivalent
/// injection is `g̃ = p_ī + injection_map·p_i`.
#[derive(Debug, Clone)]
pub struct BoundaryEquivalent {
    /// Reduced susceptance among the area's boundary buses, per unit.
    pub matrix: DMatrix<f64>,
    /// `−Y_īi·Y_ii⁻¹`, boundary rows by interior columns.
    pub injection_map: DMatrix<f64>,
}

impl BoundaryEquivalent {
    /// Equivalent boundary injection in MW.
    pub fn equivalent_injection(&self, boundary_mw: &[f64], interior_mw: &[f64]) -> Vec<f64> {
        let pi = DVector::from_column_slice(interior_mw);
        let mapped = &self.injection_map * pi;
        boundary_mw
            .iter()
            .zip(mapped.iter())
            .map(|(b, m)| b + m)
            .collect()
    }
}

/// The boundary buses of all areas coupled through the tie-lines, with one
/// angle reference removed.
#[derive(Debug, Clone)]
pub struct BoundarySystem {
    /// Boundary bus ids, area by area.
    pub buses: Vec<usize>,
    /// Area position of each boundary bus.
    pub bus_area: Vec<usize>,
    /// Global boundary matrix, per unit: equivalent diagonal blocks, tie-line
    /// off-diagonal blocks.
    pub matrix: DMatrix<f64>,
    /// Position of the reference bus in `buses`.
    pub reference: usize,
    /// Tie-line branch indices, in partition order.
    pub ties: Vec<usize>,
    /// Row `k` maps boundary angles to tie-line `k` flow in per unit.
    pub tie_matrix: DMatrix<f64>,
    base_mva: f64,
    reduced: Option<DenseLu>,
}

impl BoundarySystem {
    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    fn free(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| k != self.reference).collect()
    }

    /// Angles that realize the given boundary injections in MW, with the
    /// reference angle pinned at zero. The reference row is implied by
    /// balance and is not checked.
    pub fn angles_from_injections(&self, injections_mw: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.len()];
        if let Some(lu) = &self.reduced {
            let free = self.free();
            let rhs = DVector::from_iterator(
                free.len(),
                free.iter().map(|&k| injections_mw[k] / self.base_mva),
            );
            let sol = lu.solve(&rhs);
            for (t, &k) in free.iter().enumerate() {
                theta[k] = sol[t];
            }
        }
        theta
    }

    /// `base·matrix·θ̄` in MW.
    pub fn injections(&self, theta: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(theta);
        v.iter().map(|x| x * self.base_mva).collect()
    }

    pub fn tie_flows(&self, theta: &[f64]) -> Vec<f64> {
        let v = &self.tie_matrix * DVector::from_column_slice(theta);
        v.iter().map(|x| x * self.base_mva).collect()
    }

    /// Tie-line flow per unit boundary injection (both in MW); the reference
    /// column is zero.
    pub fn shift_factors(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ties.len(), self.len());
        if let Some(lu) = &self.reduced {
            let free = self.free();
            let h_free = submatrix(&self.tie_matrix, &(0..self.ties.len()).collect::<Vec<_>>(), &free);
            // S_free = H_free · Y_r⁻¹, computed as (Y_r⁻ᵀ H_freeᵀ)ᵀ with Y_r symmetric.
            let s = lu.solve_matrix(&h_free.transpose()).transpose();
            for (t, &k) in free.iter().enumerate() {
                out.set_column(k, &s.column(t));
            }
        }
        out
    }

    /// `Y_r⁻¹` embedded with a zero row and column at the reference, per unit.
    pub fn reduced_inverse(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        if let Some(lu) = &self.reduced {
            let free = self.free();
            let inv = lu.inverse();
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    out[(i, j)] = inv[(a, b)];
                }
            }
        }
        out
    }
}

/// The nodal susceptance matrix and its block structure.
#[derive(Debug, Clone)]
pub struct SusceptanceBlocks {
    /// Full nodal matrix, per unit, indexed like `PowerNetwork::buses()`.
    pub matrix: DMatrix<f64>,
    pub base_mva: f64,
    /// Per area, positions of interior buses in `matrix`.
    pub interior: Vec<Vec<usize>>,
    /// Per area, positions of boundary buses in `matrix`.
    pub boundary: Vec<Vec<usize>>,
    pub equivalents: Vec<BoundaryEquivalent>,
    pub boundary_system: BoundarySystem,
    reference: usize,
    reduced_full: DenseLu,
}

impl SusceptanceBlocks {
    pub fn y_ii(&self, area: usize) -> DMatrix<f64> {
        submatrix(&self.matrix, &self.interior[area], &self.interior[area])
    }

    pub fn y_ib(&self, area: usize) -> DMatrix<f64> {
        submatrix(&self.matrix, &self.interior[area], &self.boundary[area])
    }

    pub fn y_bi(&self, area: usize) -> DMatrix<f64> {
        submatrix(&self.matrix, &self.boundary[area], &self.interior[area])
    }

    pub fn y_bb(&self, area: usize) -> DMatrix<f64> {
        submatrix(&self.matrix, &self.boundary[area], &self.boundary[area])
    }

    /// Tie-line coupling between the boundary buses of two areas.
    pub fn y_bj(&self, area: usize, other: usize) -> DMatrix<f64> {
        submatrix(&self.matrix, &self.boundary[area], &self.boundary[other])
    }

    /// Position in `matrix` of the global angle reference.
    pub fn angle_reference(&self) -> usize {
        self.reference
    }

    /// Solve the full-network DC power flow for balanced injections in MW;
    /// the reference angle is zero.
    pub fn angles(&self, injections_mw: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.nrows();
        let total: f64 = injections_mw.iter().sum();
        let scale = injections_mw.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if total.abs() > 1e-6 * scale * n as f64 {
            return Err(Error::Numerical(format!(
                "DC power flow needs balanced injections, imbalance {total:.6e} MW"
            )));
        }
        let free: Vec<usize> = (0..n).filter(|&k| k != self.reference).collect();
        let rhs = DVector::from_iterator(
            free.len(),
            free.iter().map(|&k| injections_mw[k] / self.base_mva),
        );
        let sol = self.reduced_full.solve(&rhs);
        let mut theta = vec![0.0; n];
        for (t, &k) in free.iter().enumerate() {
            theta[k] = sol[t];
        }
        Ok(theta)
    }
}

/// Branch flows in MW, positive from `from_bus` to `to_bus`.
pub fn dc_flows(net: &PowerNetwork, theta: &[f64]) -> Vec<f64> {
    net.branches()
        .iter()
        .map(|br| {
            let a = theta[net.bus_index(br.from_bus).expect("validated")];
            let b = theta[net.bus_index(br.to_bus).expect("validated")];
            net.base_mva() * (a - b) / br.reactance_pu
        })
        .collect()
}

fn components(net: &PowerNetwork) -> Vec<Vec<usize>> {
    let n = net.num_buses();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut k: usize) -> usize {
        while parent[k] != k {
            parent[k] = parent[parent[k]];
            k = parent[k];
        }
        k
    }
    for br in net.branches() {
        let a = find(&mut parent, net.bus_index(br.from_bus).unwrap());
        let b = find(&mut parent, net.bus_index(br.to_bus).unwrap());
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..n {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(net.buses()[k].id);
    }
    groups.into_values().collect()
}

/// Eliminate the interior buses of the area at position `area`.
pub fn kron_reduce(blocks: &SusceptanceBlocks, area: usize) -> Result<BoundaryEquivalent> {
    let y_bb = blocks.y_bb(area);
    let nb = blocks.boundary[area].len();
    let ni = blocks.interior[area].len();
    if ni == 0 {
        return Ok(BoundaryEquivalent {
            matrix: y_bb,
            injection_map: DMatrix::zeros(nb, 0),
        });
    }
    if nb == 0 {
        return Ok(BoundaryEquivalent {
            matrix: DMatrix::zeros(0, 0),
            injection_map: DMatrix::zeros(0, ni),
        });
    }
    let lu = DenseLu::new(&blocks.y_ii(area), &format!("interior block of area position {area}"))?;
    // Y_ii⁻¹·Y_iī, then the Schur complement.
    let solved = lu.solve_matrix(&blocks.y_ib(area));
    let y_bi = blocks.y_bi(area);
    let mut matrix = &y_bb - &y_bi * &solved;
    // Symmetrize away rounding.
    matrix = (&matrix + matrix.transpose()) * 0.5;
    let injection_map = -lu.solve_matrix(&y_bi.transpose()).transpose();
    Ok(BoundaryEquivalent {
        matrix,
        injection_map,
    })
}

pub fn build_susceptance(net: &PowerNetwork, part: &AreaPartition) -> Result<SusceptanceBlocks> {
    let comps = components(net);
    if comps.len() > 1 {
        let shown: Vec<String> = comps
            .iter()
            .map(|c| {
                let ids: Vec<String> = c.iter().take(6).map(|id| id.to_string()).collect();
                let more = if c.len() > 6 { ", ..." } else { "" };
                format!("{{{}{more}}}", ids.join(", "))
            })
            .collect();
        return Err(Error::Structure(format!(
            "network is disconnected into {} components: {}",
            comps.len(),
            shown.join(" ")
        )));
    }

    let n = net.num_buses();
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for br in net.branches() {
        let a = net.bus_index(br.from_bus).unwrap();
        let b = net.bus_index(br.to_bus).unwrap();
        let y = 1.0 / br.reactance_pu;
        matrix[(a, a)] += y;
        matrix[(b, b)] += y;
        matrix[(a, b)] -= y;
        matrix[(b, a)] -= y;
    }

    let positions = |ids: &Vec<usize>| -> Result<Vec<usize>> {
        ids.iter()
            .map(|&id| {
                net.bus_index(id)
                    .ok_or_else(|| Error::Structure(format!("partition names unknown bus {id}")))
            })
            .collect()
    };
    let interior = part.interior_buses.iter().map(positions).collect::<Result<Vec<_>>>()?;
    let boundary = part.boundary_buses.iter().map(positions).collect::<Result<Vec<_>>>()?;

    let reference = net
        .bus_index(part.angle_reference())
        .ok_or_else(|| Error::Structure("angle reference outside network".into()))?;
    let free: Vec<usize> = (0..n).filter(|&k| k != reference).collect();
    let reduced_full = DenseLu::new(&submatrix(&matrix, &free, &free), "full nodal matrix")?;

    let mut blocks = SusceptanceBlocks {
        matrix,
        base_mva: net.base_mva(),
        interior,
        boundary,
        equivalents: Vec::new(),
        boundary_system: BoundarySystem {
            buses: Vec::new(),
            bus_area: Vec::new(),
            matrix: DMatrix::zeros(0, 0),
            reference: 0,
            ties: Vec::new(),
            tie_matrix: DMatrix::zeros(0, 0),
            base_mva: net.base_mva(),
            reduced: None,
        },
        reference,
        reduced_full,
    };
    blocks.equivalents = (0..part.num_areas())
        .map(|a| kron_reduce(&blocks, a))
        .collect::<Result<_>>()?;

    // Global boundary system.
    let buses = part.all_boundary_buses();
    let nb = buses.len();
    let bus_area: Vec<usize> = part
        .boundary_buses
        .iter()
        .enumerate()
        .flat_map(|(a, list)| std::iter::repeat_n(a, list.len()))
        .collect();
    let all_pos: Vec<usize> = blocks.boundary.iter().flatten().copied().collect();
    let mut bmat = submatrix(&blocks.matrix, &all_pos, &all_pos);
    let mut offset = 0;
    for eq in &blocks.equivalents {
        let k = eq.matrix.nrows();
        bmat.view_mut((offset, offset), (k, k)).copy_from(&eq.matrix);
        offset += k;
    }
    let mut tie_matrix = DMatrix::zeros(part.tie_lines.len(), nb);
    for (t, &br_idx) in part.tie_lines.iter().enumerate() {
        let br = &net.branches()[br_idx];
        let y = 1.0 / br.reactance_pu;
        let a = buses.iter().position(|&b| b == br.from_bus).expect("tie endpoint is boundary");
        let b = buses.iter().position(|&b| b == br.to_bus).expect("tie endpoint is boundary");
        tie_matrix[(t, a)] = y;
        tie_matrix[(t, b)] = -y;
    }
    let reference_pos = part
        .boundary_reference()
        .and_then(|r| buses.iter().position(|&b| b == r))
        .unwrap_or(0);
    let reduced = if nb > 1 {
        let free: Vec<usize> = (0..nb).filter(|&k| k != reference_pos).collect();
        Some(DenseLu::new(&submatrix(&bmat, &free, &free), "boundary equivalent system")?)
    } else {
        None
    };
    blocks.boundary_system = BoundarySystem {
        buses,
        bus_area,
        matrix: bmat,
        reference: reference_pos,
        ties: part.tie_lines.clone(),
        tie_matrix,
        base_mva: net.base_mva(),
        reduced,
    };
    Ok(blocks)
}
