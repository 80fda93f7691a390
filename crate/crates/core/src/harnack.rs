//! Discrete harmonic measure and Harnack constants.
//!
//! Every nonnegative discrete L-harmonic function on a mask is a nonnegative
//! combination `u = Σ_z c_z p(·, z)` of the Poisson columns, so by the mediant
//! inequality the ratios `sup_K u / u(y₀)` and `sup_K u / inf_K u` over the
//! whole cone are maximized by single columns. The constants below are
//! therefore exact for the discrete cone.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dirichlet::{DirichletSolver, Field};
use crate::discretize::StencilSystem;
use crate::error::{Error, Result};
use crate::grid::DomainMask;

#[derive(Debug, Clone)]
pub struct PoissonKernel {
    solver: Arc<DirichletSolver>,
    /// Boundary nodes (grid indices) that couple to at least one interior row.
    columns: Vec<usize>,
    /// Row-major `n_interior × columns.len()`.
    p: Vec<f64>,
}

/// Harmonic measure of every coupled boundary node: column `z` solves the
/// Dirichlet problem with the indicator of `z` as boundary data.
pub fn poisson_kernel(sys: &StencilSystem) -> Result<PoissonKernel> {
    let solver = Arc::new(DirichletSolver::new(sys.clone())?);
    let n = sys.n_interior();
    let bmap = sys.boundary_map();
    let mut coupled = vec![false; bmap.ncols()];
    for r in 0..n {
        for (c, v) in bmap.row(r) {
            if v != 0.0 {
                coupled[c] = true;
            }
        }
    }
    let bpos: Vec<usize> = (0..bmap.ncols()).filter(|&c| coupled[c]).collect();
    let phi = vec![0.0; bmap.ncols()];
    let cols: Vec<Vec<f64>> = bpos
        .par_iter()
        .map(|&b| {
            let mut phi = phi.clone();
            phi[b] = 1.0;
            solver.solve_parts(&vec![0.0; n], &phi)
        })
        .collect::<Result<_>>()?;
    let nz = bpos.len();
    let mut p = vec![0.0; n * nz];
    for (k, col) in cols.iter().enumerate() {
        for (x, v) in col.iter().enumerate() {
            p[x * nz + k] = *v;
        }
    }
    let boundary = sys.mask().boundary();
    let columns = bpos.iter().map(|&b| boundary[b]).collect();
    Ok(PoissonKernel { solver, columns, p })
}

impl PoissonKernel {
    pub fn system(&self) -> &StencilSystem {
        self.solver.system()
    }

    pub fn solver(&self) -> &DirichletSolver {
        &self.solver
    }

    pub fn mask(&self) -> &DomainMask {
        self.system().mask()
    }

    pub fn n_interior(&self) -> usize {
        self.system().n_interior()
    }

    /// Grid indices of the boundary nodes carrying a column.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// `p[x][k]` for interior position `x` and column `k`.
    pub fn get(&self, x: usize, k: usize) -> f64 {
        self.p[x * self.columns.len() + k]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let nz = self.columns.len();
        &self.p[x * nz..(x + 1) * nz]
    }

    pub fn min_entry(&self) -> f64 {
        self.p.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_interior()).map(|x| self.row(x).iter().sum()).collect()
    }

    /// `Σ_k c_k p(·, k)` on the interior, `c` indexed like [`Self::columns`].
    pub fn combine(&self, c: &[f64]) -> Vec<f64> {
        (0..self.n_interior()).map(|x| self.row(x).iter().zip(c).map(|(p, c)| p * c).sum()).collect()
    }

    /// Interior values of the harmonic extension of `phi` by superposition.
    pub fn superpose(&self, phi: &Field) -> Vec<f64> {
        let c: Vec<f64> = self.columns.iter().map(|&z| phi.get(z)).collect();
        self.combine(&c)
    }

    /// Column `k` as a full field (indicator on the boundary).
    pub fn column_field(&self, k: usize) -> Field {
        let mask = self.system().mask_arc();
        let interior: Vec<f64> = (0..self.n_interior()).map(|x| self.get(x, k)).collect();
        let mut f = Field::zeros(mask.clone());
        f.set_interior(&interior);
        f.set(self.columns[k], 1.0);
        f
    }
}

fn interior_positions(mask: &DomainMask, nodes: &[usize]) -> Result<Vec<usize>> {
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("the compact set K is empty".into()));
    }
    nodes
        .iter()
        .map(|&n| {
            mask.interior_pos(n)
                .ok_or_else(|| Error::PreconditionViolated(format!("node {n} of K is not an interior node")))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakConstant {
    pub c: f64,
    /// Boundary node `z` and node `x ∈ K` attaining the maximum.
    pub witness_z: usize,
    pub witness_x: usize,
}

/// `C(y₀) = max_{z, x ∈ K} p(x, z) / p(y₀, z)`.
pub fn weak_constant(pk: &PoissonKernel, k_nodes: &[usize], y0: usize) -> Result<WeakConstant> {
    let mask = pk.mask();
    let kpos = interior_positions(mask, k_nodes)?;
    let ypos = mask
        .interior_pos(y0)
        .ok_or_else(|| Error::PreconditionViolated(format!("basepoint {y0} is not interior")))?;
    let base = pk.row(ypos);
    if let Some(k) = base.iter().position(|v| *v <= 0.0) {
        return Err(Error::DegenerateBasepoint { node: y0, boundary_node: pk.columns[k] });
    }
    let mut best = WeakConstant { c: f64::NEG_INFINITY, witness_z: pk.columns[0], witness_x: k_nodes[0] };
    for (&x, &node) in kpos.iter().zip(k_nodes) {
        for (k, (p, b)) in pk.row(x).iter().zip(base).enumerate() {
            let r = p / b;
            if r > best.c {
                best = WeakConstant { c: r, witness_z: pk.columns[k], witness_x: node };
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct StrongConstant {
    pub m: f64,
    pub witness_z: usize,
    /// Nodes of `K` where the witness column is largest and smallest.
    pub witness_max: usize,
    pub witness_min: usize,
}

/// `M(K) = max_z max_K p(·, z) / min_K p(·, z)`.
pub fn strong_constant(pk: &PoissonKernel, k_nodes: &[usize]) -> Result<StrongConstant> {
    let kpos = interior_positions(pk.mask(), k_nodes)?;
    let nz = pk.n_columns();
    let mut best = StrongConstant { m: f64::NEG_INFINITY, witness_z: pk.columns[0], witness_max: k_nodes[0], witness_min: k_nodes[0] };
    for k in 0..nz {
        let (mut hi, mut lo) = ((f64::NEG_INFINITY, 0), (f64::INFINITY, 0));
        for (j, &x) in kpos.iter().enumerate() {
            let v = pk.get(x, k);
            if v > hi.0 {
                hi = (v, j);
            }
            if v < lo.0 {
                lo = (v, j);
            }
        }
        if lo.0 <= 0.0 {
            return Err(Error::DegenerateBasepoint { node: k_nodes[lo.1], boundary_node: pk.columns[k] });
        }
        let r = hi.0 / lo.0;
        if r > best.m {
            best = StrongConstant { m: r, witness_z: pk.columns[k], witness_max: k_nodes[hi.1], witness_min: k_nodes[lo.1] };
        }
    }
    Ok(best)
}

/// Centered-difference stencil of `D^α`, as (offset, weight) pairs.
fn derivative_stencil(alpha: &[usize], h: &[f64]) -> Vec<(Vec<i64>, f64)> {
    let mut out: Vec<(Vec<i64>, f64)> = vec![(vec![0; alpha.len()], 1.0)];
    for (axis, &k) in alpha.iter().enumerate() {
        if k == 0 {
            continue;
        }
        // (E − E⁻¹)^k / (2h)^k
        let scale = (2.0 * h[axis]).powi(k as i32);
        let mut binom = 1.0;
        let mut one_d = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            one_d.push((k as i64 - 2 * j as i64, sign * binom / scale));
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        out = out
            .iter()
            .flat_map(|(off, w)| {
                one_d.iter().map(move |(s, v)| {
                    let mut o = off.clone();
                    o[axis] += s;
                    (o, w * v)
                })
            })
            .collect();
    }
    out
}

fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    if dim == 0 {
        return if order == 0 { vec![vec![]] } else { vec![] };
    }
    (0..=order)
        .flat_map(|first| {
            multi_indices(dim - 1, order - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeConstant {
    /// `table[k]` bounds `Σ_{|α|≤k} sup_K |D^α u|` by `table[k]·u(y₀)`.
    pub table: Vec<f64>,
    pub witness_z: Vec<usize>,
}

/// Derivative Harnack constants for orders `0..=m` (`m ≤ 4`) from centered
/// differences of the Poisson columns. Upper bounds for the cone, exact at
/// order 0.
pub fn derivative_constant(pk: &PoissonKernel, k_nodes: &[usize], y0: usize, m: usize) -> Result<DerivativeConstant> {
    if m > 4 {
        return Err(Error::InvalidParameter(format!("derivative order {m} exceeds 4")));
    }
    let mask = pk.mask();
    let kpos = interior_positions(mask, k_nodes)?;
    let dist = mask.boundary_distance();
    if let Some(&x) = kpos.iter().min_by_key(|&&x| dist[x]) {
        if dist[x] < m + 1 {
            return Err(Error::CollarViolation { distance: dist[x], required: m + 1 });
        }
    }
    let ypos = mask
        .interior_pos(y0)
        .ok_or_else(|| Error::PreconditionViolated(format!("basepoint {y0} is not interior")))?;
    let base = pk.row(ypos).to_vec();
    if let Some(k) = base.iter().position(|v| *v <= 0.0) {
        return Err(Error::DegenerateBasepoint { node: y0, boundary_node: pk.columns[k] });
    }
    let grid = mask.grid();
    let h = grid.spacing();
    // Stencils resolved to interior positions once, per order.
    let by_order: Vec<Vec<Vec<Vec<(usize, f64)>>>> = (0..=m)
        .map(|order| {
            multi_indices(grid.dim(), order)
                .iter()
                .map(|alpha| {
                    let st = derivative_stencil(alpha, h);
                    k_nodes
                        .iter()
                        .map(|&node| {
                            st.iter()
                                .map(|(off, w)| {
                                    let q = grid.offset(node, off).expect("stencil stays on the grid");
                                    (mask.interior_pos(q).expect("collar keeps stencils interior"), *w)
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let nz = pk.n_columns();
    // per_order[k][z] = Σ_{|α| = k} sup_K |D^α p(·, z)|
    let per_order: Vec<Vec<f64>> = by_order
        .iter()
        .map(|alphas| {
            (0..nz)
                .into_par_iter()
                .map(|z| {
                    alphas
                        .iter()
                        .map(|per_node| {
                            per_node
                                .iter()
                                .map(|st| st.iter().map(|(x, w)| w * pk.get(*x, z)).sum::<f64>().abs())
                                .fold(0.0, f64::max)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut table = Vec::new();
    let mut witness_z = Vec::new();
    let mut acc = vec![0.0; nz];
    for row in &per_order {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        let (k, c) = acc
            .iter()
            .zip(&base)
            .map(|(a, b)| a / b)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, r)| if r > best.1 { (k, r) } else { best });
        table.push(c);
        witness_z.push(pk.columns[k]);
    }
    Ok(DerivativeConstant { table, witness_z })
}

#[derive(Debug, Clone, Serialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    /// Number of chained balls.
    pub p: usize,
    /// `3^p`.
    pub bound: f64,
    pub balls: Vec<Ball>,
    pub strong_m: f64,
    pub dominates: bool,
}

/// Interior positions of the nodes within `r` of `center`, or `None` when some
/// such node lies outside `allowed`.
fn ball_nodes(mask: &DomainMask, center: usize, r: f64, allowed: &dyn Fn(usize) -> bool) -> Option<Vec<usize>> {
    let grid = mask.grid();
    let c = grid.coord(center);
    let reach: Vec<i64> = grid.spacing().iter().map(|h| (r / h).floor() as i64).collect();
    let mut out = Vec::new();
    let dim = grid.dim();
    let mut idx: Vec<i64> = reach.iter().map(|r| -r).collect();
    let mut q = vec![0.0; dim];
    loop {
        if let Some(node) = grid.offset(center, &idx) {
            grid.coord_into(node, &mut q);
            let d2: f64 = q.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= r * r * (1.0 + 1e-12) {
                if !allowed(node) {
                    return None;
                }
                out.push(mask.interior_pos(node)?);
            }
        } else {
            return None;
        }
        let mut a = 0;
        loop {
            if a == dim {
                return Some(out);
            }
            idx[a] += 1;
            if idx[a] > reach[a] {
                idx[a] = -reach[a];
                a += 1;
            } else {
                break;
            }
        }
    }
}

/// Builds a chained cover of `K` by balls on which every Poisson column
/// satisfies `½u(x) ≤ u(ξ) ≤ (3/2)u(x)`, with radii halved from `delta`
/// and never below one grid cell. Ball nodes must lie in `region` (all
/// interior nodes when `None`).
pub fn chain_of_balls(pk: &PoissonKernel, k_nodes: &[usize], region: Option<&[usize]>, delta: f64) -> Result<ChainReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let mask = pk.mask();
    interior_positions(mask, k_nodes)?;
    let region_set: Option<BTreeSet<usize>> = region.map(|r| r.iter().cloned().collect());
    if let Some(set) = &region_set {
        if let Some(n) = k_nodes.iter().find(|n| !set.contains(n)) {
            return Err(Error::PreconditionViolated(format!("node {n} of K is outside the region")));
        }
    }
    let allowed = |n: usize| mask.interior_pos(n).is_some() && region_set.as_ref().is_none_or(|s| s.contains(&n));
    let h = mask.grid().max_spacing();
    let admissible = |center: usize, nodes: &[usize]| -> bool {
        let x = mask.interior_pos(center).expect("center is interior");
        let ux = pk.row(x);
        nodes.iter().all(|&q| pk.row(q).iter().zip(ux).all(|(v, c)| 0.5 * c <= *v && *v <= 1.5 * c))
    };
    // Largest admissible radius per node of K.
    let sorted: Vec<usize> = k_nodes.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let radii: Vec<(f64, Vec<usize>)> = sorted
        .par_iter()
        .map(|&c| {
            let mut r = delta;
            while r >= h * (1.0 - 1e-12) {
                if let Some(nodes) = ball_nodes(mask, c, r, &allowed) {
                    if admissible(c, &nodes) {
                        return Ok((r, nodes));
                    }
                }
                r /= 2.0;
            }
            Err(Error::ChainFailure { node: c })
        })
        .collect::<Result<_>>()?;
    let kset: BTreeSet<usize> = sorted.iter().map(|&n| mask.interior_pos(n).expect("interior")).collect();
    let mut uncovered = kset.clone();
    let mut union: BTreeSet<usize> = BTreeSet::new();
    let mut balls = Vec::new();
    while !uncovered.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for (i, (_, nodes)) in radii.iter().enumerate() {
            if !balls.is_empty() && !nodes.iter().any(|q| union.contains(q)) {
                continue;
            }
            let gain = nodes.iter().filter(|q| uncovered.contains(q)).count();
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else {
            let stuck = uncovered.iter().next().map(|&x| mask.interior()[x]).unwrap_or(sorted[0]);
            return Err(Error::ChainFailure { node: stuck });
        };
        let (r, nodes) = &radii[i];
        for q in nodes {
            uncovered.remove(q);
            union.insert(*q);
        }
        balls.push(Ball { center: sorted[i], radius: *r });
    }
    let strong_m = strong_constant(pk, k_nodes)?.m;
    let p = balls.len();
    let bound = 3f64.powi(p as i32);
    Ok(ChainReport { p, bound, balls, strong_m, dominates: strong_m <= bound })
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementEntry {
    pub resolution: usize,
    pub weak_c: f64,
    pub strong_m: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    pub compact: Vec<usize>,
    pub basepoint: usize,
    pub weak: WeakConstant,
    pub strong: StrongConstant,
    pub derivative: Option<DerivativeConstant>,
    pub chain: Option<ChainReport>,
    pub refinement: Vec<RefinementEntry>,
}

/// Weak, strong and (when `m` is given) derivative constants on one kernel.
pub fn harnack_report(pk: &PoissonKernel, k_nodes: &[usize], y0: usize, m: Option<usize>) -> Result<HarnackReport> {
    let weak = weak_constant(pk, k_nodes, y0)?;
    let strong = strong_constant(pk, k_nodes)?;
    let derivative = m.map(|m| derivative_constant(pk, k_nodes, y0, m)).transpose()?;
    Ok(HarnackReport { compact: k_nodes.to_vec(), basepoint: y0, weak, strong, derivative, chain: None, refinement: Vec::new() })
}

/// Interior nodes within distance `r` (inclusive) of `center`.
pub fn ball_nodes_in(mask: &DomainMask, center: &[f64], r: f64) -> Vec<usize> {
    let grid = mask.grid();
    mask.interior()
        .iter()
        .cloned()
        .filter(|&n| {
            let c = grid.coord(n);
            c.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r * r * (1.0 + 1e-12)
        })
        .collect()
}
