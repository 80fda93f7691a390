//! Discrete Green kernel `k_ε(x, y)` of `−(L − c − ε)` with zero boundary
//! values, taken against the weights `ν = V ∏h`.
//!
//! With `M` the assembled interior matrix and `W = diag(ν)`, the kernel is
//! `k = −M⁻¹ W⁻¹`, so that `G f(x) = Σ_y k(x, y) f(y) ν_y = (−M⁻¹ f)(x)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::dirichlet::{DirichletSolver, Field};
use crate::discretize::StencilSystem;
use crate::error::{Error, Result};
use crate::grid::DomainMask;

/// Above this many interior nodes the dense kernel is refused and a column
/// subset must be requested.
pub const DENSE_CAP: usize = 20_000;

#[derive(Debug, Clone)]
pub struct GreenMatrix {
    solver: Arc<DirichletSolver>,
    weights: Vec<f64>,
    /// Interior positions of the stored columns.
    columns: Vec<usize>,
    /// Column-major storage, one interior-length vector per stored column.
    data: Vec<f64>,
    dense: bool,
}

/// Full kernel over all interior pairs.
pub fn green_matrix(sys: &StencilSystem) -> Result<GreenMatrix> {
    let n = sys.n_interior();
    if n > DENSE_CAP {
        return Err(Error::InvalidParameter(format!(
            "{n} interior nodes exceed the dense cap of {DENSE_CAP}; request a column subset"
        )));
    }
    green_from_solver(Arc::new(DirichletSolver::new(sys.clone())?), (0..n).collect(), true)
}

/// Kernel columns `k(·, y)` for the listed interior positions only.
pub fn green_columns(sys: &StencilSystem, columns: &[usize]) -> Result<GreenMatrix> {
    let n = sys.n_interior();
    if let Some(bad) = columns.iter().find(|c| **c >= n) {
        return Err(Error::InvalidParameter(format!("column {bad} out of range {n}")));
    }
    green_from_solver(Arc::new(DirichletSolver::new(sys.clone())?), columns.to_vec(), columns.len() == n)
}

pub fn green_from_solver(solver: Arc<DirichletSolver>, columns: Vec<usize>, dense: bool) -> Result<GreenMatrix> {
    let sys = solver.system();
    let n = sys.n_interior();
    let weights = sys.nu_weights().to_vec();
    let cols: Vec<Vec<f64>> = columns
        .par_iter()
        .map(|&y| {
            let mut rhs = vec![0.0; n];
            rhs[y] = -1.0 / weights[y];
            solver.solve_interior(&rhs)
        })
        .collect::<Result<_>>()?;
    let data = cols.concat();
    let dense = dense && columns.iter().enumerate().all(|(k, c)| k == *c);
    Ok(GreenMatrix { solver, weights, columns, data, dense })
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub min_entry: f64,
    pub nonpositive: usize,
    /// Interior positions `(x, y)` of the smallest entry.
    pub witness: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproductionReport {
    /// `‖G(L_ε φ) + φ‖∞ / ‖φ‖∞`.
    pub g_of_l: f64,
    /// `‖L_ε(G φ) + φ‖∞ / ‖φ‖∞`.
    pub l_of_g: f64,
    pub phi_sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MassReport {
    /// `G_ε(1)(x)` for each interior node.
    pub row_masses: Vec<f64>,
    pub max_row_mass: f64,
    /// `Σ_x G_ε(1)(x) ν_x`.
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub shift: f64,
    pub u_sup: f64,
    pub harmonic_residual: f64,
    /// `min_x u(x) − ε Σ_y u(y) k(x, y) ν_y`.
    pub min_margin: f64,
    pub witness: usize,
}

impl GreenMatrix {
    pub fn system(&self) -> &StencilSystem {
        self.solver.system()
    }

    pub fn solver(&self) -> &DirichletSolver {
        &self.solver
    }

    pub fn mask(&self) -> &DomainMask {
        self.system().mask()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn is_dense(&self) -> bool {
        self.dense
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Stored column `k(·, y)` for interior position `y`.
    pub fn column(&self, y: usize) -> Option<&[f64]> {
        let n = self.n();
        let k = if self.dense { Some(y) } else { self.columns.iter().position(|c| *c == y) }?;
        Some(&self.data[k * n..(k + 1) * n])
    }

    /// `k(x, y)`; panics unless column `y` is stored.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.column(y).expect("column not stored")[x]
    }

    /// Row `k(x, ·)` via one transposed solve.
    pub fn row(&self, x: usize) -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; self.n()];
        rhs[x] = -1.0;
        let z = self.solver.solve_interior_transpose(&rhs)?;
        Ok(z.iter().zip(&self.weights).map(|(z, w)| z / w).collect())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.columns.iter().map(|&y| self.get(y, y)).collect()
    }

    /// `G f = −M⁻¹ f` through the stored kernel when dense, else the factorization.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if self.dense {
            let n = self.n();
            let mut out = vec![0.0; n];
            for y in 0..n {
                let c = f[y] * self.weights[y];
                if c != 0.0 {
                    for (o, k) in out.iter_mut().zip(&self.data[y * n..(y + 1) * n]) {
                        *o += k * c;
                    }
                }
            }
            Ok(out)
        } else {
            let neg: Vec<f64> = f.iter().map(|v| -v).collect();
            self.solver.solve_interior(&neg)
        }
    }

    /// `max |k − kᵀ| / max |k|` over stored pairs.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for (a, &ya) in self.columns.iter().enumerate() {
            for &yb in &self.columns[a..] {
                let (p, q) = (self.get(yb, ya), self.get(ya, yb));
                worst = worst.max((p - q).abs());
                scale = scale.max(p.abs()).max(q.abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn positivity(&self) -> PositivityReport {
        let n = self.n();
        let mut rep = PositivityReport { min_entry: f64::INFINITY, nonpositive: 0, witness: (0, 0) };
        for (k, &y) in self.columns.iter().enumerate() {
            for x in 0..n {
                let v = self.data[k * n + x];
                if v <= 0.0 {
                    rep.nonpositive += 1;
                }
                if v < rep.min_entry {
                    rep.min_entry = v;
                    rep.witness = (x, y);
                }
            }
        }
        rep
    }

    /// Largest off-source residual of `M k(·, y)` relative to the column scale.
    pub fn column_harmonicity(&self) -> f64 {
        let n = self.n();
        let m = self.system().matrix();
        self.columns
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let col = &self.data[k * n..(k + 1) * n];
                let mk = m.matvec(col);
                let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()))
                    * (0..n).map(|r| m.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
                let worst = mk.iter().enumerate().filter(|(x, _)| *x != y).fold(0.0f64, |a, (_, v)| a.max(v.abs()));
                if scale == 0.0 {
                    0.0
                } else {
                    worst / scale
                }
            })
            .fold(0.0, f64::max)
    }

    /// Maximum of `k(x, ·)` over interior nodes one step from the boundary.
    pub fn collar_max(&self, x: usize) -> Result<f64> {
        let row = self.row(x)?;
        let dist = self.mask().boundary_distance();
        Ok(row.iter().zip(&dist).filter(|(_, d)| **d == 1).fold(0.0f64, |m, (v, _)| m.max(*v)))
    }

    pub fn l1_mass(&self) -> Result<MassReport> {
        let ones = vec![1.0; self.n()];
        let row_masses = self.apply(&ones)?;
        let total = row_masses.iter().zip(&self.weights).map(|(m, w)| m * w).sum();
        let max_row_mass = row_masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(MassReport { row_masses, max_row_mass, total })
    }

    /// Binary layout: magic `HYGK0001`, then `u64` rows and columns (little
    /// endian), then row-major `f64` values.
    pub fn to_binary(&self) -> Vec<u8> {
        let n = self.n();
        let ncols = self.columns.len();
        let mut out = Vec::with_capacity(24 + 8 * n * ncols);
        out.extend_from_slice(b"HYGK0001");
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(ncols as u64).to_le_bytes());
        for x in 0..n {
            for k in 0..ncols {
                out.extend_from_slice(&self.data[k * n + x].to_le_bytes());
            }
        }
        out
    }

    pub fn metadata(&self) -> serde_json::Value {
        let mask = self.mask();
        json!({
            "layout": "magic HYGK0001, u64 rows, u64 cols (little endian), then rows*cols f64 little endian, row-major",
            "rows": self.n(),
            "cols": self.columns.len(),
            "row_nodes": mask.interior(),
            "col_nodes": self.columns.iter().map(|&c| mask.interior()[c]).collect::<Vec<_>>(),
            "nu_weights": self.weights,
            "shift_eps": self.system().shift(),
            "operator": self.system().spec().name(),
        })
    }
}

/// Reads the binary layout written by [`GreenMatrix::to_binary`].
pub fn read_binary(bytes: &[u8]) -> Option<(usize, usize, Vec<f64>)> {
    if bytes.len() < 24 || &bytes[..8] != b"HYGK0001" {
        return None;
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().ok()?) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().ok()?) as usize;
    let body = &bytes[24..];
    if body.len() != 8 * rows * cols {
        return None;
    }
    Some((rows, cols, body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()))
}

/// Checks `G_ε(L_ε φ) = −φ = L_ε(G_ε φ)` for `φ` vanishing on the boundary and
/// on the two interior layers next to it.
pub fn verify_reproduction(gm: &GreenMatrix, phi: &Field) -> Result<ReproductionReport> {
    let mask = gm.mask();
    if let Some(&b) = mask.boundary().iter().find(|&&b| phi.get(b) != 0.0) {
        return Err(Error::PreconditionViolated(format!("φ is nonzero at boundary node {b}")));
    }
    let dist = mask.boundary_distance();
    let phi_i = phi.interior_values();
    if let Some(k) = (0..phi_i.len()).find(|&k| dist[k] <= 2 && phi_i[k] != 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "φ is nonzero at node {} within the 2-node collar",
            mask.interior()[k]
        )));
    }
    let phi_sup = phi_i.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if phi_sup == 0.0 {
        return Ok(ReproductionReport { g_of_l: 0.0, l_of_g: 0.0, phi_sup });
    }
    let m = gm.system().matrix();
    let g_of_l = gm.apply(&m.matvec(&phi_i))?;
    let l_of_g = m.matvec(&gm.apply(&phi_i)?);
    let rel = |v: &[f64]| v.iter().zip(&phi_i).fold(0.0f64, |a, (x, p)| a.max((x + p).abs())) / phi_sup;
    Ok(ReproductionReport { g_of_l: rel(&g_of_l), l_of_g: rel(&l_of_g), phi_sup })
}

/// Smooth bump `exp(−1/(1 − r²/ρ²))` centred at an interior node, with `ρ`
/// the distance to the nearest boundary node or interior node within two
/// steps of the boundary, so that it satisfies the reproduction collar.
pub fn collar_bump(mask: &Arc<DomainMask>, center: usize) -> Field {
    let grid = mask.grid();
    let c = grid.coord(center);
    let dist = mask.boundary_distance();
    let d = |n: usize| -> f64 { grid.coord(n).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() };
    let rho = mask
        .boundary()
        .iter()
        .cloned()
        .chain(mask.interior().iter().zip(&dist).filter(|(_, k)| **k <= 2).map(|(n, _)| *n))
        .map(d)
        .fold(f64::INFINITY, f64::min);
    Field::from_fn(mask.clone(), |x| {
        let r2 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (rho * rho);
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayProfile {
    pub resolutions: Vec<usize>,
    pub collar_max: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Collar maxima of `k(x, ·)` at the interior node nearest to `x` on each
/// of a sequence of systems (typically successive refinements).
pub fn verify_boundary_decay(systems: &[StencilSystem], x: &[f64]) -> Result<DecayProfile> {
    let mut resolutions = Vec::new();
    let mut collar_max = Vec::new();
    for sys in systems {
        let solver = Arc::new(DirichletSolver::new(sys.clone())?);
        let gm = green_from_solver(solver, Vec::new(), false)?;
        let node = sys.mask().nearest_interior(x);
        let pos = sys.mask().interior_pos(node).expect("nearest interior node");
        collar_max.push(gm.collar_max(pos)?);
        resolutions.push(sys.mask().grid().count()[0]);
    }
    let strictly_decreasing = collar_max.windows(2).all(|w| w[1] < w[0]);
    Ok(DecayProfile { resolutions, collar_max, strictly_decreasing })
}

/// Discrete L-harmonic extension of boundary data on `outer` (which must
/// carry no shift).
pub fn harmonic_extension(outer: &DirichletSolver, phi: &Field) -> Result<Field> {
    if outer.system().shift() != 0.0 {
        return Err(Error::PreconditionViolated("harmonic extension needs a system without shift".into()));
    }
    outer.solve(&Field::zeros(phi.mask_arc()), phi)
}

/// Margin `u(x) − ε Σ_y u(y) k(x, y) ν_y` for `u ≥ 0` harmonic on a mask
/// whose interior contains the closure of the kernel's mask.
pub fn comparison_bound(gm: &GreenMatrix, outer: &StencilSystem, u: &Field) -> Result<ComparisonReport> {
    let inner = gm.mask();
    let omask = outer.mask();
    if omask.grid() != inner.grid() {
        return Err(Error::PreconditionViolated("u must live on the same grid as the kernel".into()));
    }
    if outer.shift() != 0.0 {
        return Err(Error::PreconditionViolated("harmonicity is measured for L without shift".into()));
    }
    if let Some(&n) = inner.interior().iter().chain(inner.boundary()).find(|&&n| omask.interior_pos(n).is_none()) {
        return Err(Error::PreconditionViolated(format!("node {n} of the kernel's closure is not interior to the outer mask")));
    }
    let u_sup = u.sup_norm();
    if let Some(&n) = omask.interior().iter().chain(omask.boundary()).find(|&&n| u.get(n) < 0.0) {
        return Err(Error::PreconditionViolated(format!("u is negative at node {n}")));
    }
    let lu = outer.apply(&u.interior_values(), &u.boundary_values());
    let row_norm = (0..outer.n_interior())
        .map(|r| outer.matrix().row(r).chain(outer.boundary_map().row(r)).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let harmonic_residual = lu.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (row_norm * u_sup).max(f64::MIN_POSITIVE);
    if harmonic_residual > 1e-9 {
        return Err(Error::PreconditionViolated(format!("u is not discrete harmonic: residual {harmonic_residual:e}")));
    }
    let eps = gm.system().shift();
    let ui: Vec<f64> = inner.interior().iter().map(|&n| u.get(n)).collect();
    let gu = gm.apply(&ui)?;
    let mut min_margin = f64::INFINITY;
    let mut witness = inner.interior()[0];
    for (k, (&uv, g)) in ui.iter().zip(&gu).enumerate() {
        let margin = uv - eps * g;
        if margin < min_margin {
            min_margin = margin;
            witness = inner.interior()[k];
        }
    }
    Ok(ComparisonReport { shift: eps, u_sup, harmonic_residual, min_margin, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::solve;
    use crate::discretize::assemble;
    use crate::grid::{ball_domain, box_domain, build_grid};
    use crate::operator::{gallery, ParamValue, Params};

    fn laplace(dim: usize) -> crate::operator::OperatorSpec {
        let mut p = Params::new();
        p.insert("dim".into(), ParamValue::Num(dim as f64));
        gallery("laplace", &p).unwrap()
    }

    fn interval_sys(n: usize) -> StencilSystem {
        let mask = Arc::new(box_domain(&[0.0], &[1.0], build_grid(&[(0.0, 1.0)], &[n]).unwrap()).unwrap());
        assemble(&laplace(1), mask).unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        let sys = interval_sys(33);
        let gm = green_matrix(&sys).unwrap();
        let g = sys.mask().grid();
        let x = sys.mask().interior_pos(g.locate(&[0.25]).unwrap()).unwrap();
        let y = sys.mask().interior_pos(g.locate(&[0.75]).unwrap()).unwrap();
        assert!((gm.get(x, y) - 0.0625).abs() < 1e-12);
        assert!(gm.asymmetry() < 1e-12);
        assert!(gm.positivity().nonpositive == 0);
    }

    #[test]
    fn rows_masses_and_representation() {
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.8, build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[17, 17]).unwrap()).unwrap());
        let spec = laplace(2).with_epsilon(0.1).unwrap();
        let sys = assemble(&spec, mask.clone()).unwrap();
        let gm = green_matrix(&sys).unwrap();
        let row = gm.row(5).unwrap();
        for y in 0..gm.n() {
            assert!((row[y] - gm.get(5, y)).abs() < 1e-12 * row[y].abs().max(1e-3));
        }
        let mass = gm.l1_mass().unwrap();
        let u = solve(&sys, &Field::constant(mask.clone(), 1.0), &Field::zeros(mask.clone())).unwrap();
        for (m, v) in mass.row_masses.iter().zip(u.interior_values()) {
            assert!((m - v).abs() < 1e-10);
        }
        assert!(mass.max_row_mass <= 10.0);
        assert!(gm.column_harmonicity() < 1e-12);
        let bytes = gm.to_binary();
        let (r, c, vals) = read_binary(&bytes).unwrap();
        assert_eq!((r, c), (gm.n(), gm.n()));
        assert_eq!(vals[3 * c + 7], gm.get(3, 7));
    }

    #[test]
    fn reproduction_contract() {
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.8, build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[21, 21]).unwrap()).unwrap());
        let sys = assemble(&laplace(2).with_epsilon(0.1).unwrap(), mask.clone()).unwrap();
        let gm = green_matrix(&sys).unwrap();
        let bump = Field::from_fn(mask.clone(), |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            if r2 < 0.16 {
                (-1.0 / (1.0 - r2 / 0.16)).exp()
            } else {
                0.0
            }
        });
        let rep = verify_reproduction(&gm, &bump).unwrap();
        assert!(rep.g_of_l <= 1e-8 && rep.l_of_g <= 1e-8);
        let zero = verify_reproduction(&gm, &Field::zeros(mask.clone())).unwrap();
        assert_eq!((zero.g_of_l, zero.l_of_g), (0.0, 0.0));
        let wide = Field::from_fn(mask.clone(), |_| 1.0);
        assert!(matches!(verify_reproduction(&gm, &wide), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn comparison_with_constant() {
        let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[21, 21]).unwrap();
        let inner = Arc::new(ball_domain(&[0.0, 0.0], 0.6, grid.clone()).unwrap());
        let outer = Arc::new(ball_domain(&[0.0, 0.0], 0.9, grid).unwrap());
        let sys = assemble(&laplace(2).with_epsilon(0.5).unwrap(), inner).unwrap();
        let gm = green_matrix(&sys).unwrap();
        let outer_sys = assemble(&laplace(2), outer.clone()).unwrap();
        let u = Field::constant(outer.clone(), 1.0);
        let rep = comparison_bound(&gm, &outer_sys, &u).unwrap();
        assert!(rep.min_margin >= 0.0);
        let bad = Field::from_fn(outer, |x| x[0] * x[0]);
        assert!(matches!(comparison_bound(&gm, &outer_sys, &bad), Err(Error::PreconditionViolated(_))));
    }
}
