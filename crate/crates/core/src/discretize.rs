//! Conservative finite-difference assembly of `L − c − ε` on a mask.
//!
//! Rows hold `(L_h u)(x) − (c(x) + ε) u(x)` at interior nodes. Diagonal terms
//! use two-point fluxes with midpoint coefficient `√((V aᵢᵢ)(x) (V aᵢᵢ)(x+hᵢeᵢ))`;
//! mixed terms use the centered four-corner stencil. Boundary values enter
//! through a separate coupling matrix.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::grid::DomainMask;
use crate::operator::{extract_fields, OperatorSpec, FLUSH_BELOW};
use crate::sparse::CsrMatrix;

/// One stencil entry: offset in grid steps and coefficient.
pub type StencilEntry = (Vec<i64>, f64);

/// Stencil of `L − c − ε` at a point, given `(V, V·A)` at each offset.
///
/// `coef` is called with offsets `0`, `±eᵢ`; `zero_order` is `c + ε` at the
/// centre. Returns the entries and whether any mixed coefficient was nonzero.
pub fn local_stencil<F>(dim: usize, h: &[f64], coef: F, zero_order: f64) -> Result<(Vec<StencilEntry>, bool)>
where
    F: Fn(&[i64]) -> Result<(f64, Vec<f64>)>,
{
    let zero = vec![0i64; dim];
    let (v0, va0) = coef(&zero)?;
    let mut entries: Vec<StencilEntry> = vec![(zero.clone(), -zero_order)];
    let mut mixed = false;
    let mut off = zero.clone();
    for i in 0..dim {
        let root0 = flushed(va0[i * dim + i]).sqrt();
        for s in [1i64, -1] {
            off[i] = s;
            let (_, va) = coef(&off)?;
            let flux = root0 * flushed(va[i * dim + i]).sqrt();
            let w = flux / (v0 * h[i] * h[i]);
            if w != 0.0 {
                entries.push((off.clone(), w));
                entries[0].1 -= w;
            }
            for j in 0..dim {
                if j == i {
                    continue;
                }
                let g = flushed(va[i * dim + j]);
                if g != 0.0 {
                    mixed = true;
                    let c = s as f64 * g / (4.0 * h[i] * h[j] * v0);
                    let mut corner = off.clone();
                    corner[j] = 1;
                    entries.push((corner.clone(), c));
                    corner[j] = -1;
                    entries.push((corner, -c));
                }
            }
            off[i] = 0;
        }
    }
    Ok((entries, mixed))
}

fn flushed(v: f64) -> f64 {
    if v.abs() < FLUSH_BELOW {
        0.0
    } else {
        v
    }
}

/// Applies the discrete operator of `spec` with spacing `h` to the function
/// `u` at the point `y`, using the same stencil as [`assemble`].
pub fn apply_at_point(spec: &OperatorSpec, y: &[f64], h: &[f64], u: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    let dim = spec.dim();
    let point = |off: &[i64]| -> Vec<f64> { y.iter().zip(off).zip(h).map(|((y, o), h)| y + *o as f64 * h).collect() };
    let coef = |off: &[i64]| -> Result<(f64, Vec<f64>)> {
        let x = point(off);
        let v = spec.v_at(&x);
        let va: Vec<f64> = spec.a_at(&x).into_iter().map(|a| v * a).collect();
        Ok((v, va))
    };
    let zero_order = spec.c_at(y) + spec.epsilon();
    let (entries, _) = local_stencil(dim, h, coef, zero_order)?;
    Ok(entries.iter().map(|(off, w)| w * u(&point(off))).sum())
}

/// The assembled linear system on a mask.
#[derive(Debug, Clone)]
pub struct StencilSystem {
    spec: OperatorSpec,
    mask: Arc<DomainMask>,
    matrix: CsrMatrix,
    boundary_map: CsrMatrix,
    nu_weights: Vec<f64>,
    diag_a: bool,
    mmatrix: bool,
    regularization: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixEntry {
    pub row_node: usize,
    pub col_node: usize,
    pub boundary_column: bool,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MmatrixReport {
    pub pass: bool,
    pub sign_violations: usize,
    pub dominance_violations: usize,
    /// First offending off-diagonal entries (at most 16).
    pub sign_witnesses: Vec<MatrixEntry>,
    /// First offending rows as `(node, row sum)` (at most 16).
    pub dominance_witnesses: Vec<(usize, f64)>,
}

const WITNESS_CAP: usize = 16;

/// Assembles the discrete `L − c − ε` on the interior of `mask`.
pub fn assemble(spec: &OperatorSpec, mask: Arc<DomainMask>) -> Result<StencilSystem> {
    if spec.dim() != mask.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: mask.dim() });
    }
    let grid = mask.grid();
    let dim = grid.dim();
    let n_int = mask.n_interior();
    let active: Vec<usize> = mask.interior().iter().chain(mask.boundary()).copied().collect();

    let cache: Vec<(f64, Vec<f64>)> = active
        .par_iter()
        .map(|&node| {
            let x = grid.coord(node);
            let v = spec.v_at(&x);
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::CoefficientError { node, what: format!("V = {v}") });
            }
            let a = spec.a_at(&x);
            if let Some(bad) = a.iter().find(|v| !v.is_finite()) {
                return Err(Error::CoefficientError { node, what: format!("A entry = {bad}") });
            }
            Ok((v, a.into_iter().map(|a| flushed(v * a)).collect()))
        })
        .collect::<Result<_>>()?;
    let slot_of = |node: usize| -> usize {
        mask.interior_pos(node)
            .or_else(|| mask.boundary_pos(node).map(|b| n_int + b))
            .expect("stencil reaches an exterior node")
    };

    let h = grid.spacing().to_vec();
    let rows: Vec<(Vec<(usize, f64)>, Vec<(usize, f64)>, bool)> = mask
        .interior()
        .par_iter()
        .map(|&node| {
            let x = grid.coord(node);
            let zero_order = spec.c_at(&x) + spec.epsilon();
            if !zero_order.is_finite() {
                return Err(Error::CoefficientError { node, what: format!("c = {}", spec.c_at(&x)) });
            }
            let coef = |off: &[i64]| -> Result<(f64, Vec<f64>)> {
                let q = grid.offset(node, off).expect("interior stencil inside grid");
                Ok(cache[slot_of(q)].clone())
            };
            let (entries, mixed) = local_stencil(dim, &h, coef, zero_order)?;
            let mut inner = Vec::with_capacity(entries.len());
            let mut outer = Vec::new();
            for (off, w) in entries {
                let q = grid.offset(node, &off).expect("interior stencil inside grid");
                match mask.interior_pos(q) {
                    Some(k) => inner.push((k, w)),
                    None => outer.push((mask.boundary_pos(q).expect("stencil reaches an exterior node"), w)),
                }
            }
            Ok((inner, outer, mixed))
        })
        .collect::<Result<_>>()?;

    let mut diag_a = true;
    let mut inner_rows = Vec::with_capacity(n_int);
    let mut outer_rows = Vec::with_capacity(n_int);
    for (inner, outer, mixed) in rows {
        diag_a &= !mixed;
        inner_rows.push(inner);
        outer_rows.push(outer);
    }
    let matrix = CsrMatrix::from_rows(n_int, inner_rows);
    let boundary_map = CsrMatrix::from_rows(mask.n_boundary(), outer_rows);
    let cell = grid.cell_volume();
    let nu_weights = (0..n_int).map(|k| cache[k].0 * cell).collect();
    let mut sys = StencilSystem {
        spec: spec.clone(),
        mask,
        matrix,
        boundary_map,
        nu_weights,
        diag_a,
        mmatrix: false,
        regularization: None,
    };
    sys.mmatrix = sys.check_mmatrix().pass;
    Ok(sys)
}

impl StencilSystem {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn mask_arc(&self) -> Arc<DomainMask> {
        self.mask.clone()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn boundary_map(&self) -> &CsrMatrix {
        &self.boundary_map
    }

    pub fn nu_weights(&self) -> &[f64] {
        &self.nu_weights
    }

    pub fn diag_a(&self) -> bool {
        self.diag_a
    }

    pub fn mmatrix(&self) -> bool {
        self.mmatrix
    }

    pub fn shift(&self) -> f64 {
        self.spec.epsilon()
    }

    pub fn regularization(&self) -> Option<f64> {
        self.regularization
    }

    pub fn n_interior(&self) -> usize {
        self.matrix.nrows()
    }

    /// True when `W·matrix` is symmetric by construction.
    pub fn self_adjoint(&self) -> bool {
        self.diag_a && self.regularization.is_none()
    }

    /// `matrix · u + boundary_map · φ`.
    pub fn apply(&self, u_interior: &[f64], phi_boundary: &[f64]) -> Vec<f64> {
        let mut out = self.matrix.matvec(u_interior);
        let b = self.boundary_map.matvec(phi_boundary);
        for (o, v) in out.iter_mut().zip(b) {
            *o += v;
        }
        out
    }

    /// `max |(W M) − (W M)ᵀ| / max |W M|`.
    pub fn nu_asymmetry(&self) -> f64 {
        let mut wm = self.matrix.clone();
        wm.scale_rows(&self.nu_weights);
        let scale = wm.max_abs();
        let mut worst = 0.0f64;
        for r in 0..wm.nrows() {
            for (c, v) in wm.row(r) {
                worst = worst.max((v - wm.get(c, r)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Sign pattern and weak diagonal dominance of the rows.
    pub fn check_mmatrix(&self) -> MmatrixReport {
        let mask = &self.mask;
        let eps = self.spec.epsilon();
        let mut report =
            MmatrixReport { pass: true, sign_violations: 0, dominance_violations: 0, sign_witnesses: vec![], dominance_witnesses: vec![] };
        for r in 0..self.matrix.nrows() {
            let row_node = mask.interior()[r];
            let mut sum = 0.0;
            let mut abs = 0.0;
            let offdiag = self
                .matrix
                .row(r)
                .map(|(c, v)| (c, v, false))
                .chain(self.boundary_map.row(r).map(|(c, v)| (c, v, true)));
            for (c, v, boundary_column) in offdiag {
                sum += v;
                abs += v.abs();
                if (boundary_column || c != r) && v < 0.0 {
                    report.sign_violations += 1;
                    if report.sign_witnesses.len() < WITNESS_CAP {
                        let col_node = if boundary_column { mask.boundary()[c] } else { mask.interior()[c] };
                        report.sign_witnesses.push(MatrixEntry { row_node, col_node, boundary_column, value: v });
                    }
                }
            }
            if sum > -eps * (1.0 - 1e-12) + 1e-13 * abs {
                report.dominance_violations += 1;
                if report.dominance_witnesses.len() < WITNESS_CAP {
                    report.dominance_witnesses.push((row_node, sum));
                }
            }
        }
        report.pass = report.sign_violations == 0 && report.dominance_violations == 0;
        report
    }

    /// The 5-point (2N+1) Laplacian on the same mask, split like the system.
    pub fn laplacian(&self) -> (CsrMatrix, CsrMatrix) {
        let mask = &self.mask;
        let grid = mask.grid();
        let h = grid.spacing();
        let mut inner = Vec::with_capacity(mask.n_interior());
        let mut outer = Vec::with_capacity(mask.n_interior());
        for (r, &node) in mask.interior().iter().enumerate() {
            let mut i_row = vec![(r, 0.0)];
            let mut o_row = Vec::new();
            for (axis, hh) in h.iter().enumerate() {
                let w = 1.0 / (hh * hh);
                i_row[0].1 -= 2.0 * w;
                let s = grid.stride(axis);
                for q in [node + s, node - s] {
                    match mask.interior_pos(q) {
                        Some(k) => i_row.push((k, w)),
                        None => o_row.push((mask.boundary_pos(q).expect("axis neighbor of interior node"), w)),
                    }
                }
            }
            inner.push(i_row);
            outer.push(o_row);
        }
        (CsrMatrix::from_rows(mask.n_interior(), inner), CsrMatrix::from_rows(mask.n_boundary(), outer))
    }

    /// Adds `(1/n)·Δ_h`, the discrete form of `Pₙ = P + (1/n) Σ ∂ⱼ²`.
    pub fn regularize(&self, n: f64) -> Result<StencilSystem> {
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!("regularization index must be >= 1, got {n}")));
        }
        let (lap_i, lap_b) = self.laplacian();
        let mut out = self.clone();
        out.matrix = self.matrix.add_scaled(&lap_i, 1.0 / n);
        out.boundary_map = self.boundary_map.add_scaled(&lap_b, 1.0 / n);
        out.regularization = Some(n);
        out.mmatrix = out.check_mmatrix().pass;
        Ok(out)
    }

    pub(crate) fn with_matrices(&self, matrix: CsrMatrix, boundary_map: CsrMatrix) -> StencilSystem {
        let mut out = self.clone();
        out.matrix = matrix;
        out.boundary_map = boundary_map;
        out.mmatrix = out.check_mmatrix().pass;
        out
    }

    pub fn to_matrix_market(&self) -> String {
        self.matrix.to_matrix_market(&format!(
            "discrete L - c - eps for operator {} on {} interior nodes",
            self.spec.name(),
            self.n_interior()
        ))
    }

    pub fn boundary_map_matrix_market(&self) -> String {
        self.boundary_map.to_matrix_market("boundary coupling: rows interior nodes, columns boundary nodes")
    }

    /// Metadata accompanying the Matrix Market export.
    pub fn sidecar(&self) -> serde_json::Value {
        json!({
            "operator": self.spec.name(),
            "dim": self.spec.dim(),
            "shift_eps": self.spec.epsilon(),
            "regularization_n": self.regularization,
            "diag_a": self.diag_a,
            "mmatrix": self.mmatrix,
            "n_interior": self.n_interior(),
            "n_boundary": self.mask.n_boundary(),
            "grid": self.mask.grid(),
            "shape": self.mask.shape(),
            "interior_nodes": self.mask.interior(),
            "boundary_nodes": self.mask.boundary(),
            "nu_weights": self.nu_weights,
        })
    }
}

/// The reduction `L̃u = w L(w u)` with `w(x) = 1 − m |x − x₀|²`.
#[derive(Debug, Clone)]
pub struct TildeTransform {
    spec: OperatorSpec,
    x0: Vec<f64>,
    m: f64,
}

pub fn tilde_transform(spec: &OperatorSpec, x0: &[f64], m: f64) -> Result<TildeTransform> {
    if x0.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: x0.len() });
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidParameter(format!("m must be positive, got {m}")));
    }
    Ok(TildeTransform { spec: spec.clone(), x0: x0.to_vec(), m })
}

impl TildeTransform {
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Radius `1/√m` of the ball where `w > 0`.
    pub fn radius(&self) -> f64 {
        1.0 / self.m.sqrt()
    }

    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        let r2: f64 = x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum();
        let w = 1.0 - self.m * r2;
        if w > 0.0 {
            Ok(w)
        } else {
            Err(Error::OutsideBallOfValidity { point: x.to_vec() })
        }
    }

    /// `L̃(1)(x) = w L(w)(x) = w·(−2m tr A − 2m Σⱼ bⱼ (x−x₀)ⱼ + γ w)` with
    /// `γ = −(c + ε)`.
    pub fn zero_order(&self, x: &[f64]) -> Result<f64> {
        let w = self.weight(x)?;
        let gamma = -(self.spec.c_at(x) + self.spec.epsilon());
        let b = extract_fields(&self.spec).drift_b(x);
        let drift: f64 = b.iter().zip(x.iter().zip(&self.x0)).map(|(b, (x, x0))| b * (x - x0)).sum();
        Ok(w * (-2.0 * self.m * self.spec.trace_at(x) - 2.0 * self.m * drift + gamma * w))
    }

    /// Scales an assembled system to `diag(w) M diag(w)`; the boundary
    /// coupling becomes `diag(w) B diag(w_boundary)`.
    pub fn assemble(&self, base: &StencilSystem) -> Result<StencilSystem> {
        let mask = base.mask();
        let grid = mask.grid();
        let wi = mask.interior().iter().map(|&n| self.weight(&grid.coord(n))).collect::<Result<Vec<_>>>()?;
        let wb = mask.boundary().iter().map(|&n| self.weight(&grid.coord(n))).collect::<Result<Vec<_>>>()?;
        let mut m = base.matrix().clone();
        m.scale_rows(&wi);
        m.scale_cols(&wi);
        let mut b = base.boundary_map().clone();
        b.scale_rows(&wi);
        b.scale_cols(&wb);
        Ok(base.with_matrices(m, b))
    }

    /// Weights at interior and boundary nodes of `mask`.
    pub fn weights_on(&self, mask: &DomainMask) -> Result<(Vec<f64>, Vec<f64>)> {
        let grid = mask.grid();
        let wi = mask.interior().iter().map(|&n| self.weight(&grid.coord(n))).collect::<Result<Vec<_>>>()?;
        let wb = mask.boundary().iter().map(|&n| self.weight(&grid.coord(n))).collect::<Result<Vec<_>>>()?;
        Ok((wi, wb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ball_domain, box_domain, build_grid};
    use crate::operator::{gallery, Params};

    fn lap(dim: usize) -> OperatorSpec {
        let mut p = Params::new();
        p.insert("dim".into(), crate::operator::ParamValue::Num(dim as f64));
        gallery("laplace", &p).unwrap()
    }

    #[test]
    fn one_dimensional_laplace_row() {
        let grid = build_grid(&[(0.0, 1.0)], &[5]).unwrap();
        let mask = Arc::new(box_domain(&[0.0], &[1.0], grid).unwrap());
        let spec = lap(1).with_epsilon(0.3).unwrap();
        let sys = assemble(&spec, mask).unwrap();
        let h2 = 0.25f64 * 0.25;
        assert_eq!(sys.n_interior(), 3);
        assert!((sys.matrix().get(1, 0) - 1.0 / h2).abs() < 1e-12);
        assert!((sys.matrix().get(1, 1) - (-2.0 / h2 - 0.3)).abs() < 1e-12);
        assert!((sys.matrix().get(1, 2) - 1.0 / h2).abs() < 1e-12);
        assert!((sys.boundary_map().get(0, 0) - 1.0 / h2).abs() < 1e-12);
        assert!(sys.mmatrix() && sys.diag_a());
    }

    #[test]
    fn lie2d_flux_by_hand() {
        let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[5, 5]).unwrap();
        let mask = Arc::new(box_domain(&[-1.0, -1.0], &[1.0, 1.0], grid).unwrap());
        let spec = gallery("lie2d", &Params::new()).unwrap();
        let sys = assemble(&spec, mask.clone()).unwrap();
        let g = mask.grid();
        let center = g.locate(&[0.0, 0.0]).unwrap();
        let r = mask.interior_pos(center).unwrap();
        let east = mask.interior_pos(g.locate(&[0.5, 0.0]).unwrap()).unwrap();
        let north = mask.interior_pos(g.locate(&[0.0, 0.5]).unwrap()).unwrap();
        let south = mask.interior_pos(g.locate(&[0.0, -0.5]).unwrap()).unwrap();
        // V·a₁₁ = e^{x₂} is constant along x₁; V = 1 at the centre.
        assert!((sys.matrix().get(r, east) - 1.0 / 0.25).abs() < 1e-12);
        // V·a₂₂ = e^{−x₂}; midpoint between 0 and ±0.5 is e^{∓0.25}.
        assert!((sys.matrix().get(r, north) - (-0.25f64).exp() / 0.25).abs() < 1e-12);
        assert!((sys.matrix().get(r, south) - (0.25f64).exp() / 0.25).abs() < 1e-12);
        let diag = -(2.0 + (-0.25f64).exp() + 0.25f64.exp()) / 0.25;
        assert!((sys.matrix().get(r, r) - diag).abs() < 1e-12);
    }

    #[test]
    fn grushin_vertical_coupling() {
        let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[9, 9]).unwrap();
        let mask = Arc::new(box_domain(&[-1.0, -1.0], &[1.0, 1.0], grid).unwrap());
        let spec = gallery("grushin_fedii", &Params::new()).unwrap().with_epsilon(0.1).unwrap();
        let sys = assemble(&spec, mask.clone()).unwrap();
        let g = mask.grid();
        let p = mask.interior_pos(g.locate(&[0.5, 0.0]).unwrap()).unwrap();
        let q = mask.interior_pos(g.locate(&[0.5, 0.25]).unwrap()).unwrap();
        let a2 = (-8.0f64).exp();
        assert!((sys.matrix().get(p, q) - a2 / 0.0625).abs() < 1e-15);
        // degenerate line: no vertical coupling, restored by regularization
        let z = mask.interior_pos(g.locate(&[0.0, 0.0]).unwrap()).unwrap();
        let zn = mask.interior_pos(g.locate(&[0.0, 0.25]).unwrap()).unwrap();
        assert_eq!(sys.matrix().get(z, zn), 0.0);
        let reg = sys.regularize(100.0).unwrap();
        assert!((reg.matrix().get(z, zn) - 0.01 / 0.0625).abs() < 1e-12);
    }

    #[test]
    fn self_adjoint_weights() {
        for name in ["lie2d", "grushin_fedii"] {
            let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[17, 17]).unwrap();
            let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.9, grid).unwrap());
            let sys = assemble(&gallery(name, &Params::new()).unwrap(), mask).unwrap();
            assert!(sys.nu_asymmetry() <= 1e-12, "{name}");
        }
    }

    #[test]
    fn regularization_adds_laplacian() {
        let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[9, 9]).unwrap();
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.8, grid).unwrap());
        let sys = assemble(&lap(2), mask).unwrap();
        let doubled = sys.regularize(1.0).unwrap();
        let (a, b) = (sys.matrix().to_dense(), doubled.matrix().to_dense());
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * x.abs());
        }
        assert!(sys.regularize(0.5).is_err());
    }

    #[test]
    fn mixed_terms_void_mmatrix() {
        let strong = OperatorSpec::new(
            "mixed",
            2,
            |_, o| o.copy_from_slice(&[1.0, 0.9, 0.9, 1.0]),
            |_| 1.0,
        )
        .unwrap();
        let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[17, 17]).unwrap();
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.9, grid).unwrap());
        let sys = assemble(&strong, mask).unwrap();
        assert!(!sys.diag_a());
        let rep = sys.check_mmatrix();
        assert!(!rep.pass && rep.sign_violations > 0 && !rep.sign_witnesses.is_empty());
        // the centered mixed stencil is still W-symmetric
        assert!(sys.nu_asymmetry() <= 1e-12);
    }

    #[test]
    fn tilde_zero_order() {
        let t = tilde_transform(&lap(2), &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(t.zero_order(&[0.0, 0.0]).unwrap(), -4.0);
        assert!(matches!(t.weight(&[1.0, 0.5]), Err(Error::OutsideBallOfValidity { .. })));

        let g = gallery("grushin_fedii", &Params::new()).unwrap();
        let t = tilde_transform(&g, &[0.5, 0.0], 1.0).unwrap();
        let exact = -2.0 * (1.0 + (-8.0f64).exp());
        assert!((t.zero_order(&[0.5, 0.0]).unwrap() - exact).abs() < 1e-15);

        let grid = build_grid(&[(0.0, 1.0), (-0.5, 0.5)], &[65, 65]).unwrap();
        let mask = Arc::new(box_domain(&[0.0, -0.5], &[1.0, 0.5], grid).unwrap());
        let base = assemble(&g, mask.clone()).unwrap();
        let tilde = t.assemble(&base).unwrap();
        let ones_i = vec![1.0; tilde.n_interior()];
        let ones_b = vec![1.0; mask.n_boundary()];
        let applied = tilde.apply(&ones_i, &ones_b);
        let at = mask.interior_pos(mask.grid().locate(&[0.5, 0.0]).unwrap()).unwrap();
        assert!((applied[at] - exact).abs() < 1e-6, "{}", applied[at]);
    }

    #[test]
    fn point_stencil_matches_assembly() {
        let spec = gallery("lie2d", &Params::new()).unwrap().with_epsilon(0.2).unwrap();
        let grid = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[9, 9]).unwrap();
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.9, grid).unwrap());
        let sys = assemble(&spec, mask.clone()).unwrap();
        let u = |x: &[f64]| (x[0] * 1.3).sin() + x[1] * x[1];
        let g = mask.grid();
        let ui: Vec<f64> = mask.interior().iter().map(|&n| u(&g.coord(n))).collect();
        let ub: Vec<f64> = mask.boundary().iter().map(|&n| u(&g.coord(n))).collect();
        let lu = sys.apply(&ui, &ub);
        for (k, &n) in mask.interior().iter().enumerate() {
            let p = apply_at_point(&spec, &g.coord(n), g.spacing(), &u).unwrap();
            assert!((p - lu[k]).abs() < 1e-10 * (1.0 + p.abs()));
        }
    }
}
