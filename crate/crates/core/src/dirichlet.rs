//! Discrete Dirichlet problems `(L − c − ε) u = −f` in the interior, `u = φ`
//! on the boundary nodes.

use std::sync::Arc;

use serde::Serialize;

use crate::discretize::StencilSystem;
use crate::error::{Error, Result};
use crate::grid::{DomainMask, NodeStatus};
use crate::linsolve::{LinearSolver, SolverKind, SolverOptions};
use crate::operator::OperatorSpec;

/// Values over every grid node of a mask; exterior nodes hold zero.
#[derive(Debug, Clone)]
pub struct Field {
    mask: Arc<DomainMask>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(mask: Arc<DomainMask>) -> Field {
        let n = mask.grid().len();
        Field { mask, values: vec![0.0; n] }
    }

    pub fn constant(mask: Arc<DomainMask>, c: f64) -> Field {
        Field::from_fn(mask, |_| c)
    }

    /// Samples `f` at interior and boundary nodes.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(mask: Arc<DomainMask>, f: F) -> Field {
        let grid = mask.grid();
        let mut values = vec![0.0; grid.len()];
        let mut x = vec![0.0; grid.dim()];
        for &n in mask.interior().iter().chain(mask.boundary()) {
            grid.coord_into(n, &mut x);
            values[n] = f(&x);
        }
        Field { mask, values }
    }

    pub fn from_parts(mask: Arc<DomainMask>, interior: &[f64], boundary: &[f64]) -> Field {
        assert_eq!(interior.len(), mask.n_interior());
        assert_eq!(boundary.len(), mask.n_boundary());
        let mut values = vec![0.0; mask.grid().len()];
        for (&n, v) in mask.interior().iter().zip(interior) {
            values[n] = *v;
        }
        for (&n, v) in mask.boundary().iter().zip(boundary) {
            values[n] = *v;
        }
        Field { mask, values }
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn mask_arc(&self) -> Arc<DomainMask> {
        self.mask.clone()
    }

    /// Values indexed by grid node.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn set(&mut self, node: usize, v: f64) {
        assert_ne!(self.mask.status(node), NodeStatus::Exterior, "cannot set an exterior node");
        self.values[node] = v;
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.mask.interior().iter().map(|&n| self.values[n]).collect()
    }

    pub fn boundary_values(&self) -> Vec<f64> {
        self.mask.boundary().iter().map(|&n| self.values[n]).collect()
    }

    pub fn set_interior(&mut self, values: &[f64]) {
        for (&n, v) in self.mask.interior().iter().zip(values) {
            self.values[n] = *v;
        }
    }

    pub fn set_boundary(&mut self, values: &[f64]) {
        for (&n, v) in self.mask.boundary().iter().zip(values) {
            self.values[n] = *v;
        }
    }

    /// Sup norm over interior and boundary nodes.
    pub fn sup_norm(&self) -> f64 {
        self.mask.interior().iter().chain(self.mask.boundary()).fold(0.0, |m, &n| m.max(self.values[n].abs()))
    }

    pub fn interior_max(&self) -> (usize, f64) {
        argmax(self.mask.interior(), &self.values)
    }

    pub fn boundary_max(&self) -> (usize, f64) {
        argmax(self.mask.boundary(), &self.values)
    }

    pub fn sup_distance(&self, other: &Field) -> f64 {
        self.mask
            .interior()
            .iter()
            .chain(self.mask.boundary())
            .fold(0.0, |m, &n| m.max((self.values[n] - other.values[n]).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.mask.interior().iter().chain(self.mask.boundary()).all(|&n| self.values[n].is_finite())
    }

    pub fn to_csv(&self) -> String {
        let grid = self.mask.grid();
        let mut out = String::from("index");
        for i in 0..grid.dim() {
            out.push_str(&format!(",x{}", i + 1));
        }
        out.push_str(",value\n");
        let mut x = vec![0.0; grid.dim()];
        for &n in self.mask.interior().iter().chain(self.mask.boundary()) {
            grid.coord_into(n, &mut x);
            out.push_str(&n.to_string());
            for v in &x {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{:.17e}\n", self.values[n]));
        }
        out
    }
}

fn argmax(nodes: &[usize], values: &[f64]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for &n in nodes {
        if values[n] > best.1 {
            best = (n, values[n]);
        }
    }
    best
}

/// A factorized system, reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    sys: StencilSystem,
    solver: LinearSolver,
}

impl DirichletSolver {
    pub fn new(sys: StencilSystem) -> Result<DirichletSolver> {
        Self::with_options(sys, SolverOptions::default())
    }

    /// The iterative path is only taken for self-adjoint systems.
    pub fn with_options(sys: StencilSystem, options: SolverOptions) -> Result<DirichletSolver> {
        let weights = sys.self_adjoint().then(|| sys.nu_weights());
        let solver = LinearSolver::new(sys.matrix(), weights, options)?;
        Ok(DirichletSolver { sys, solver })
    }

    pub fn system(&self) -> &StencilSystem {
        &self.sys
    }

    pub fn kind(&self) -> SolverKind {
        self.solver.kind()
    }

    pub fn linear(&self) -> &LinearSolver {
        &self.solver
    }

    /// Solves `matrix · u = rhs` for interior values.
    pub fn solve_interior(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(rhs)
    }

    pub fn solve_interior_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve_transpose(rhs)
    }

    /// Interior values for data `f` (interior) and `φ` (boundary).
    pub fn solve_parts(&self, f: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
        let bphi = self.sys.boundary_map().matvec(phi);
        let rhs: Vec<f64> = f.iter().zip(&bphi).map(|(f, b)| -f - b).collect();
        self.solve_interior(&rhs)
    }

    pub fn solve(&self, f: &Field, phi: &Field) -> Result<Field> {
        let phi_b = phi.boundary_values();
        let u = self.solve_parts(&f.interior_values(), &phi_b)?;
        Ok(Field::from_parts(self.sys.mask_arc(), &u, &phi_b))
    }
}

/// One-shot solve; see [`DirichletSolver`] to reuse the factorization.
pub fn solve(sys: &StencilSystem, f: &Field, phi: &Field) -> Result<Field> {
    DirichletSolver::new(sys.clone())?.solve(f, phi)
}

/// Largest `c₀` with discrete `L(1) ≤ −c₀` at every interior row.
pub fn certified_c0(sys: &StencilSystem) -> f64 {
    let a = sys.matrix().row_sums();
    let b = sys.boundary_map().row_sums();
    a.iter().zip(&b).map(|(x, y)| -(x + y)).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub n_list: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// Certified `c₀ > 0` (`None` when the row sums do not certify one).
    pub c0: Option<f64>,
    /// `max(‖φ‖∞, ‖f‖∞ / c₀)`.
    pub bound: Option<f64>,
    pub bound_holds: bool,
    /// `‖u_{n_{k+1}} − u_{n_k}‖∞`.
    pub consecutive_distances: Vec<f64>,
    /// `‖u_n − u_∞‖∞` where `u_∞` solves the unregularized system.
    pub distances_to_limit: Option<Vec<f64>>,
    pub monotone_decreasing: bool,
    /// `max_k n_k · ‖u_{n_{k+1}} − u_{n_k}‖∞`.
    pub observed_constant: f64,
    #[serde(skip)]
    pub solutions: Vec<Field>,
}

/// Solves with `Pₙ = P + (1/n) Δ` for each `n` and reports the uniform sup
/// bound and the Cauchy behaviour of the sequence.
pub fn regularization_ladder(spec: &OperatorSpec, mask: Arc<DomainMask>, f: &Field, phi: &Field, n_list: &[f64]) -> Result<LadderReport> {
    if n_list.is_empty() {
        return Err(Error::InvalidParameter("n_list must not be empty".into()));
    }
    if n_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("n_list must be strictly increasing".into()));
    }
    let base = crate::discretize::assemble(spec, mask)?;
    let mut solutions = Vec::with_capacity(n_list.len());
    let mut c0 = f64::INFINITY;
    for &n in n_list {
        let sys = base.regularize(n)?;
        c0 = c0.min(certified_c0(&sys));
        solutions.push(solve(&sys, f, phi)?);
    }
    let sup_norms: Vec<f64> = solutions.iter().map(Field::sup_norm).collect();
    let c0 = (c0 > 0.0).then_some(c0);
    let f_sup = f.mask().interior().iter().fold(0.0f64, |m, &n| m.max(f.get(n).abs()));
    let phi_sup = phi.mask().boundary().iter().fold(0.0f64, |m, &n| m.max(phi.get(n).abs()));
    let bound = c0.map(|c| phi_sup.max(f_sup / c));
    let bound_holds = match bound {
        Some(b) => sup_norms.iter().all(|s| *s <= b * (1.0 + 1e-10)),
        None => false,
    };
    let consecutive_distances: Vec<f64> = solutions.windows(2).map(|w| w[0].sup_distance(&w[1])).collect();
    let monotone_decreasing = consecutive_distances.windows(2).all(|w| w[1] < w[0]);
    let observed_constant = consecutive_distances.iter().zip(n_list).map(|(d, n)| d * n).fold(0.0, f64::max);
    let distances_to_limit = match solve(&base, f, phi) {
        Ok(limit) => Some(solutions.iter().map(|u| u.sup_distance(&limit)).collect()),
        Err(Error::SingularSystem { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(LadderReport {
        n_list: n_list.to_vec(),
        sup_norms,
        c0,
        bound,
        bound_holds,
        consecutive_distances,
        distances_to_limit,
        monotone_decreasing,
        observed_constant,
        solutions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Implication {
    /// Premise and conclusion both hold.
    Holds,
    /// The premise (`u ≤ tol` on the boundary) is false.
    Vacuous,
    Violated,
}

#[derive(Debug, Clone, Serialize)]
pub struct WmpReport {
    pub pass: bool,
    /// `(L_h u)ᵢ ≥ −tol` at every interior row.
    pub subsolution: bool,
    pub min_residual: f64,
    pub residual_tol: f64,
    pub interior_max: f64,
    pub boundary_max: f64,
    pub implication: Implication,
    /// `sup_Ω̄ u = sup_∂Ω u` within tolerance; `None` when `u < 0` everywhere.
    pub sup_on_boundary: Option<bool>,
    pub witness: Option<usize>,
}

/// Checks the weak maximum principle for `u`.
pub fn wmp_check(sys: &StencilSystem, u: &Field) -> WmpReport {
    let lu = sys.apply(&u.interior_values(), &u.boundary_values());
    let mask = sys.mask();
    let scale = u.sup_norm();
    let row_norm = (0..sys.n_interior())
        .map(|r| sys.matrix().row(r).chain(sys.boundary_map().row(r)).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let residual_tol = 1e-10 * row_norm * scale;
    let (worst_row, min_residual) =
        lu.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, v)| if *v < acc.1 { (k, *v) } else { acc });
    let subsolution = min_residual >= -residual_tol;
    let (imax_node, interior_max) = u.interior_max();
    let (_, boundary_max) = u.boundary_max();
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let implication = if boundary_max > tol {
        Implication::Vacuous
    } else if interior_max <= tol {
        Implication::Holds
    } else {
        Implication::Violated
    };
    let sup_on_boundary = (interior_max.max(boundary_max) >= 0.0).then(|| interior_max <= boundary_max.max(0.0) + tol);
    let mut witness = None;
    if !subsolution {
        witness = Some(mask.interior()[worst_row]);
    } else if implication == Implication::Violated || sup_on_boundary == Some(false) {
        witness = Some(imax_node);
    }
    WmpReport {
        pass: subsolution && implication != Implication::Violated && sup_on_boundary != Some(false),
        subsolution,
        min_residual,
        residual_tol,
        interior_max,
        boundary_max,
        implication,
        sup_on_boundary,
        witness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::assemble;
    use crate::grid::{ball_domain, box_domain, build_grid};
    use crate::operator::{gallery, Params};

    fn laplace() -> OperatorSpec {
        gallery("laplace", &Params::new()).unwrap()
    }

    fn interval(n: usize) -> Arc<DomainMask> {
        Arc::new(box_domain(&[0.0], &[1.0], build_grid(&[(0.0, 1.0)], &[n]).unwrap()).unwrap())
    }

    fn laplace1() -> OperatorSpec {
        let mut p = Params::new();
        p.insert("dim".into(), crate::operator::ParamValue::Num(1.0));
        gallery("laplace", &p).unwrap()
    }

    #[test]
    fn constants_are_harmonic() {
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.8, build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[21, 21]).unwrap()).unwrap());
        let sys = assemble(&laplace(), mask.clone()).unwrap();
        let u = solve(&sys, &Field::zeros(mask.clone()), &Field::constant(mask, 1.0)).unwrap();
        for v in u.interior_values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_parabola() {
        let mask = interval(33);
        let sys = assemble(&laplace1(), mask.clone()).unwrap();
        let u = solve(&sys, &Field::constant(mask.clone(), 1.0), &Field::zeros(mask.clone())).unwrap();
        let mid = mask.grid().locate(&[0.5]).unwrap();
        // the 3-point scheme is exact on quadratics
        assert!((u.get(mid) - 0.125).abs() < 1e-12);
        for &n in mask.interior() {
            let x = mask.grid().coord(n)[0];
            assert!((u.get(n) - x * (1.0 - x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_without_shift() {
        let degenerate = OperatorSpec::new("zero", 2, |_, o| o.fill(0.0), |_| 1.0).unwrap();
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.8, build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[9, 9]).unwrap()).unwrap());
        let sys = assemble(&degenerate, mask).unwrap();
        assert!(matches!(DirichletSolver::new(sys), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn ladder_on_laplace_is_flat_in_shape() {
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.8, build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[17, 17]).unwrap()).unwrap());
        let spec = laplace().with_epsilon(0.1).unwrap();
        let f = Field::constant(mask.clone(), 1.0);
        let phi = Field::zeros(mask.clone());
        let rep = regularization_ladder(&spec, mask, &f, &phi, &[10.0, 100.0, 1000.0]).unwrap();
        assert!(rep.bound_holds);
        assert!((rep.c0.unwrap() - 0.1).abs() < 1e-9);
        assert!(rep.monotone_decreasing);
        assert!(regularization_ladder(&spec, rep.solutions[0].mask_arc(), &f, &phi, &[10.0, 5.0]).is_err());
    }

    #[test]
    fn wmp_examples() {
        let mask = Arc::new(ball_domain(&[0.0, 0.0], 0.8, build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[17, 17]).unwrap()).unwrap());
        let sys = assemble(&laplace(), mask.clone()).unwrap();
        let phi = Field::from_fn(mask.clone(), |x| 1.0 + x[0] * x[1] + x[0]);
        let u = solve(&sys, &Field::zeros(mask.clone()), &phi).unwrap();
        let r = wmp_check(&sys, &u);
        assert!(r.pass && r.subsolution && r.sup_on_boundary == Some(true));
        assert!(r.interior_max <= r.boundary_max + 1e-10);

        let neg = Field::constant(mask.clone(), -1.0);
        let r = wmp_check(&sys, &neg);
        assert!(r.pass);
        assert_eq!(r.implication, Implication::Holds);
        assert_eq!(r.sup_on_boundary, None);

        let mut spike = Field::zeros(mask.clone());
        let center = mask.grid().locate(&[0.0, 0.0]).unwrap();
        spike.set(center, 1.0);
        let r = wmp_check(&sys, &spike);
        assert!(!r.pass && !r.subsolution);
        assert_eq!(r.witness, Some(center));
    }
}
