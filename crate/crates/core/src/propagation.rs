//! Integral curves of `span{X₀, X₁, …, X_N}`, reachability, strong maximum
//! principle probes, Hopf barriers and characteristic directions.

use rayon::prelude::*;
use serde::Serialize;

use crate::dirichlet::Field;
use crate::discretize::{apply_at_point, StencilSystem};
use crate::error::{Error, Result};
use crate::grid::DomainMask;
use crate::operator::{extract_fields, OperatorSpec, VectorFieldSet};

/// Field magnitude below which a control is treated as absent at a point.
pub const MIN_FIELD: f64 = 1e-12;
/// RK4 steps per reachability segment.
const SEGMENT_STEPS: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct Polyline {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Largest step-doubling error estimate per unit time.
    pub local_error: f64,
}

impl Polyline {
    pub fn end(&self) -> &[f64] {
        self.points.last().expect("polyline has a start point")
    }
}

fn rk4_step(fields: &VectorFieldSet, xi: &[f64], x: &[f64], dt: f64) -> Vec<f64> {
    let f = |p: &[f64]| fields.combination(xi, p);
    let shift = |p: &[f64], k: &[f64], s: f64| -> Vec<f64> { p.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = f(x);
    let k2 = f(&shift(x, &k1, dt / 2.0));
    let k3 = f(&shift(x, &k2, dt / 2.0));
    let k4 = f(&shift(x, &k3, dt));
    (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

fn inside(bbox: &[(f64, f64)], x: &[f64]) -> bool {
    x.iter().zip(bbox).all(|(v, (lo, hi))| v.is_finite() && *lo <= *v && *v <= *hi)
}

/// Integrates `γ̇ = ξ₀X₀(γ) + Σᵢ ξᵢXᵢ(γ)` from `x_start` up to `t_end` with
/// classical RK4 at step `dt`. Each step is also taken as two half steps; the
/// half-step result is kept and the difference feeds the error estimate.
pub fn integral_curve(
    spec: &OperatorSpec,
    x_start: &[f64],
    xi: &[f64],
    t_end: f64,
    dt: f64,
    bbox: &[(f64, f64)],
) -> Result<Polyline> {
    let n = spec.dim();
    if xi.len() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: xi.len() });
    }
    if x_start.len() != n || bbox.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x_start.len().min(bbox.len()) });
    }
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("need dt > 0 and finite t_end ≥ 0, got dt = {dt}, t_end = {t_end}")));
    }
    if !inside(bbox, x_start) {
        return Err(Error::LeftDomain { t: 0.0, point: x_start.to_vec() });
    }
    let fields = extract_fields(spec);
    let steps = (t_end / dt).ceil().max(if t_end > 0.0 { 1.0 } else { 0.0 }) as usize;
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let mut times = vec![0.0];
    let mut points = vec![x_start.to_vec()];
    let mut local_error = 0.0f64;
    let mut x = x_start.to_vec();
    for k in 0..steps {
        let full = rk4_step(&fields, xi, &x, h);
        let mid = rk4_step(&fields, xi, &x, h / 2.0);
        let half = rk4_step(&fields, xi, &mid, h / 2.0);
        let diff = full.iter().zip(&half).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        local_error = local_error.max(diff / 15.0 / h);
        x = half;
        let t = (k + 1) as f64 * h;
        if !inside(bbox, &x) {
            return Err(Error::LeftDomain { t, point: x });
        }
        times.push(t);
        points.push(x.clone());
    }
    Ok(Polyline { times, points, local_error })
}

#[derive(Debug, Clone, Serialize)]
pub struct Segment {
    pub xi: Vec<f64>,
    pub duration: f64,
    pub samples: Vec<Vec<f64>>,
    pub local_error: f64,
}

impl Segment {
    pub fn start(&self) -> &[f64] {
        &self.samples[0]
    }

    pub fn end(&self) -> &[f64] {
        self.samples.last().expect("segment has samples")
    }

    /// Distance between the recorded end and a re-integration at half the step.
    pub fn reintegration_gap(&self, spec: &OperatorSpec, bbox: &[(f64, f64)]) -> Result<f64> {
        let steps = (self.samples.len() - 1).max(1);
        let dt = self.duration / steps as f64;
        let again = integral_curve(spec, self.start(), &self.xi, self.duration, dt / 2.0, bbox)?;
        Ok(dist(again.end(), self.end()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlPath {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathValidation {
    pub max_gap: f64,
    pub max_local_error: f64,
    pub max_reintegration_gap: f64,
    pub valid: bool,
}

impl ControlPath {
    /// Checks continuity between segments, the local error bound and the
    /// half-step re-integration of every segment.
    pub fn validate(&self, spec: &OperatorSpec, bbox: &[(f64, f64)]) -> Result<PathValidation> {
        let mut max_gap = 0.0f64;
        let mut prev = self.start.as_slice();
        for s in &self.segments {
            max_gap = max_gap.max(dist(prev, s.start()));
            prev = s.end();
        }
        max_gap = max_gap.max(dist(prev, &self.end));
        let max_local_error = self.segments.iter().fold(0.0f64, |m, s| m.max(s.local_error));
        let mut max_reintegration_gap = 0.0f64;
        for s in &self.segments {
            max_reintegration_gap = max_reintegration_gap.max(s.reintegration_gap(spec, bbox)?);
        }
        let valid = max_gap <= 1e-9 && max_local_error <= 1e-8 && max_reintegration_gap <= 1e-6;
        Ok(PathValidation { max_gap, max_local_error, max_reintegration_gap, valid })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment,t");
        for i in 0..self.start.len() {
            out.push_str(&format!(",x{}", i + 1));
        }
        out.push('\n');
        for (k, s) in self.segments.iter().enumerate() {
            let m = (s.samples.len() - 1).max(1) as f64;
            for (j, p) in s.samples.iter().enumerate() {
                out.push_str(&format!("{k},{}", s.duration * j as f64 / m));
                for v in p {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct ReachReport {
    pub start: Vec<f64>,
    pub start_node: usize,
    /// Reached interior nodes in order of discovery.
    pub reached: Vec<usize>,
    pub n_interior: usize,
    pub coverage: f64,
    /// True when every interior node was reached.
    pub complete: bool,
    pub budget_exhausted: bool,
    pub segments_tried: usize,
    /// Largest half-step re-integration gap over the tree's segments.
    pub max_reintegration_gap: f64,
    pub max_local_error: f64,
    #[serde(skip)]
    tree: Vec<Option<(usize, Segment)>>,
}

impl ReachReport {
    pub fn is_reached(&self, node: usize) -> bool {
        node == self.start_node || self.tree.get(node).is_some_and(|t| t.is_some())
    }

    /// The control path from the start to the landing point in `node`'s cell.
    pub fn path_to(&self, node: usize) -> Option<ControlPath> {
        if !self.is_reached(node) {
            return None;
        }
        let mut segments = Vec::new();
        let mut cur = node;
        while let Some((parent, seg)) = &self.tree[cur] {
            segments.push(seg.clone());
            cur = *parent;
        }
        segments.reverse();
        let end = segments.last().map(|s| s.end().to_vec()).unwrap_or_else(|| self.start.clone());
        Some(ControlPath { start: self.start.clone(), end, segments })
    }
}

/// Control dictionary: `±X₀, ±X₁, …, ±X_N` as coefficient vectors.
fn controls(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * (n + 1));
    for k in 0..=n {
        for s in [1.0, -1.0] {
            let mut xi = vec![0.0; n + 1];
            xi[k] = s;
            out.push(xi);
        }
    }
    out
}

fn in_region(mask: &DomainMask, x: &[f64]) -> bool {
    match mask.shape().closure_contains(x) {
        Some(b) => b,
        None => mask.grid().locate(x).is_some_and(|n| mask.in_closure(n)),
    }
}

/// Breadth-first expansion from `x_start` over single-cell moves along the
/// control dictionary. Each move runs long enough to cross one cell along the
/// direction of `F(p)` (the length `1 / maxᵢ(|Fᵢ| / (|F| hᵢ))`, which is `hᵢ`
/// for a move along axis `i`) and continues from
/// its actual landing point; the landing cell is the nearest grid node. Moves
/// whose field is below [`MIN_FIELD`] at the start, that leave the closed
/// domain, or that land on a non-interior node are discarded.
pub fn reachable_set(spec: &OperatorSpec, x_start: &[f64], mask: &DomainMask, step_budget: usize) -> Result<ReachReport> {
    let grid = mask.grid();
    let n = spec.dim();
    if x_start.len() != n || grid.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x_start.len() });
    }
    let start_node = grid
        .locate(x_start)
        .filter(|&node| mask.interior_pos(node).is_some())
        .ok_or_else(|| Error::PreconditionViolated(format!("start {x_start:?} is not in an interior cell")))?;
    let fields = extract_fields(spec);
    let bbox = grid.bounds();
    let spacing = grid.spacing().to_vec();
    let dictionary = controls(n);

    let mut tree: Vec<Option<(usize, Segment)>> = vec![None; grid.len()];
    let mut landing: Vec<Option<Vec<f64>>> = vec![None; grid.len()];
    landing[start_node] = Some(x_start.to_vec());
    let mut reached = vec![start_node];
    let mut frontier = vec![start_node];
    let mut tried = 0usize;
    let mut budget_exhausted = false;
    let mut max_local_error = 0.0f64;

    while !frontier.is_empty() {
        frontier.sort_unstable();
        let moves = frontier.len() * dictionary.len();
        if tried + moves > step_budget {
            budget_exhausted = true;
            break;
        }
        tried += moves;
        let candidates: Vec<Vec<(usize, Segment)>> = frontier
            .par_iter()
            .map(|&node| {
                let p = landing[node].as_ref().expect("frontier node has a landing point");
                dictionary
                    .iter()
                    .filter_map(|xi| {
                        let f = fields.combination(xi, p);
                        let speed = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if !(speed >= MIN_FIELD) {
                            return None;
                        }
                        // Time to cross one cell: the first axis whose spacing is used up.
                        let rate = f.iter().zip(&spacing).map(|(v, h)| v.abs() / h).fold(0.0, f64::max);
                        let duration = 1.0 / rate;
                        let curve = integral_curve(spec, p, xi, duration, duration / SEGMENT_STEPS as f64, &bbox).ok()?;
                        if !curve.points.iter().all(|q| in_region(mask, q)) {
                            return None;
                        }
                        let target = grid.locate(curve.end())?;
                        mask.interior_pos(target)?;
                        let seg = Segment { xi: xi.clone(), duration, samples: curve.points, local_error: curve.local_error };
                        Some((target, seg))
                    })
                    .collect()
            })
            .collect();
        let mut next = Vec::new();
        for (&node, list) in frontier.iter().zip(candidates) {
            for (target, seg) in list {
                if landing[target].is_none() {
                    max_local_error = max_local_error.max(seg.local_error);
                    landing[target] = Some(seg.end().to_vec());
                    tree[target] = Some((node, seg));
                    reached.push(target);
                    next.push(target);
                }
            }
        }
        frontier = next;
    }

    let max_reintegration_gap = tree
        .par_iter()
        .filter_map(|t| t.as_ref())
        .map(|(_, seg)| seg.reintegration_gap(spec, &bbox).unwrap_or(f64::INFINITY))
        .reduce(|| 0.0, f64::max);
    let n_interior = mask.n_interior();
    Ok(ReachReport {
        start: x_start.to_vec(),
        start_node,
        coverage: reached.len() as f64 / n_interior as f64,
        complete: reached.len() == n_interior,
        reached,
        n_interior,
        budget_exhausted,
        segments_tried: tried,
        max_reintegration_gap,
        max_local_error,
        tree,
    })
}

/// Default move budget for [`reachable_set`]: every interior node expanded
/// once over the full dictionary.
pub fn default_budget(mask: &DomainMask) -> usize {
    mask.n_interior() * 2 * (mask.dim() + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmpOutcome {
    /// The interior maximum is attained and `u` stays within tolerance of it
    /// on the reachable set of the maximizer.
    ConstantOnReachableSet,
    NoInteriorMaximum,
    /// Interior maximum attained but `u` deviates on the reachable set.
    Violated,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmpReport {
    pub outcome: SmpOutcome,
    pub pass: bool,
    pub tol: f64,
    pub interior_max: f64,
    pub boundary_max: f64,
    pub argmax: usize,
    pub reach_coverage: Option<f64>,
    pub max_deviation: Option<f64>,
    pub deviation_witness: Option<usize>,
    pub min_residual: f64,
}

/// Strong maximum principle probe on a discrete subsolution.
///
/// The default tolerance is `1e-7·osc(u)`, floored at `1e-12·sup|u|` so that
/// rounding in a computed constant is not mistaken for a deviation.
pub fn smp_test(sys: &StencilSystem, u: &Field, tol: Option<f64>) -> Result<SmpReport> {
    let mask = sys.mask();
    let ui = u.interior_values();
    let ub = u.boundary_values();
    let sup = u.sup_norm();
    let lu = sys.apply(&ui, &ub);
    let row_norm = (0..sys.n_interior())
        .map(|r| sys.matrix().row(r).chain(sys.boundary_map().row(r)).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let tol_res = 1e-10 * row_norm * sup;
    let min_residual = lu.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_residual < -tol_res {
        return Err(Error::PreconditionViolated(format!("u is not subharmonic: (Lu) = {min_residual:e} below {:e}", -tol_res)));
    }
    let (argmax, interior_max) = u.interior_max();
    let (_, boundary_max) = u.boundary_max();
    let lo = ui.iter().chain(&ub).cloned().fold(f64::INFINITY, f64::min);
    let hi = interior_max.max(boundary_max);
    let tol = tol.unwrap_or_else(|| (1e-7 * (hi - lo)).max(1e-12 * sup));
    if interior_max < boundary_max - tol {
        return Ok(SmpReport {
            outcome: SmpOutcome::NoInteriorMaximum,
            pass: true,
            tol,
            interior_max,
            boundary_max,
            argmax,
            reach_coverage: None,
            max_deviation: None,
            deviation_witness: None,
            min_residual,
        });
    }
    let x = mask.grid().coord(argmax);
    let reach = reachable_set(sys.spec(), &x, mask, default_budget(mask))?;
    let mut max_deviation = 0.0f64;
    let mut witness = argmax;
    for &node in &reach.reached {
        let d = interior_max - u.get(node);
        if d > max_deviation {
            max_deviation = d;
            witness = node;
        }
    }
    let pass = max_deviation <= tol;
    Ok(SmpReport {
        outcome: if pass { SmpOutcome::ConstantOnReachableSet } else { SmpOutcome::Violated },
        pass,
        tol,
        interior_max,
        boundary_max,
        argmax,
        reach_coverage: Some(reach.coverage),
        max_deviation: Some(max_deviation),
        deviation_witness: Some(witness),
        min_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub spacings: Vec<f64>,
    pub discrete: Vec<f64>,
    pub errors: Vec<f64>,
    /// Observed orders between consecutive spacings.
    pub orders: Vec<f64>,
}

impl CrossCheck {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfCertificate {
    pub y: Vec<f64>,
    pub nu: Vec<f64>,
    pub lambda: f64,
    pub lw_at_y: f64,
    /// `⟨A(y)ν, ν⟩`.
    pub a_nu_nu: f64,
    /// `Σⱼ (aⱼⱼ(y) − bⱼ(y)νⱼ)`.
    pub drift_sum: f64,
    /// `Σⱼ (aⱼⱼ − bⱼνⱼ) / (2⟨Aν, ν⟩)`; `lambda` strictly exceeds it.
    pub threshold: f64,
    pub cross_check: Option<CrossCheck>,
}

impl HopfCertificate {
    /// `w(x) = exp(−λ|x − (y+ν)|²) − exp(−λ|ν|²)`.
    pub fn barrier(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(self.y.iter().zip(&self.nu)).map(|(x, (y, n))| (x - y - n).powi(2)).sum();
        let nu2: f64 = self.nu.iter().map(|v| v * v).sum();
        (-self.lambda * r2).exp() - (-self.lambda * nu2).exp()
    }
}

/// Hopf barrier at `y` for the outward direction `ν`. When `h` is given the
/// closed-form `Lw(y)` is compared against the discrete operator applied to
/// the sampled barrier at spacings `s`, `s/2`, `s/4` with
/// `s = min(h, 1/(8√λ))`: the barrier varies on the scale `1/√λ`, and coarser
/// samples are outside the asymptotic `O(s²)` regime.
pub fn hopf_certificate(spec: &OperatorSpec, y: &[f64], nu: &[f64], h: Option<f64>) -> Result<HopfCertificate> {
    let n = spec.dim();
    if y.len() != n || nu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len().min(nu.len()) });
    }
    let q = spec.quadratic_form(y, nu);
    if !(q > 0.0) {
        return Err(Error::CharacteristicDirection { value: q });
    }
    let a = spec.a_at(y);
    let b = extract_fields(spec).drift_b(y);
    let drift_sum: f64 = (0..n).map(|j| a[j * n + j] - b[j] * nu[j]).sum();
    let threshold = drift_sum / (2.0 * q);
    let lambda = 2.0 * threshold.max(1.0);
    let nu2: f64 = nu.iter().map(|v| v * v).sum();
    let lw_at_y = lambda * lambda * (-lambda * nu2).exp() * (4.0 * q - 2.0 / lambda * drift_sum);
    let mut cert = HopfCertificate { y: y.to_vec(), nu: nu.to_vec(), lambda, lw_at_y, a_nu_nu: q, drift_sum, threshold, cross_check: None };
    if let Some(h) = h {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("cross-check spacing must be positive, got {h}")));
        }
        let s0 = h.min(1.0 / (8.0 * lambda.sqrt()));
        let spacings = vec![s0, s0 / 2.0, s0 / 4.0];
        let mut discrete = Vec::new();
        for &s in &spacings {
            discrete.push(apply_at_point(spec, y, &vec![s; n], &|x| cert.barrier(x))?);
        }
        let errors: Vec<f64> = discrete.iter().map(|d| (d - lw_at_y).abs()).collect();
        let orders = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
        cert.cross_check = Some(CrossCheck { spacings, discrete, errors, orders });
    }
    Ok(cert)
}

#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicReport {
    pub characteristic: bool,
    pub value: f64,
    pub tol: f64,
}

/// Whether `⟨A(y)ν, ν⟩ ≤ tol`, default `tol = 1e-14·|ν|²`.
pub fn characteristic_test(spec: &OperatorSpec, y: &[f64], nu: &[f64], tol: Option<f64>) -> Result<CharacteristicReport> {
    let nu2: f64 = nu.iter().map(|v| v * v).sum();
    if nu2 == 0.0 {
        return Err(Error::InvalidParameter("ν must be nonzero".into()));
    }
    let value = spec.quadratic_form(y, nu);
    let tol = tol.unwrap_or(1e-14 * nu2);
    Ok(CharacteristicReport { characteristic: value <= tol, value, tol })
}
