//! Divergence-form operators `L u = (1/V) Σ ∂ᵢ(V aᵢⱼ ∂ⱼ u) - c u - ε u`,
//! the gallery of degenerate examples and the vector fields `X₀, X₁, …, X_N`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Fills the output slice; used for vectors (length N) and row-major N×N matrices.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Coefficient magnitudes below this are flushed to exactly zero.
pub const FLUSH_BELOW: f64 = 1e-300;
/// Relative symmetry tolerance for `A(x)`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// PSD tolerance factor: smallest eigenvalue must exceed `-PSD_TOL * (1 + trace)`.
pub const PSD_TOL: f64 = 1e-10;

/// Whether hypoellipticity of the operator is backed by a literature result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Hypoellipticity {
    Certified { reference: String },
    AssertedByUser,
}

/// A gallery parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Text(String),
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Clone)]
pub struct OperatorSpec {
    name: String,
    dim: usize,
    a: VectorFn,
    v: ScalarFn,
    c: ScalarFn,
    c_is_zero: bool,
    epsilon: f64,
    grad_v: Option<VectorFn>,
    div_a: Option<VectorFn>,
    hypoelliptic: Hypoellipticity,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("epsilon", &self.epsilon)
            .field("c_is_zero", &self.c_is_zero)
            .field("analytic_grad_v", &self.grad_v.is_some())
            .field("analytic_div_a", &self.div_a.is_some())
            .field("hypoelliptic", &self.hypoelliptic)
            .finish()
    }
}

impl OperatorSpec {
    /// Builds an operator from a matrix field (row-major, `dim × dim`) and a
    /// positive density `v`. The zero-order term starts as `c ≡ 0` and `ε = 0`.
    pub fn new<A, V>(name: impl Into<String>, dim: usize, a: A, v: V) -> Result<Self>
    where
        A: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidOperator("dimension must be positive".into()));
        }
        Ok(OperatorSpec {
            name: name.into(),
            dim,
            a: Arc::new(a),
            v: Arc::new(v),
            c: Arc::new(|_| 0.0),
            c_is_zero: true,
            epsilon: 0.0,
            grad_v: None,
            div_a: None,
            hypoelliptic: Hypoellipticity::AssertedByUser,
        })
    }

    /// Builds a user-defined operator from expression strings. `a` is the full
    /// `dim × dim` coefficient matrix; `c` defaults to zero.
    pub fn from_expressions(a: &[Vec<String>], v: &str, c: Option<&str>) -> Result<Self> {
        let dim = a.len();
        if dim == 0 {
            return Err(Error::InvalidOperator("coefficient matrix is empty".into()));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in a {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            for s in row {
                entries.push(Expr::parse(s, dim)?);
            }
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j].source().trim() != entries[j * dim + i].source().trim() {
                    return Err(Error::InvalidOperator(format!(
                        "a[{i}][{j}] and a[{j}][{i}] differ; the coefficient matrix must be symmetric"
                    )));
                }
            }
        }
        let v = Expr::parse(v, dim)?;
        let entries = Arc::new(entries);
        let mut spec = OperatorSpec::new(
            "user",
            dim,
            move |x, out| {
                for (o, e) in out.iter_mut().zip(entries.iter()) {
                    *o = e.eval(x);
                }
            },
            move |x| v.eval(x),
        )?;
        if let Some(c) = c {
            let c = Expr::parse(c, dim)?;
            let zero = c.is_constant() && c.eval(&vec![0.0; dim]) == 0.0;
            spec.c = Arc::new(move |x| c.eval(x));
            spec.c_is_zero = zero;
        }
        Ok(spec)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidOperator(format!("shift must be finite and >= 0, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Sets the zero-order term `c` (expected nonnegative).
    pub fn with_c<C>(mut self, c: C) -> Self
    where
        C: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.c = Arc::new(c);
        self.c_is_zero = false;
        self
    }

    pub fn with_grad_v<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.grad_v = Some(Arc::new(g));
        self
    }

    /// Sets the analytic column divergence `j ↦ Σᵢ ∂ᵢ aᵢⱼ`.
    pub fn with_div_a<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.div_a = Some(Arc::new(g));
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn certified(mut self, reference: &str) -> Self {
        self.hypoelliptic = Hypoellipticity::Certified { reference: reference.to_string() };
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn c_is_zero(&self) -> bool {
        self.c_is_zero
    }

    pub fn hypoelliptic(&self) -> &Hypoellipticity {
        &self.hypoelliptic
    }

    /// Writes `A(x)` (row-major) into `out`, flushing tiny entries to zero.
    pub fn a_into(&self, x: &[f64], out: &mut [f64]) {
        (self.a)(x, out);
        for v in out.iter_mut() {
            if v.abs() < FLUSH_BELOW {
                *v = 0.0;
            }
        }
    }

    pub fn a_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.a_into(x, &mut out);
        out
    }

    pub fn v_at(&self, x: &[f64]) -> f64 {
        (self.v)(x)
    }

    pub fn c_at(&self, x: &[f64]) -> f64 {
        if self.c_is_zero {
            0.0
        } else {
            (self.c)(x)
        }
    }

    pub fn trace_at(&self, x: &[f64]) -> f64 {
        let a = self.a_at(x);
        (0..self.dim).map(|i| a[i * self.dim + i]).sum()
    }

    /// `⟨A(x)ν, ν⟩`.
    pub fn quadratic_form(&self, x: &[f64], nu: &[f64]) -> f64 {
        let a = self.a_at(x);
        let n = self.dim;
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += a[i * n + j] * nu[i] * nu[j];
            }
        }
        q
    }

    fn fd_step(x: &[f64]) -> f64 {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        1e-5 * (1.0 + norm)
    }

    /// `∇V(x)`, analytic when available, else centered differences.
    pub fn grad_v_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if let Some(g) = &self.grad_v {
            g(x, &mut out);
            return out;
        }
        let h = Self::fd_step(x);
        let mut xp = x.to_vec();
        for i in 0..self.dim {
            xp[i] = x[i] + h;
            let fp = self.v_at(&xp);
            xp[i] = x[i] - h;
            let fm = self.v_at(&xp);
            xp[i] = x[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    /// Column divergence `Σᵢ ∂ᵢ aᵢⱼ(x)` for each `j`.
    pub fn div_a_at(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        if let Some(g) = &self.div_a {
            g(x, &mut out);
            return out;
        }
        let h = Self::fd_step(x);
        let mut xp = x.to_vec();
        let mut ap = vec![0.0; n * n];
        let mut am = vec![0.0; n * n];
        for i in 0..n {
            xp[i] = x[i] + h;
            (self.a)(&xp, &mut ap);
            xp[i] = x[i] - h;
            (self.a)(&xp, &mut am);
            xp[i] = x[i];
            for j in 0..n {
                out[j] += (ap[i * n + j] - am[i * n + j]) / (2.0 * h);
            }
        }
        out
    }

    /// Validates the pointwise invariants: symmetry, positive semi-definiteness
    /// and positivity of the density.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let n = self.dim;
        let a = self.a_at(x);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidOperator(format!("non-finite A at {x:?}")));
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (a[i * n + j] - a[j * n + i]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidOperator(format!("A not symmetric at {x:?}")));
                }
            }
        }
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let min_eig = smallest_eigenvalue(&a, n);
        if min_eig < -PSD_TOL * (1.0 + trace.abs()) {
            return Err(Error::InvalidOperator(format!(
                "A not positive semi-definite at {x:?} (eigenvalue {min_eig:e})"
            )));
        }
        let v = self.v_at(x);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidOperator(format!("V must be positive, got {v} at {x:?}")));
        }
        Ok(())
    }
}

fn smallest_eigenvalue(a: &[f64], n: usize) -> f64 {
    let m = DMatrix::from_row_slice(n, n, a);
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Gallery

/// Catalogue entry describing a gallery operator.
#[derive(Debug, Clone, Serialize)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub dim: &'static str,
    pub params: &'static [&'static str],
    pub coefficients: &'static str,
    pub reference: &'static str,
}

pub const GALLERY: &[GalleryEntry] = &[
    GalleryEntry {
        name: "laplace",
        dim: "dim (default 2)",
        params: &["dim"],
        coefficients: "A = I, V = 1",
        reference: "classical Laplacian",
    },
    GalleryEntry {
        name: "grushin_fedii",
        dim: "2",
        params: &["a"],
        coefficients: "A = diag(1, a(x1)^2), V = 1, a = exp(-1/x1^2) by default",
        reference: "Fedii (1971)",
    },
    GalleryEntry {
        name: "lie2d",
        dim: "2",
        params: &[],
        coefficients: "A = diag(exp(2 x2), 1), V = exp(-x2)",
        reference: "Hormander (1967), left-invariant sub-Laplacian on (R^2, *)",
    },
    GalleryEntry {
        name: "christ3d",
        dim: "3",
        params: &[],
        coefficients: "A = diag(1, exp(-2/|x1|), exp(-2/|x1|)), V = 1",
        reference: "Christ (1991)",
    },
    GalleryEntry {
        name: "kusuoka_stroock3d",
        dim: "3",
        params: &[],
        coefficients: "A = diag(1, exp(-2/sqrt|x1|), 1), V = 1",
        reference: "Kusuoka and Stroock (1985)",
    },
    GalleryEntry {
        name: "morimoto4d",
        dim: "4",
        params: &[],
        coefficients: "A = diag(x2^2, 1, exp(-2/cbrt|x1|), 1), V = 1",
        reference: "Morimoto (1987)",
    },
];

fn diagonal_operator<F>(name: &str, dim: usize, diag: F) -> Result<OperatorSpec>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
{
    let spec = OperatorSpec::new(
        name,
        dim,
        move |x, out| {
            out.fill(0.0);
            let mut d = [0.0; 8];
            diag(x, &mut d[..dim]);
            for i in 0..dim {
                out[i * dim + i] = d[i];
            }
        },
        |_| 1.0,
    )?;
    Ok(spec.with_grad_v(|_, g| g.fill(0.0)).with_div_a(|_, g| g.fill(0.0)))
}

fn reject_params(name: &str, params: &Params, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidParameter(format!("`{key}` is not a parameter of {name}")));
        }
    }
    Ok(())
}

/// Checks that a one-variable profile is even, nonnegative and nondecreasing
/// on `[0, ∞)` by dense sampling of `[0, 4]`.
pub fn validate_profile(profile: &dyn Fn(f64) -> f64) -> Result<()> {
    const SAMPLES: usize = 801;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..SAMPLES {
        let t = 4.0 * k as f64 / (SAMPLES - 1) as f64;
        let (p, m) = (profile(t), profile(-t));
        if !p.is_finite() || !m.is_finite() {
            return Err(Error::InvalidProfile(format!("non-finite value at x = ±{t}")));
        }
        let tol = 1e-12 * (1.0 + p.abs());
        if p < 0.0 {
            return Err(Error::InvalidProfile(format!("negative value {p} at x = {t}")));
        }
        if (p - m).abs() > tol {
            return Err(Error::InvalidProfile(format!("not even: a({t}) = {p}, a(-{t}) = {m}")));
        }
        if p < prev - tol {
            return Err(Error::InvalidProfile(format!("decreasing near x = {t}")));
        }
        prev = p;
    }
    Ok(())
}

/// Returns the named gallery operator.
pub fn gallery(name: &str, params: &Params) -> Result<OperatorSpec> {
    let entry = GALLERY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownGallery(name.to_string()))?;
    reject_params(name, params, entry.params)?;
    let spec = match name {
        "laplace" => {
            let dim = match params.get("dim") {
                None => 2,
                Some(ParamValue::Num(d)) if *d >= 1.0 && d.fract() == 0.0 && *d <= 8.0 => *d as usize,
                Some(other) => {
                    return Err(Error::InvalidParameter(format!("laplace dim must be an integer in 1..=8, got {other:?}")))
                }
            };
            diagonal_operator("laplace", dim, |_, d| d.fill(1.0))?
        }
        "grushin_fedii" => {
            let profile: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match params.get("a") {
                None => Arc::new(|t: f64| (-1.0 / (t * t)).exp()),
                Some(ParamValue::Text(src)) => {
                    let e = Expr::parse(src, 1)?;
                    Arc::new(move |t: f64| e.eval(&[t]))
                }
                Some(other) => {
                    return Err(Error::InvalidParameter(format!("grushin_fedii profile must be an expression in x1, got {other:?}")))
                }
            };
            validate_profile(&*profile)?;
            diagonal_operator("grushin_fedii", 2, move |x, d| {
                let a = profile(x[0]);
                d[0] = 1.0;
                d[1] = a * a;
            })?
        }
        "lie2d" => OperatorSpec::new(
            "lie2d",
            2,
            |x, out| {
                out[0] = (2.0 * x[1]).exp();
                out[1] = 0.0;
                out[2] = 0.0;
                out[3] = 1.0;
            },
            |x| (-x[1]).exp(),
        )?
        .with_grad_v(|x, g| {
            g[0] = 0.0;
            g[1] = -(-x[1]).exp();
        })
        .with_div_a(|_, g| g.fill(0.0)),
        "christ3d" => diagonal_operator("christ3d", 3, |x, d| {
            let a2 = (-2.0 / x[0].abs()).exp();
            d[0] = 1.0;
            d[1] = a2;
            d[2] = a2;
        })?,
        "kusuoka_stroock3d" => diagonal_operator("kusuoka_stroock3d", 3, |x, d| {
            d[0] = 1.0;
            d[1] = (-2.0 / x[0].abs().sqrt()).exp();
            d[2] = 1.0;
        })?,
        "morimoto4d" => diagonal_operator("morimoto4d", 4, |x, d| {
            d[0] = x[1] * x[1];
            d[1] = 1.0;
            d[2] = (-2.0 / x[0].abs().cbrt()).exp();
            d[3] = 1.0;
        })?,
        _ => unreachable!("gallery table and match are out of sync"),
    };
    Ok(spec.certified(entry.reference))
}

// ---------------------------------------------------------------------------
// Non-total degeneracy

#[derive(Debug, Clone, Serialize)]
pub struct NtdReport {
    pub min_trace: f64,
    pub argmin: Vec<f64>,
    pub samples: usize,
    pub pass: bool,
}

/// Deterministic sample points in a box: the vertices, the center, then a
/// Halton sequence shifted by a seeded rotation.
pub fn box_samples(region: &[(f64, f64)], samples: usize, seed: u64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let dim = region.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut pts = Vec::with_capacity(samples + (1 << dim.min(10)) + 1);
    if dim <= 10 {
        for mask in 0..(1usize << dim) {
            pts.push((0..dim).map(|i| if mask >> i & 1 == 1 { region[i].1 } else { region[i].0 }).collect());
        }
    }
    pts.push(region.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
    for k in 1..=samples as u64 {
        let p = (0..dim)
            .map(|i| {
                let u = (radical_inverse(k, PRIMES[i % PRIMES.len()]) + shift[i]).fract();
                region[i].0 + u * (region[i].1 - region[i].0)
            })
            .collect();
        pts.push(p);
    }
    pts
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += f * (k % base) as f64;
        k /= base;
        f *= inv;
    }
    r
}

/// Samples `trace A` over a box and reports the minimum.
pub fn check_ntd(spec: &OperatorSpec, region: &[(f64, f64)], samples: usize, seed: u64) -> Result<NtdReport> {
    if region.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: region.len() });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    if region.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::InvalidParameter("region must be a bounded box".into()));
    }
    let pts = box_samples(region, samples, seed);
    let mut best = (f64::INFINITY, pts[0].clone());
    for p in &pts {
        let t = spec.trace_at(p);
        if t < best.0 || t.is_nan() {
            best = (t, p.clone());
        }
    }
    Ok(NtdReport { min_trace: best.0, argmin: best.1, samples: pts.len(), pass: best.0 > 0.0 })
}

// ---------------------------------------------------------------------------
// Vector fields

/// The fields `Xᵢ = Σⱼ aᵢⱼ ∂ⱼ` (rows of `A`) and the drift
/// `X₀ = Σᵢ (∂ᵢV / V) Xᵢ`, plus the first-order coefficients
/// `bⱼ = (1/V) Σᵢ ∂ᵢ(V aᵢⱼ)` of the non-divergence form.
#[derive(Debug, Clone)]
pub struct VectorFieldSet {
    spec: OperatorSpec,
}

pub fn extract_fields(spec: &OperatorSpec) -> VectorFieldSet {
    VectorFieldSet { spec: spec.clone() }
}

impl VectorFieldSet {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `Xᵢ(x)`, 1-based `i` as in the operator's notation (`i = 1..=N`).
    pub fn x_field(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert!((1..=n).contains(&i), "field index {i} out of range 1..={n}");
        let a = self.spec.a_at(x);
        a[(i - 1) * n..i * n].to_vec()
    }

    /// `∂ᵢV / V` at `x`.
    pub fn log_grad_v(&self, x: &[f64]) -> Vec<f64> {
        let v = self.spec.v_at(x);
        self.spec.grad_v_at(x).into_iter().map(|g| g / v).collect()
    }

    pub fn x0(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let a = self.spec.a_at(x);
        let lg = self.log_grad_v(x);
        (0..n).map(|j| (0..n).map(|i| lg[i] * a[i * n + j]).sum()).collect()
    }

    pub fn drift_b(&self, x: &[f64]) -> Vec<f64> {
        let div = self.spec.div_a_at(x);
        self.x0(x).iter().zip(div).map(|(a, b)| a + b).collect()
    }

    /// Evaluates `ξ₀X₀(x) + Σᵢ ξᵢXᵢ(x)` for `xi` of length `1 + N`.
    pub fn combination(&self, xi: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(xi.len(), n + 1);
        let a = self.spec.a_at(x);
        let mut out = vec![0.0; n];
        if xi[0] != 0.0 {
            for (o, v) in out.iter_mut().zip(self.x0(x)) {
                *o += xi[0] * v;
            }
        }
        for i in 0..n {
            if xi[i + 1] != 0.0 {
                for j in 0..n {
                    out[j] += xi[i + 1] * a[i * n + j];
                }
            }
        }
        out
    }

    /// Relative least-squares residual of `X₀(x)` against span of the rows of `A(x)`.
    pub fn x0_span_residual(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let a = DMatrix::from_row_slice(n, n, &self.spec.a_at(x));
        let x0 = DVector::from_vec(self.x0(x));
        let norm = x0.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let at = a.transpose();
        let svd = at.clone().svd(true, true);
        let tol = 1e-13 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        let coeffs = match svd.solve(&x0, tol) {
            Ok(c) => c,
            Err(_) => return f64::INFINITY,
        };
        (at * coeffs - &x0).norm() / (1.0 + norm)
    }
}

// ---------------------------------------------------------------------------
// Tangentiality

#[derive(Debug, Clone, Serialize)]
pub struct TangentialityCertificate {
    pub point: Vec<f64>,
    /// `λᵢ` with `⟨Xᵢ, ν⟩² ≤ λᵢ ⟨Aν, ν⟩` for every `ν`.
    pub lambdas: Vec<f64>,
    /// Largest observed `⟨Xᵢ, ν⟩² / ⟨Aν, ν⟩` over the sampled directions.
    pub max_ratio: Vec<f64>,
    pub samples: usize,
}

impl TangentialityCertificate {
    pub fn holds(&self) -> bool {
        self.max_ratio.iter().zip(&self.lambdas).all(|(r, l)| *r <= l * (1.0 + 1e-12))
    }
}

/// Constants for the tangentiality inequality at `x`, certified on `samples`
/// seeded random unit directions.
///
/// By Cauchy-Schwarz in the semi-inner product `⟨A·, ·⟩`,
/// `(Aν)ᵢ² = ⟨Aeᵢ, ν⟩² ≤ aᵢᵢ ⟨Aν, ν⟩`, so `λᵢ = aᵢᵢ` is sharp (attained at
/// `ν = eᵢ`). Zero rows get the smallest positive double.
pub fn tangentiality_bound(spec: &OperatorSpec, x: &[f64], samples: usize, seed: u64) -> Result<TangentialityCertificate> {
    let n = spec.dim();
    let a = spec.a_at(x);
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::TotallyDegeneratePoint { point: x.to_vec() });
    }
    let lambdas: Vec<f64> = (0..n).map(|i| a[i * n + i].max(f64::MIN_POSITIVE)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = vec![0.0f64; n];
    let mut nu = vec![0.0; n];
    let mut anu = vec![0.0; n];
    for _ in 0..samples {
        for v in nu.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        nu.iter_mut().for_each(|v| *v /= norm);
        for i in 0..n {
            anu[i] = (0..n).map(|j| a[i * n + j] * nu[j]).sum();
        }
        let q: f64 = anu.iter().zip(&nu).map(|(p, q)| p * q).sum();
        for i in 0..n {
            let num = anu[i] * anu[i];
            let ratio = if num == 0.0 { 0.0 } else { num / q };
            if ratio > max_ratio[i] {
                max_ratio[i] = ratio;
            }
        }
    }
    Ok(TangentialityCertificate { point: x.to_vec(), lambdas, max_ratio, samples })
}
