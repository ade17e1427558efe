//! Direction-dependent covariance fields and the walk models built on them.
//!
//! A field assigns to each unit direction `u` a symmetric positive-definite
//! matrix `Σ(u)` whose radial variance `uᵀΣ(u)u` is a constant `U` and whose
//! trace is a constant `V`. The canonical field
//!
//! ```text
//! Σ(u) = U·uuᵀ + ((V − U)/(d − 1))·(I − uuᵀ)
//! ```
//!
//! is the rotationally covariant member of that class. A [`WalkModel`] turns
//! a field into a Markov chain on `R^d`: at position `x` the increment has
//! mean zero and covariance `s(x)²·Σ(x̂)`, where `s(x)² = 1 + c(1 + ‖x‖)^{-δ}`
//! is an optional perturbation decaying away from the origin.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-12;

/// Dimension `d`, radial variance `U` and total variance `V` of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    dim: usize,
    radial: f64,
    total: f64,
}

impl FieldParams {
    /// Requires `d ≥ 2` and `0 < U ≤ V`. `U = V` is accepted so that the
    /// degenerate case can be fed to [`validate_field`]; see
    /// [`FieldParams::is_degenerate`].
    pub fn new(dim: usize, radial: f64, total: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param("d", format!("dimension must be at least 2, got {dim}")));
        }
        if !(radial.is_finite() && radial > 0.0) {
            return Err(Error::param("U", format!("radial variance must be positive, got {radial}")));
        }
        if !total.is_finite() {
            return Err(Error::param("V", "total variance must be finite"));
        }
        if radial > total {
            return Err(Error::param("V", format!("need U <= V, got U = {radial}, V = {total}")));
        }
        Ok(Self { dim, radial, total })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `U`
    pub fn radial(&self) -> f64 {
        self.radial
    }

    /// `V`
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Eigenvalue of the canonical field on the orthogonal complement of `u`.
    pub fn transverse(&self) -> f64 {
        (self.total - self.radial) / (self.dim - 1) as f64
    }

    /// `U = V`: the transverse eigenvalue vanishes and the field is singular.
    pub fn is_degenerate(&self) -> bool {
        self.radial == self.total
    }

    /// Largest eigenvalue of the canonical field.
    pub fn op_norm(&self) -> f64 {
        self.radial.max(self.transverse())
    }
}

/// A map from unit directions to covariance matrices.
pub trait CovarianceField {
    fn params(&self) -> FieldParams;

    /// `u` is assumed to be a unit vector of length `params().dim()`.
    fn evaluate(&self, u: &[f64]) -> DMatrix<f64>;
}

/// The field `U·uuᵀ + ((V − U)/(d − 1))·(I − uuᵀ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalField {
    params: FieldParams,
}

impl CanonicalField {
    pub fn new(params: FieldParams) -> Self {
        Self { params }
    }
}

impl CovarianceField for CanonicalField {
    fn params(&self) -> FieldParams {
        self.params
    }

    fn evaluate(&self, u: &[f64]) -> DMatrix<f64> {
        let d = self.params.dim;
        let radial = self.params.radial;
        let transverse = self.params.transverse();
        DMatrix::from_fn(d, d, |i, j| {
            let outer = u[i] * u[j];
            let identity = if i == j { 1.0 } else { 0.0 };
            radial * outer + transverse * (identity - outer)
        })
    }
}

/// Evaluates the canonical field at `u`, checking that `u` is a unit vector
/// of the right dimension.
pub fn canonical_sigma(u: &[f64], params: &FieldParams) -> Result<DMatrix<f64>> {
    if u.len() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            got: u.len(),
        });
    }
    let norm = norm(u);
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnitVector { norm });
    }
    Ok(CanonicalField::new(*params).evaluate(u))
}

/// Outcome of [`validate_field`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_radial_dev: f64,
    pub max_trace_dev: f64,
    pub min_eig: f64,
    pub pass: bool,
}

/// Checks radial variance, trace and positive definiteness of `field` over
/// `n_dirs` quasi-uniform directions.
pub fn validate_field(field: &dyn CovarianceField, n_dirs: usize, tol: f64) -> ValidationReport {
    let params = field.params();
    let mut max_radial_dev = 0.0f64;
    let mut max_trace_dev = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for u in quasi_uniform_directions(params.dim, n_dirs.max(1)) {
        let sigma = field.evaluate(&u);
        let radial = quadratic_form(&sigma, &u);
        max_radial_dev = max_radial_dev.max((radial - params.radial).abs());
        max_trace_dev = max_trace_dev.max((sigma.trace() - params.total).abs());
        let sym = (&sigma + sigma.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues().min();
        min_eig = min_eig.min(eig);
    }
    ValidationReport {
        max_radial_dev,
        max_trace_dev,
        min_eig,
        pass: max_radial_dev <= tol && max_trace_dev <= tol && min_eig > 0.0,
    }
}

/// Deterministic, well-spread unit vectors in `R^dim`: Halton points mapped
/// to Gaussian vectors by Box–Muller, then normalised.
pub fn quasi_uniform_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    let pairs = dim.div_ceil(2);
    assert!(2 * pairs <= PRIMES.len(), "dimension {dim} too large for Halton bases");
    let mut out = Vec::with_capacity(count);
    let mut index = 1u64;
    while out.len() < count {
        let mut v = Vec::with_capacity(2 * pairs);
        for p in 0..pairs {
            let u1 = radical_inverse(index, PRIMES[2 * p]);
            let u2 = radical_inverse(index, PRIMES[2 * p + 1]);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            v.push(r * theta.cos());
            v.push(r * theta.sin());
        }
        v.truncate(dim);
        index += 1;
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|c| *c /= n);
            out.push(v);
        }
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Orthonormal frame `{w_1, …, w_d}` with `w_1 = u`, completed by a
/// Householder reflection.
///
/// The reflection is taken about `e₁ − u` when `u₁ ≤ 0` and about `e₁ + u`
/// (with the first column negated) otherwise, so the reflector never
/// degenerates.
#[derive(Debug, Clone)]
pub struct Frame {
    u: Vec<f64>,
}

impl Frame {
    pub fn new(u: &[f64]) -> Self {
        Self { u: u.to_vec() }
    }

    /// Overwrites `z` with `Σ_j z_j w_j`.
    pub fn apply(&self, z: &mut [f64]) {
        reflect(&self.u, 1.0, z);
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        let d = self.u.len();
        (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                self.apply(&mut e);
                e
            })
            .collect()
    }
}

/// [`Frame::apply`] for the direction `u = x·scale`, without allocating.
fn reflect(x: &[f64], scale: f64, z: &mut [f64]) {
    let flip = x[0] > 0.0;
    let sign = if flip { scale } else { -scale };
    if flip {
        z[0] = -z[0];
    }
    // v = e₁ + sign·x, v·v = 2(1 + |u₁|)
    let vz = z[0] + sign * dot(x, z);
    let vv = 2.0 * (1.0 + (x[0] * scale).abs());
    let k = 2.0 * vz / vv;
    for (zi, xi) in z.iter_mut().zip(x) {
        *zi -= k * sign * xi;
    }
    z[0] -= k;
}

/// Distribution of the i.i.d. zero-mean, unit-variance coordinates driving
/// each increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    /// `±1` with equal probability; `‖Δ‖²` is then deterministic.
    Rademacher,
    Gaussian,
}

impl fmt::Display for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Noise::Rademacher => "rademacher",
            Noise::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Noise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rademacher" => Ok(Noise::Rademacher),
            "gaussian" | "normal" => Ok(Noise::Gaussian),
            other => Err(Error::param("noise", format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Multiplicative covariance factor `1 + c(1 + ‖x‖)^{-δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    c: f64,
    delta: f64,
}

impl Perturbation {
    pub const DEFAULT_DELTA: f64 = 1.0;

    pub fn new(c: f64, delta: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::param("perturb_c", format!("must be >= 0, got {c}")));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("perturb_delta", format!("must be > 0, got {delta}")));
        }
        Ok(Self { c, delta })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn factor(&self, radius: f64) -> f64 {
        1.0 + self.c * (1.0 + radius).powf(-self.delta)
    }
}

/// Closed-form conditional moments of one increment at position `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoments {
    /// `E[Δ | x]`
    pub mean: Vec<f64>,
    /// `M(x) = E[ΔΔᵀ | x]`
    pub cov: DMatrix<f64>,
    /// `E[⟨x, Δ⟩² | x] = xᵀM(x)x`
    pub radial_second: f64,
    /// `E[⟨x, Δ⟩‖Δ‖² | x]`
    pub m3: f64,
    /// `E[‖Δ‖⁴ | x]`
    pub m4: f64,
}

/// Scalar moments needed to build the compensators of `‖X‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementMoments {
    /// `trace M(x) = E[‖Δ‖² | x]`
    pub trace: f64,
    /// `xᵀM(x)x`
    pub radial_second: f64,
    pub m3: f64,
    pub m4: f64,
}

/// A chain whose one-step conditional moments are known in closed form.
pub trait ConditionalMoments {
    fn dim(&self) -> usize;

    /// `V`, the trace of the limiting covariance field.
    fn limit_trace(&self) -> f64;

    /// `None` when the model has no closed form at `x`.
    fn increment_moments(&self, x: &[f64]) -> Option<IncrementMoments>;
}

/// Zero-drift walk on `R^d` with covariance `s(x)²·Σ(x̂)` for the canonical
/// field `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkModel {
    field: CanonicalField,
    noise: Noise,
    perturbation: Option<Perturbation>,
    origin_direction: Vec<f64>,
}

impl WalkModel {
    pub fn new(params: FieldParams, noise: Noise) -> Self {
        let mut e1 = vec![0.0; params.dim];
        e1[0] = 1.0;
        Self {
            field: CanonicalField::new(params),
            noise,
            perturbation: None,
            origin_direction: e1,
        }
    }

    /// Shorthand for `WalkModel::new(FieldParams::new(d, U, V)?, noise)`.
    pub fn canonical(dim: usize, radial: f64, total: f64, noise: Noise) -> Result<Self> {
        Ok(Self::new(FieldParams::new(dim, radial, total)?, noise))
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Self {
        self.perturbation = (perturbation.c > 0.0).then_some(perturbation);
        self
    }

    /// Direction used as `x̂` at `x = 0`.
    pub fn with_origin_direction(mut self, u: &[f64]) -> Result<Self> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        let n = norm(u);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnitVector { norm: n });
        }
        self.origin_direction = u.to_vec();
        Ok(self)
    }

    pub fn params(&self) -> FieldParams {
        self.field.params
    }

    pub fn field(&self) -> &CanonicalField {
        &self.field
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn perturbation(&self) -> Option<Perturbation> {
        self.perturbation
    }

    pub fn dim(&self) -> usize {
        self.field.params.dim
    }

    /// `s(x)²`
    pub fn scale_factor(&self, x: &[f64]) -> f64 {
        match self.perturbation {
            Some(p) => p.factor(norm(x)),
            None => 1.0,
        }
    }

    /// `x̂`, or the origin direction when `x = 0`.
    pub fn direction(&self, x: &[f64]) -> Vec<f64> {
        let n = norm(x);
        if n == 0.0 {
            self.origin_direction.clone()
        } else {
            x.iter().map(|&c| c / n).collect()
        }
    }

    /// `M(x)`
    pub fn covariance(&self, x: &[f64]) -> DMatrix<f64> {
        self.field.evaluate(&self.direction(x)) * self.scale_factor(x)
    }

    /// Draws one increment at `x` into `out`.
    pub fn sample_increment_into<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        let params = self.field.params;
        let s = self.scale_factor(x).sqrt();
        let radial_sd = s * params.radial.sqrt();
        let transverse_sd = s * params.transverse().sqrt();
        for (j, z) in out.iter_mut().enumerate() {
            let eta = match self.noise {
                Noise::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Noise::Gaussian => rng.sample::<f64, _>(StandardNormal),
            };
            *z = eta * if j == 0 { radial_sd } else { transverse_sd };
        }
        let r = norm(x);
        if r == 0.0 {
            reflect(&self.origin_direction, 1.0, out);
        } else {
            reflect(x, 1.0 / r, out);
        }
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_increment_into(x, rng, &mut out);
        out
    }

    /// Trace of `M(x)²`.
    fn trace_of_square(&self, x: &[f64]) -> f64 {
        let p = self.field.params;
        let s2 = self.scale_factor(x);
        let t = p.transverse();
        s2 * s2 * (p.radial * p.radial + (p.dim - 1) as f64 * t * t)
    }

    pub fn exact_moments(&self, x: &[f64]) -> ExactMoments {
        let m = self.increment_moments_closed(x);
        ExactMoments {
            mean: vec![0.0; self.dim()],
            cov: self.covariance(x),
            radial_second: m.radial_second,
            m3: m.m3,
            m4: m.m4,
        }
    }

    fn increment_moments_closed(&self, x: &[f64]) -> IncrementMoments {
        let p = self.field.params;
        let s2 = self.scale_factor(x);
        let trace = s2 * p.total;
        // M(x)x = s²·U·x because x is an eigenvector of Σ(x̂).
        let radial_second = s2 * p.radial * dot(x, x);
        let m4 = match self.noise {
            Noise::Rademacher => trace * trace,
            Noise::Gaussian => trace * trace + 2.0 * self.trace_of_square(x),
        };
        IncrementMoments {
            trace,
            radial_second,
            // Odd in the symmetric noise for both kinds.
            m3: 0.0,
            m4,
        }
    }

    /// Estimate of `ε(r) = sup_{‖x‖ ≥ r} ‖M(x) − Σ(x̂)‖_op` over `n_dirs`
    /// directions and radii `r·2^j`, `j = 0..=20`.
    pub fn epsilon(&self, r: f64, n_dirs: usize) -> f64 {
        let dirs = quasi_uniform_directions(self.dim(), n_dirs.max(1));
        let mut sup = 0.0f64;
        for j in 0..=20 {
            let radius = r * f64::powi(2.0, j);
            for u in &dirs {
                let x: Vec<f64> = u.iter().map(|&c| c * radius).collect();
                let diff = self.covariance(&x) - self.field.evaluate(&self.direction(&x));
                sup = sup.max(op_norm_symmetric(&diff));
            }
        }
        sup
    }

    /// Parses a `key = value` model block with keys `d`, `U`, `V`, `noise`,
    /// `perturb_c` and `perturb_delta`. Blank lines and `#` comments are
    /// ignored.
    pub fn from_spec(text: &str) -> Result<Self> {
        let mut spec = ModelSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Spec {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            spec.set(key.trim(), value.trim())
                .map_err(|reason| Error::Spec { line: i + 1, reason })?;
        }
        spec.build()
    }

    /// Inverse of [`WalkModel::from_spec`].
    pub fn to_spec(&self) -> String {
        let p = self.params();
        let (c, delta) = self
            .perturbation
            .map_or((0.0, Perturbation::DEFAULT_DELTA), |q| (q.c, q.delta));
        format!(
            "d = {}\nU = {}\nV = {}\nnoise = {}\nperturb_c = {}\nperturb_delta = {}\n",
            p.dim, p.radial, p.total, self.noise, c, delta
        )
    }
}

impl ConditionalMoments for WalkModel {
    fn dim(&self) -> usize {
        self.field.params.dim
    }

    fn limit_trace(&self) -> f64 {
        self.field.params.total
    }

    fn increment_moments(&self, x: &[f64]) -> Option<IncrementMoments> {
        Some(self.increment_moments_closed(x))
    }
}

/// Model block fields before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    #[serde(rename = "U")]
    pub radial: f64,
    #[serde(rename = "V")]
    pub total: f64,
    pub noise: Noise,
    pub perturb_c: f64,
    pub perturb_delta: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            d: 2,
            radial: 1.0,
            total: 3.0,
            noise: Noise::Rademacher,
            perturb_c: 0.0,
            perturb_delta: Perturbation::DEFAULT_DELTA,
        }
    }
}

impl ModelSpec {
    pub const KEYS: [&'static str; 6] = ["d", "U", "V", "noise", "perturb_c", "perturb_delta"];

    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn real(key: &str, value: &str) -> std::result::Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("`{key}` expects a real number, got `{value}`"))
        }
        match key {
            "d" => {
                self.d = value
                    .parse()
                    .map_err(|_| format!("`d` expects a positive integer, got `{value}`"))?
            }
            "U" => self.radial = real(key, value)?,
            "V" => self.total = real(key, value)?,
            "noise" => self.noise = value.parse().map_err(|e: Error| e.to_string())?,
            "perturb_c" => self.perturb_c = real(key, value)?,
            "perturb_delta" => self.perturb_delta = real(key, value)?,
            other => return Err(format!("unknown model key `{other}`")),
        }
        Ok(())
    }

    pub fn build(&self) -> Result<WalkModel> {
        let params = FieldParams::new(self.d, self.radial, self.total)?;
        let perturbation = Perturbation::new(self.perturb_c, self.perturb_delta)?;
        Ok(WalkModel::new(params, self.noise).with_perturbation(perturbation))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn quadratic_form(m: &DMatrix<f64>, u: &[f64]) -> f64 {
    let d = u.len();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += u[i] * m[(i, j)] * u[j];
        }
    }
    acc
}

fn op_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().fold(0.0f64, |acc, e| acc.max(e.abs()))
}
