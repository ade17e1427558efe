//! Goodness of fit and ensemble diagnostics.
//!
//! The headline check compares the empirical law of `Y_n(t) = ‖X_{⌊nt⌋}‖²/n`
//! with the `BESQ^V(0)` marginal by a one-sample Kolmogorov–Smirnov test.
//! The remaining diagnostics look at moment growth, the fraction of time
//! spent in a ball, and escape versus return behaviour on either side of
//! `2U = V`.

use serde::{Deserialize, Serialize};

use crate::bessel::BesqLaw;
use crate::covariance::{FieldParams, Noise, WalkModel};
use crate::ensemble::{run_indexed, sub_seed, EnsembleConfig};
use crate::walk::{floor_steps, Walker};
use crate::{Error, Result};

/// Significance level of the marginal fit.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Added to the asymptotic critical value to absorb the finite-`n` bias of
/// the walk itself.
pub const KS_SLACK: f64 = 0.01;

/// Largest allowed increase of `D` between consecutive `n` in a trend.
pub const TREND_INVERSION_TOL: f64 = 0.01;

/// Default ball radius for the phase classifier.
pub const DEFAULT_PHASE_RADIUS: f64 = 20.0;

/// Fraction of trajectories needed for a "-consistent" verdict.
pub const PHASE_CUTOFF: f64 = 0.95;

fn sorted_checked(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(index) = sample.iter().position(|x| x.is_nan()) {
        return Err(Error::NanInSample { index });
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// One-sample KS distance `sup_x |F_N(x) − F(x)|`.
///
/// The sample is sorted internally; NaNs are rejected.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    let sorted = sorted_checked(sample)?;
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d = d.max(above.abs()).max(below.abs());
    }
    Ok(d)
}

/// Two-sample KS distance `sup_x |F_N(x) − G_M(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_checked(a)?;
    let b = sorted_checked(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `P(K > c)` for the Kolmogorov distribution.
pub fn kolmogorov_tail(c: f64) -> f64 {
    if c <= 0.0 {
        return 1.0;
    }
    if c < 1.0 {
        // 1 − (√(2π)/c) Σ exp(−(2k−1)²π²/(8c²)), fast for small c.
        let pi2 = std::f64::consts::PI.powi(2);
        let mut sum = 0.0;
        for k in 1..=50 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi2 / (8.0 * c * c)).exp();
            sum += term;
            if term < 1e-300 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / c * sum
    } else {
        // 2 Σ (−1)^{k−1} exp(−2k²c²)
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * c * c).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        2.0 * sum
    }
}

/// `c(α)` solving `P(K > c) = α`, by bisection.
pub fn kolmogorov_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let (mut lo, mut hi) = (0.05, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Asymptotic one-sample critical value `c(α)/√N`; needs `N ≥ 20`.
pub fn ks_threshold(n: usize, alpha: f64) -> Result<f64> {
    if n < 20 {
        return Err(Error::param("N", format!("asymptotic threshold needs N >= 20, got {n}")));
    }
    Ok(kolmogorov_critical(alpha)? / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub sample_size: usize,
    pub alpha: f64,
    pub slack: f64,
    /// `c(α)/√N + slack`
    pub threshold: f64,
    pub pass: bool,
}

impl KsReport {
    pub fn new(statistic: f64, sample_size: usize, alpha: f64, slack: f64) -> Result<Self> {
        let threshold = ks_threshold(sample_size, alpha)? + slack;
        Ok(Self {
            statistic,
            sample_size,
            alpha,
            slack,
            threshold,
            pass: statistic <= threshold,
        })
    }
}

/// Start used by all ensemble diagnostics: `e₁`, so that `x̂` is defined on
/// the first step while `n^{-1/2} e₁ → 0`.
pub fn lattice_start(dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    x[0] = 1.0;
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalFitConfig {
    pub n: usize,
    pub horizon: f64,
    pub t_eval: f64,
    pub ensemble: EnsembleConfig,
    pub alpha: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub n: usize,
    pub t_eval: f64,
    pub report: KsReport,
    /// `Y_n(t_eval)` of each trajectory, in index order.
    pub samples: Vec<f64>,
}

/// `Y_n(t)` for trajectory seed `seed` started at `e₁`.
pub fn scaled_radial_sample(model: &WalkModel, n: usize, t: f64, seed: u64) -> Result<f64> {
    let start = lattice_start(model.dim());
    let mut walker = Walker::new(model, &start, seed)?;
    for _ in 0..floor_steps(n, t) {
        walker.step()?;
    }
    Ok(walker.squared_norm() / n as f64)
}

/// Compares the law of `Y_n(t_eval)` over an ensemble of walks from `e₁`
/// with the `BESQ^V(0)` marginal at `t_eval`.
pub fn marginal_fit(model: &WalkModel, cfg: &MarginalFitConfig) -> Result<MarginalFit> {
    let params = model.params();
    if params.radial() != 1.0 {
        return Err(Error::param(
            "U",
            format!(
                "marginal fit assumes U = 1 (got {}); rescale increments by 1/sqrt(U), \
                 equivalently compare at time U*t with V/U in place of V",
                params.radial()
            ),
        ));
    }
    if cfg.n == 0 {
        return Err(Error::param("n", "scaling index must be positive"));
    }
    if !(cfg.t_eval > 0.0 && cfg.t_eval <= cfg.horizon) {
        return Err(Error::param(
            "t_eval",
            format!("must lie in (0, T] = (0, {}], got {}", cfg.horizon, cfg.t_eval),
        ));
    }
    let law = BesqLaw::from_zero(params.total())?;
    let e = cfg.ensemble;
    let samples = run_indexed(e.n_traj, e.seed, e.workers, |_, seed| {
        scaled_radial_sample(model, cfg.n, cfg.t_eval, seed)
    })?;
    let statistic = ks_statistic(&samples, |y| law.marginal_cdf(cfg.t_eval, y).unwrap_or(f64::NAN))?;
    Ok(MarginalFit {
        n: cfg.n,
        t_eval: cfg.t_eval,
        report: KsReport::new(statistic, samples.len(), cfg.alpha, cfg.slack)?,
        samples,
    })
}

/// Master seed of the `n`-th member of a multi-`n` study; each `n` gets an
/// independent ensemble.
pub fn trend_seed(master: u64, n: usize) -> u64 {
    sub_seed(master, n as u64)
}

/// Marginal fit for each `n` in `ns`, re-simulated with independent seeds.
pub fn marginal_trend(model: &WalkModel, ns: &[usize], cfg: &MarginalFitConfig) -> Result<Vec<MarginalFit>> {
    ns.iter()
        .map(|&n| {
            let mut c = *cfg;
            c.n = n;
            c.ensemble.seed = trend_seed(cfg.ensemble.seed, n);
            marginal_fit(model, &c)
        })
        .collect()
}

/// `true` if `values` is non-increasing except for at most one step up, of at
/// most `tol`.
pub fn non_increasing_with_one_inversion(values: &[f64], tol: f64) -> bool {
    let ups: Vec<f64> = values
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| w[1] - w[0])
        .collect();
    ups.len() <= 1 && ups.iter().all(|&u| u <= tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub m: usize,
    /// Monte Carlo mean of `‖X_m‖^ℓ`.
    pub mean_norm_pow: f64,
    /// `mean_norm_pow / (m^{ℓ/2} + ‖x‖^ℓ)`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub ell: u32,
    pub rows: Vec<MomentRow>,
    /// Largest ratio over `m ∈ (m_max/10, m_max]`.
    pub top_decade_max: f64,
    /// Largest ratio over `m ∈ (m_max/100, m_max/10]`.
    pub middle_decade_max: f64,
    pub pass: bool,
}

/// Ratio allowed between the top and middle decades of a moment table.
pub const MOMENT_STABILITY: f64 = 1.2;

/// Tabulates `E‖X_m‖^ℓ / (m^{ℓ/2} + ‖x‖^ℓ)` over `m_grid`.
///
/// Passes when the running maximum has stabilised: the top decade's maximum
/// is at most 1.2 times the middle decade's.
pub fn moment_bound_check(
    model: &WalkModel,
    start: &[f64],
    ell: u32,
    m_grid: &[usize],
    ens: &EnsembleConfig,
) -> Result<MomentTable> {
    if !(1..=4).contains(&ell) {
        return Err(Error::param("ell", format!("must be in 1..=4, got {ell}")));
    }
    if m_grid.is_empty() {
        return Err(Error::param("m_grid", "empty grid"));
    }
    let mut grid = m_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let max_m = *grid.last().expect("non-empty");
    let per_traj = run_indexed(ens.n_traj, ens.seed, ens.workers, |_, seed| {
        let mut walker = Walker::new(model, start, seed)?;
        let mut out = Vec::with_capacity(grid.len());
        let mut next = grid.iter().peekable();
        for m in 0..=max_m {
            if m > 0 {
                walker.step()?;
            }
            if next.peek() == Some(&&m) {
                out.push(walker.squared_norm().sqrt().powi(ell as i32));
                next.next();
            }
        }
        Ok(out)
    })?;
    let count = per_traj.len() as f64;
    let start_pow = crate::covariance::norm(start).powi(ell as i32);
    let rows: Vec<MomentRow> = grid
        .iter()
        .enumerate()
        .map(|(g, &m)| {
            let mean = per_traj.iter().map(|r| r[g]).sum::<f64>() / count;
            let denom = (m as f64).powf(ell as f64 / 2.0) + start_pow;
            MomentRow {
                m,
                mean_norm_pow: mean,
                ratio: mean / denom,
            }
        })
        .collect();
    let decade_max = |lo: f64, hi: f64| {
        rows.iter()
            .filter(|r| (r.m as f64) > lo && (r.m as f64) <= hi)
            .map(|r| r.ratio)
            .fold(f64::NAN, f64::max)
    };
    let top = max_m as f64;
    let top_decade_max = decade_max(top / 10.0, top);
    let middle_decade_max = decade_max(top / 100.0, top / 10.0);
    Ok(MomentTable {
        ell,
        pass: top_decade_max.is_finite()
            && middle_decade_max.is_finite()
            && top_decade_max <= MOMENT_STABILITY * middle_decade_max,
        rows,
        top_decade_max,
        middle_decade_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationTable {
    pub radius: f64,
    /// `(n, f_n)` with `f_n` the mean fraction of `k < n` with `‖X_k‖ ≤ C`.
    pub rows: Vec<(usize, f64)>,
    pub pass: bool,
}

/// Required decrease of the occupation fraction across the grid.
pub const OCCUPATION_DECAY: f64 = 1.5;

/// Mean fraction of the first `n` steps spent in the ball of radius `C`, for
/// each `n` in `n_grid`. Passes if the fraction at the smallest `n` is at
/// least 1.5 times the fraction at the largest.
pub fn occupation_fraction(
    model: &WalkModel,
    start: &[f64],
    radius: f64,
    n_grid: &[usize],
    ens: &EnsembleConfig,
) -> Result<OccupationTable> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::param("C", format!("radius must be positive, got {radius}")));
    }
    let mut grid: Vec<usize> = n_grid.iter().copied().filter(|&n| n > 0).collect();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::param("n_grid", "needs at least one positive n"));
    }
    let max_n = *grid.last().expect("non-empty");
    let r2 = radius * radius;
    let per_traj = run_indexed(ens.n_traj, ens.seed, ens.workers, |_, seed| {
        let mut walker = Walker::new(model, start, seed)?;
        let mut inside = 0usize;
        let mut out = Vec::with_capacity(grid.len());
        let mut next = grid.iter().peekable();
        for k in 0..max_n {
            if k > 0 {
                walker.step()?;
            }
            if walker.squared_norm() <= r2 {
                inside += 1;
            }
            if let Some(&&n) = next.peek() {
                if k + 1 == n {
                    out.push(inside as f64 / n as f64);
                    next.next();
                }
            }
        }
        Ok(out)
    })?;
    let count = per_traj.len() as f64;
    let rows: Vec<(usize, f64)> = grid
        .iter()
        .enumerate()
        .map(|(g, &n)| (n, per_traj.iter().map(|r| r[g]).sum::<f64>() / count))
        .collect();
    let first = rows.first().expect("non-empty").1;
    let last = rows.last().expect("non-empty").1;
    Ok(OccupationTable {
        radius,
        pass: rows.len() > 1 && first >= OCCUPATION_DECAY * last,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    TransientConsistent,
    RecurrentConsistent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub radial: f64,
    pub total: f64,
    pub dim: usize,
    pub noise: Noise,
    pub n_steps: usize,
    pub radius: f64,
    pub ensemble: EnsembleConfig,
}

/// Escape/return behaviour of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    /// `min_{k ≥ N/2} ‖X_k‖`
    pub late_min_radius: f64,
    /// Late minimum stays above the radius.
    pub escaped: bool,
    /// Re-entered the ball after first leaving twice its radius.
    pub returned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseVerdict {
    pub radial: f64,
    pub total: f64,
    pub dim: usize,
    pub escape_fraction: f64,
    pub return_fraction: f64,
    pub verdict: Phase,
}

impl PhaseVerdict {
    pub fn from_outcomes(cfg: &PhaseConfig, outcomes: &[PhaseOutcome]) -> Self {
        let count = outcomes.len().max(1) as f64;
        let escape_fraction = outcomes.iter().filter(|o| o.escaped).count() as f64 / count;
        let return_fraction = outcomes.iter().filter(|o| o.returned).count() as f64 / count;
        Self {
            radial: cfg.radial,
            total: cfg.total,
            dim: cfg.dim,
            escape_fraction,
            return_fraction,
            verdict: classify_fractions(escape_fraction, return_fraction),
        }
    }
}

/// Verdict rule: transient-consistent if at least 95% escape, otherwise
/// recurrent-consistent if at least 95% return, otherwise inconclusive.
pub fn classify_fractions(escape_fraction: f64, return_fraction: f64) -> Phase {
    if escape_fraction >= PHASE_CUTOFF {
        Phase::TransientConsistent
    } else if return_fraction >= PHASE_CUTOFF {
        Phase::RecurrentConsistent
    } else {
        Phase::Inconclusive
    }
}

fn phase_model(cfg: &PhaseConfig) -> Result<WalkModel> {
    let params = FieldParams::new(cfg.dim, cfg.radial, cfg.total)?;
    if params.is_degenerate() {
        return Err(Error::param("V", "phase classification needs U < V"));
    }
    if !(cfg.radius.is_finite() && cfg.radius > 0.0) {
        return Err(Error::param("radius", format!("must be positive, got {}", cfg.radius)));
    }
    Ok(WalkModel::new(params, cfg.noise))
}

/// Follows one trajectory from `e₁` for `n_steps` steps.
pub fn phase_trajectory(model: &WalkModel, n_steps: usize, radius: f64, seed: u64) -> Result<PhaseOutcome> {
    let start = lattice_start(model.dim());
    let mut walker = Walker::new(model, &start, seed)?;
    let r2 = radius * radius;
    let exit2 = 4.0 * r2;
    let late_from = n_steps / 2;
    let mut late_min = f64::INFINITY;
    let mut exited = false;
    let mut returned = false;
    for k in 0..=n_steps {
        if k > 0 {
            walker.step()?;
        }
        let sq = walker.squared_norm();
        if !exited {
            exited = sq > exit2;
        } else if !returned && sq <= r2 {
            returned = true;
        }
        if k >= late_from {
            late_min = late_min.min(sq);
        }
    }
    let late_min_radius = late_min.sqrt();
    Ok(PhaseOutcome {
        late_min_radius,
        escaped: late_min_radius > radius,
        returned,
    })
}

pub fn phase_outcomes(cfg: &PhaseConfig) -> Result<Vec<PhaseOutcome>> {
    let model = phase_model(cfg)?;
    let e = cfg.ensemble;
    run_indexed(e.n_traj, e.seed, e.workers, |_, seed| {
        phase_trajectory(&model, cfg.n_steps, cfg.radius, seed)
    })
}

pub fn classify_phase(cfg: &PhaseConfig) -> Result<PhaseVerdict> {
    Ok(PhaseVerdict::from_outcomes(cfg, &phase_outcomes(cfg)?))
}
