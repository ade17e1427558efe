//! Trajectories, diffusive rescaling and the exact compensators of the
//! squared radial process.
//!
//! For a trajectory `X_0, X_1, …` and scaling index `n` the squared radial
//! process is `Y_n(t) = ‖X_{⌊nt⌋}‖² / n`. Its predictable compensator `B_n`
//! and the compensator `A_n` of `(Y_n − B_n)²` jump only at times `k/n`:
//!
//! ```text
//! B_n jump = trace M(X_{k−1}) / n
//! A_n jump = (4 xᵀM(x)x + 4 E[⟨x,Δ⟩‖Δ‖²] + E‖Δ‖⁴ − (trace M(x))²) / n²,  x = X_{k−1}
//! ```
//!
//! Both are computed from the model's closed-form conditional moments, so the
//! identities they satisfy can be checked to rounding error.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::covariance::{dot, norm, ConditionalMoments, WalkModel};
use crate::ensemble::{run_indexed, stream, EnsembleConfig, StreamRng};
use crate::format::{real, write_csv};
use crate::{Error, Result};

/// Walks whose norm exceeds this are aborted.
pub const DIVERGENCE_RADIUS: f64 = 1e150;

/// Default horizon `T`.
pub const DEFAULT_HORIZON: f64 = 1.0;

/// `⌊n·t⌋`, snapping products that are integers up to rounding.
pub fn floor_steps(n: usize, t: f64) -> usize {
    let x = n as f64 * t;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// `⌈n·t⌉`, with the same snapping as [`floor_steps`].
pub fn ceil_steps(n: usize, t: f64) -> usize {
    let x = n as f64 * t;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Streaming simulator: holds the current position and the random stream.
pub struct Walker<'a> {
    model: &'a WalkModel,
    position: Vec<f64>,
    increment: Vec<f64>,
    rng: StreamRng,
    steps: usize,
}

impl<'a> Walker<'a> {
    pub fn new(model: &'a WalkModel, start: &[f64], seed: u64) -> Result<Self> {
        if start.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: start.len(),
            });
        }
        if start.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinitePosition {
                step: 0,
                norm: norm(start),
            });
        }
        Ok(Self {
            model,
            position: start.to_vec(),
            increment: vec![0.0; start.len()],
            rng: stream(seed),
            steps: 0,
        })
    }

    pub fn position(&self) -> &[f64] {
        &self.position
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn squared_norm(&self) -> f64 {
        dot(&self.position, &self.position)
    }

    /// Advances by one increment; fails if the walk leaves the finite range.
    pub fn step(&mut self) -> Result<&[f64]> {
        self.model
            .sample_increment_into(&self.position, &mut self.rng, &mut self.increment);
        for (x, d) in self.position.iter_mut().zip(&self.increment) {
            *x += d;
        }
        self.steps += 1;
        let r = norm(&self.position);
        if !(r <= DIVERGENCE_RADIUS) {
            return Err(Error::NonFinitePosition {
                step: self.steps,
                norm: r,
            });
        }
        Ok(&self.position)
    }
}

/// A stored walk `X_0, …, X_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    seed: u64,
    positions: Vec<f64>,
}

impl Trajectory {
    pub fn from_positions(dim: usize, seed: u64, positions: Vec<Vec<f64>>) -> Result<Self> {
        let mut flat = Vec::with_capacity(dim * positions.len());
        for p in &positions {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            flat.extend_from_slice(p);
        }
        if flat.is_empty() {
            return Err(Error::param("positions", "a trajectory needs at least X_0"));
        }
        Ok(Self {
            dim,
            seed,
            positions: flat,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `N`
    pub fn steps(&self) -> usize {
        self.positions.len() / self.dim - 1
    }

    pub fn start(&self) -> &[f64] {
        self.position(0)
    }

    /// `X_k`
    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// CSV with columns `k, t, X_1 … X_d`, where `t = k/n`.
    pub fn write_csv<W: Write>(&self, n: usize, out: W) -> io::Result<()> {
        let mut header = vec!["k".to_string(), "t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("X_{i}")));
        let mut out = out;
        writeln!(out, "{}", header.join(","))?;
        for (k, x) in self.positions().enumerate() {
            let mut cells = vec![k.to_string(), real(k as f64 / n as f64)];
            cells.extend(x.iter().map(|&c| real(c)));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Simulates `steps` increments from `start` using the stream seeded by
/// `seed`.
pub fn simulate(model: &WalkModel, start: &[f64], steps: usize, seed: u64) -> Result<Trajectory> {
    let mut walker = Walker::new(model, start, seed)?;
    let mut positions = Vec::with_capacity(start.len() * (steps + 1));
    positions.extend_from_slice(start);
    for _ in 0..steps {
        positions.extend_from_slice(walker.step()?);
    }
    Ok(Trajectory {
        dim: start.len(),
        seed,
        positions,
    })
}

/// The step function `t ↦ n^{-1/2} X_{⌊nt⌋}` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPath {
    n: usize,
    horizon: f64,
    dim: usize,
    values: Vec<f64>,
}

impl ScaledPath {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of jumps in `(0, T]`.
    pub fn jumps(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    /// Value at jump index `k`, i.e. on `[k/n, (k+1)/n)`.
    pub fn value_at_index(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// `X̃_n(t)`; `None` outside `[0, T]`.
    pub fn eval(&self, t: f64) -> Option<&[f64]> {
        if !(0.0..=self.horizon).contains(&t) {
            return None;
        }
        Some(self.value_at_index(floor_steps(self.n, t).min(self.jumps())))
    }

    /// `‖X̃_n(t)‖² = Y_n(t)`
    pub fn squared_norm(&self, t: f64) -> Option<f64> {
        self.eval(t).map(|x| dot(x, x))
    }
}

fn check_scaling(n: usize, horizon: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "scaling index must be positive"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param("T", format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Rescales `traj` diffusively by `n` over `[0, T]`.
pub fn scale(traj: &Trajectory, n: usize, horizon: f64) -> Result<ScaledPath> {
    check_scaling(n, horizon)?;
    let needed = ceil_steps(n, horizon);
    if traj.steps() < needed {
        return Err(Error::TrajectoryTooShort {
            needed,
            have: traj.steps(),
        });
    }
    let jumps = floor_steps(n, horizon);
    let inv = 1.0 / (n as f64).sqrt();
    let values = traj.positions[..(jumps + 1) * traj.dim]
        .iter()
        .map(|&c| c * inv)
        .collect();
    Ok(ScaledPath {
        n,
        horizon,
        dim: traj.dim,
        values,
    })
}

/// `Y_n`, `B_n`, `A_n` at the jump times `k/n`, `k = 0..=⌊nT⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorTrack {
    n: usize,
    horizon: f64,
    limit_trace: f64,
    y: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
}

impl CompensatorTrack {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `V` of the model the track was built from.
    pub fn limit_trace(&self) -> f64 {
        self.limit_trace
    }

    /// Number of jump times in `(0, T]`.
    pub fn jumps(&self) -> usize {
        self.y.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// `M_n = Y_n − B_n` at jump index `k`.
    pub fn martingale(&self, k: usize) -> f64 {
        self.y[k] - self.b[k]
    }

    /// Values at the last jump time not after `T`.
    pub fn terminal(&self) -> (f64, f64, f64, f64) {
        let k = self.jumps();
        (self.y[k], self.b[k], self.a[k], self.martingale(k))
    }

    /// CSV with columns `t, Y, B, A, M`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_csv(
            out,
            &["t", "Y", "B", "A", "M"],
            (0..=self.jumps()).map(|k| [self.time(k), self.y[k], self.b[k], self.a[k], self.martingale(k)]),
        )
    }
}

/// Builds `Y_n`, `B_n`, `A_n` over `[0, T]` from the exact conditional
/// moments of `model` along `traj`.
pub fn compensators<M>(traj: &Trajectory, model: &M, n: usize, horizon: f64) -> Result<CompensatorTrack>
where
    M: ConditionalMoments + ?Sized,
{
    check_scaling(n, horizon)?;
    if traj.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: traj.dim(),
        });
    }
    let needed = ceil_steps(n, horizon);
    if traj.steps() < needed {
        return Err(Error::TrajectoryTooShort {
            needed,
            have: traj.steps(),
        });
    }
    let jumps = floor_steps(n, horizon);
    let nf = n as f64;
    let n2 = nf * nf;
    let mut y = Vec::with_capacity(jumps + 1);
    let mut b = Vec::with_capacity(jumps + 1);
    let mut a = Vec::with_capacity(jumps + 1);
    let (mut b_acc, mut a_acc) = (0.0, 0.0);
    for k in 0..=jumps {
        let x = traj.position(k);
        y.push(dot(x, x) / nf);
        b.push(b_acc);
        a.push(a_acc);
        if k < jumps {
            let m = model.increment_moments(x).ok_or(Error::MissingMoments)?;
            b_acc += m.trace / nf;
            a_acc += (4.0 * m.radial_second + 4.0 * m.m3 + m.m4 - m.trace * m.trace) / n2;
        }
    }
    Ok(CompensatorTrack {
        n,
        horizon,
        limit_trace: model.limit_trace(),
        y,
        b,
        a,
    })
}

/// Largest jumps over `(0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpDiagnostics {
    /// `sup |Y_n(t) − Y_n(t−)|²`
    pub sup_y_jump_sq: f64,
    /// `sup |B_n(t) − B_n(t−)|²`
    pub sup_b_jump_sq: f64,
    /// `sup |A_n(t) − A_n(t−)|`
    pub sup_a_jump: f64,
}

pub fn jump_diagnostics(track: &CompensatorTrack) -> JumpDiagnostics {
    let sup_jump = |v: &[f64]| v.windows(2).fold(0.0f64, |acc, w| acc.max((w[1] - w[0]).abs()));
    JumpDiagnostics {
        sup_y_jump_sq: sup_jump(&track.y).powi(2),
        sup_b_jump_sq: sup_jump(&track.b).powi(2),
        sup_a_jump: sup_jump(&track.a),
    }
}

/// Distances of the compensators from their limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `sup_t |B_n(t) − V t|`
    pub b_residual: f64,
    /// `sup_t |A_n(t) − ∫_0^t 4 Y_n(s) ds|`
    pub a_residual: f64,
}

/// Suprema over `[0, T]`.
///
/// `B_n` and `A_n` are constant on each cell `[k/n, (k+1)/n) ∩ [0, T]` while
/// `V t` and `∫ 4 Y_n` are monotone there, so each supremum is attained at a
/// cell's left endpoint or approached at its right end.
pub fn convergence_residuals(track: &CompensatorTrack) -> Residuals {
    let nf = track.n as f64;
    let v = track.limit_trace;
    let jumps = track.jumps();
    let mut integral = 0.0; // ∫_0^{k/n} Y_n
    let mut b_res = 0.0f64;
    let mut a_res = 0.0f64;
    for k in 0..=jumps {
        let start = track.time(k);
        let end = if k < jumps { track.time(k + 1) } else { track.horizon };
        let end_integral = integral + (end - start) * track.y[k];
        b_res = b_res
            .max((track.b[k] - v * start).abs())
            .max((track.b[k] - v * end).abs());
        a_res = a_res
            .max((track.a[k] - 4.0 * integral).abs())
            .max((track.a[k] - 4.0 * end_integral).abs());
        integral += track.y[k] / nf;
    }
    Residuals {
        b_residual: b_res,
        a_residual: a_res,
    }
}

/// Per-trajectory record of a compensator ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub index: usize,
    pub sub_seed: u64,
    #[serde(flatten)]
    pub jumps: JumpDiagnostics,
    #[serde(flatten)]
    pub residuals: Residuals,
    /// `Y_n(T)`
    pub y_terminal: f64,
    /// `M_n(T)`
    pub m_terminal: f64,
}

/// Simulates `⌈nT⌉` steps from `start` and summarises its compensators.
pub fn summarize_trajectory(
    model: &WalkModel,
    start: &[f64],
    n: usize,
    horizon: f64,
    index: usize,
    seed: u64,
) -> Result<TrajectorySummary> {
    check_scaling(n, horizon)?;
    let traj = simulate(model, start, ceil_steps(n, horizon), seed)?;
    let track = compensators(&traj, model, n, horizon)?;
    let (y_terminal, _, _, m_terminal) = track.terminal();
    Ok(TrajectorySummary {
        index,
        sub_seed: seed,
        jumps: jump_diagnostics(&track),
        residuals: convergence_residuals(&track),
        y_terminal,
        m_terminal,
    })
}

/// [`summarize_trajectory`] over an ensemble, in index order.
pub fn compensator_ensemble(
    model: &WalkModel,
    start: &[f64],
    n: usize,
    horizon: f64,
    ens: &EnsembleConfig,
) -> Result<Vec<TrajectorySummary>> {
    run_indexed(ens.n_traj, ens.seed, ens.workers, |i, seed| {
        summarize_trajectory(model, start, n, horizon, i, seed)
    })
}
