//! Squared Bessel reference laws.
//!
//! `BESQ^V(x0)` solves `dY = V dt + 2√|Y| dB`, `Y_0 = x0`. From `0` its
//! time-`t` marginal is Gamma with shape `V/2` and scale `2t`; from `y > 0`
//! the transition over `dt` is a Poisson mixture of Gammas,
//!
//! ```text
//! N ~ Poisson(y / (2 dt)),   Y_{t+dt} | N ~ Gamma(V/2 + N, scale 2 dt).
//! ```
//!
//! The Bessel process `ρ = √Y` solves `dρ = (V − 1)/(2ρ) dt + dB`, which is
//! integrated by an Euler scheme only as a coarse cross-check for `V ≥ 2`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::format::write_csv;
use crate::special::gamma_p;
use crate::{Error, Result};

/// Lower bound on `ρ` in the Euler drift `(V − 1)/(2ρ)`.
pub const EULER_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesqLaw {
    dimension: f64,
    x0: f64,
}

impl BesqLaw {
    pub fn new(dimension: f64, x0: f64) -> Result<Self> {
        if !(dimension.is_finite() && dimension > 1.0) {
            return Err(Error::param("V", format!("dimension must exceed 1, got {dimension}")));
        }
        if !(x0.is_finite() && x0 >= 0.0) {
            return Err(Error::param("x0", format!("start must be >= 0, got {x0}")));
        }
        Ok(Self { dimension, x0 })
    }

    /// `BESQ^V(0)`
    pub fn from_zero(dimension: f64) -> Result<Self> {
        Self::new(dimension, 0.0)
    }

    pub fn dimension(&self) -> f64 {
        self.dimension
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// `P(Y_t ≤ y)` for a law started at 0: the regularized lower incomplete
    /// gamma `P(V/2, y/(2t))`.
    pub fn marginal_cdf(&self, t: f64, y: f64) -> Result<f64> {
        if self.x0 != 0.0 {
            return Err(Error::param(
                "x0",
                "closed-form marginal needs x0 = 0; sample with exact_step instead",
            ));
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::param("t", format!("time must be positive, got {t}")));
        }
        if y.is_nan() {
            return Err(Error::param("y", "NaN"));
        }
        if y <= 0.0 {
            return Ok(0.0);
        }
        gamma_p(0.5 * self.dimension, y / (2.0 * t))
    }

    /// Draws `Y_{s+dt}` given `Y_s = y_s` from the exact transition law.
    pub fn exact_step<R: Rng + ?Sized>(&self, y_s: f64, dt: f64, rng: &mut R) -> Result<f64> {
        if !(y_s.is_finite() && y_s >= 0.0) {
            return Err(Error::param("y_s", format!("state must be >= 0, got {y_s}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("step must be positive, got {dt}")));
        }
        let lambda = y_s / (2.0 * dt);
        let mixing = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| Error::param("y_s", e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
        let gamma = Gamma::new(0.5 * self.dimension + mixing, 2.0 * dt)
            .map_err(|e| Error::param("dt", e.to_string()))?;
        Ok(gamma.sample(rng))
    }

    /// `Y_t` from `x0` in one exact step.
    pub fn sample_at<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64> {
        self.exact_step(self.x0, t, rng)
    }

    /// `Y` after `steps` chained exact steps of length `dt` from `x0`.
    pub fn sample_chained<R: Rng + ?Sized>(&self, steps: usize, dt: f64, rng: &mut R) -> Result<f64> {
        let mut y = self.x0;
        for _ in 0..steps {
            y = self.exact_step(y, dt, rng)?;
        }
        Ok(y)
    }

    /// Euler drift `(V − 1)/(2 max(ρ, EULER_FLOOR))` for `ρ ≠ 0`, and 0 at
    /// `ρ = 0` as in the SDE's `1{ρ ≠ 0}` factor.
    pub fn euler_drift(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        (self.dimension - 1.0) / (2.0 * rho.max(EULER_FLOOR))
    }

    /// Terminal value `ρ` after `n_steps` reflected Euler steps of size `dt`
    /// for the Bessel SDE started at `√x0`.
    ///
    /// Rejected for `V < 2`: there the Bessel SDE loses uniqueness in law even
    /// from positive starts, so the scheme has no well-defined target.
    pub fn euler_bessel<R: Rng + ?Sized>(&self, n_steps: usize, dt: f64, rng: &mut R) -> Result<f64> {
        if self.dimension < 2.0 {
            return Err(Error::param(
                "V",
                format!(
                    "Euler cross-check needs V >= 2 (got {}); for V in (1,2) the Bessel SDE is \
                     not unique in law, use the exact BESQ sampler",
                    self.dimension
                ),
            ));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("step must be positive, got {dt}")));
        }
        let sqrt_dt = dt.sqrt();
        let mut rho = self.x0.sqrt();
        for _ in 0..n_steps {
            let xi: f64 = rng.sample(StandardNormal);
            rho = (rho + self.euler_drift(rho) * dt + sqrt_dt * xi).abs();
        }
        Ok(rho)
    }
}

/// `Σ_{i=1}^{dim} (√t ξ_i)²`: the squared norm of `dim`-dimensional Brownian
/// motion at time `t`, which is `BESQ^dim(0)` at `t`.
pub fn brownian_squared_norm<R: Rng + ?Sized>(dim: usize, t: f64, rng: &mut R) -> f64 {
    (0..dim)
        .map(|_| {
            let xi: f64 = rng.sample(StandardNormal);
            t * xi * xi
        })
        .sum()
}

/// Single-column CSV (`y`) of a sample batch.
pub fn write_samples_csv<W: Write>(samples: &[f64], out: W) -> io::Result<()> {
    write_csv(out, &["y"], samples.iter().map(|&y| [y]))
}

/// Two-column CSV (`y`, `F`) of the time-`t` marginal CDF of `law`.
pub fn write_cdf_table<W: Write>(law: &BesqLaw, t: f64, ys: &[f64], out: W) -> io::Result<()> {
    let mut rows = Vec::with_capacity(ys.len());
    for &y in ys {
        let f = law
            .marginal_cdf(t, y)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        rows.push([y, f]);
    }
    write_csv(out, &["y", "F"], rows)
}
