//! Bounded noise: draw from a named family, remove its mean, clip to the
//! ball `‖w‖ ≤ W`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution as _, Exp, Gamma, Normal, Uniform, Weibull};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Gaussian {
        mean: f64,
        std: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// `Beta(α, β)` mapped affinely onto `[low, high]`.
    Beta {
        alpha: f64,
        beta: f64,
        low: f64,
        high: f64,
    },
    Exponential {
        rate: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Laplace {
        location: f64,
        scale: f64,
    },
}

impl Distribution {
    /// Family name as used in scenario files and reports.
    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Gaussian { .. } => "gaussian",
            Distribution::Uniform { .. } => "uniform",
            Distribution::Gamma { .. } => "gamma",
            Distribution::Beta { .. } => "beta",
            Distribution::Exponential { .. } => "exponential",
            Distribution::Weibull { .. } => "weibull",
            Distribution::Laplace { .. } => "laplace",
        }
    }

    /// The family with its default parameters.
    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "gaussian" => Distribution::Gaussian { mean: 0.0, std: 0.5 },
            "uniform" => Distribution::Uniform { low: -1.0, high: 1.0 },
            "gamma" => Distribution::Gamma { shape: 2.0, scale: 0.5 },
            "beta" => Distribution::Beta {
                alpha: 2.0,
                beta: 2.0,
                low: -1.0,
                high: 1.0,
            },
            "exponential" => Distribution::Exponential { rate: 1.0 },
            "weibull" => Distribution::Weibull { shape: 1.5, scale: 1.0 },
            "laplace" => Distribution::Laplace {
                location: 0.0,
                scale: 0.5,
            },
            other => return Err(Error::config(format!("unknown noise distribution `{other}`"))),
        })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Gaussian { mean, .. } => mean,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::Gamma { shape, scale } => shape * scale,
            Distribution::Beta { alpha, beta, low, high } => low + (high - low) * alpha / (alpha + beta),
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Weibull { shape, scale } => scale * libm::tgamma(1.0 + 1.0 / shape),
            Distribution::Laplace { location, .. } => location,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Gaussian { mean, std } => mean.is_finite() && std >= 0.0 && std.is_finite(),
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Distribution::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Distribution::Beta { alpha, beta, low, high } => {
                alpha > 0.0 && beta > 0.0 && low.is_finite() && high.is_finite() && low < high
            }
            Distribution::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Distribution::Weibull { shape, scale } => shape > 0.0 && scale > 0.0,
            Distribution::Laplace { location, scale } => location.is_finite() && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid parameters for {self:?}")))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        // parameters were validated on construction
        match *self {
            Distribution::Gaussian { mean, std } => Normal::new(mean, std).unwrap().sample(rng),
            Distribution::Uniform { low, high } => Uniform::new(low, high).unwrap().sample(rng),
            Distribution::Gamma { shape, scale } => Gamma::new(shape, scale).unwrap().sample(rng),
            Distribution::Beta { alpha, beta, low, high } => {
                low + (high - low) * Beta::new(alpha, beta).unwrap().sample(rng)
            }
            Distribution::Exponential { rate } => Exp::new(rate).unwrap().sample(rng),
            Distribution::Weibull { shape, scale } => Weibull::new(scale, shape).unwrap().sample(rng),
            Distribution::Laplace { location, scale } => {
                // inverse CDF on an open interval around zero
                let p: f64 = rng.random_range(-0.5..0.5);
                location - scale * p.signum() * (1.0 - 2.0 * p.abs()).ln()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub distribution: Distribution,
    pub bound: f64,
    /// Subtracted from every raw component before clipping.
    pub offset: f64,
    pub dim: usize,
    pub seed: u64,
}

impl NoiseSpec {
    /// With `center`, the offset is the distribution mean.
    pub fn new(distribution: Distribution, bound: f64, dim: usize, seed: u64, center: bool) -> Result<Self> {
        distribution.validate()?;
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::config(format!(
                "noise bound must be finite and ≥ 0, got {bound}"
            )));
        }
        Ok(NoiseSpec {
            distribution,
            bound,
            offset: if center { distribution.mean() } else { 0.0 },
            dim,
            seed,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        NoiseSpec { seed, ..self.clone() }
    }
}

/// Shifts by `offset` and scales into the ball of radius `bound`.
pub fn center_and_clip(mut raw: DVector<f64>, offset: f64, bound: f64) -> DVector<f64> {
    raw.add_scalar_mut(-offset);
    let n = raw.norm();
    if n > bound {
        if bound == 0.0 {
            raw.fill(0.0);
        } else if raw.len() == 1 {
            raw[0] = bound.copysign(raw[0]);
        } else {
            raw *= bound / n;
            // rounding can leave the norm a hair above the bound
            while raw.norm() > bound {
                raw *= 1.0 - f64::EPSILON;
            }
        }
    }
    raw
}

/// The noise at step `t`. Each step reads its own ChaCha stream, so the
/// value depends only on `(seed, t)`.
pub fn sample_noise(spec: &NoiseSpec, t: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(t as u64);
    let raw = DVector::from_fn(spec.dim, |_, _| spec.distribution.draw(&mut rng));
    center_and_clip(raw, spec.offset, spec.bound)
}
