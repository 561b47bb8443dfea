//! Continuous-action bandit whose reward law is a two-component Gaussian
//! mixture, used to compare `(s, a)`-rectangular, projected and
//! d-rectangular robust values.
//!
//! Action `a ∈ [0, 1]` draws from component 1 with probability `a` and from
//! component 0 otherwise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kl_dual::{maximize_objective, DualConfig};

/// Actions on the least-squares projection grid.
pub const PROJECTION_POINTS: usize = 1001;
const BETA_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    /// `log E[e^{−X/β}] = −μ/β + s²/(2β²)`.
    pub fn log_mgf_neg(&self, beta: f64) -> f64 {
        -self.mean / beta + self.sd * self.sd / (2.0 * beta * beta)
    }
}

/// `E[e^{−X/β}]` for `X ~ N(mean, sd²)`.
pub fn gaussian_mgf_neg(mean: f64, sd: f64, beta: f64) -> f64 {
    Gaussian { mean, sd }.log_mgf_neg(beta).exp()
}

/// `sup_β {−β log E[e^{−X/β}] − βρ}` for a Gaussian mixture given as
/// `(weight, component)` pairs, evaluated in log space.
pub fn robust_value_g(mixture: &[(f64, Gaussian)], rho: f64) -> Result<f64> {
    let parts: Vec<(f64, Gaussian)> = mixture
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|&(w, g)| (w.ln(), g))
        .collect();
    if parts.is_empty() {
        return Err(Error::Input("mixture has no component with positive weight".into()));
    }
    let objective = |beta: f64| {
        let logs: Vec<f64> = parts.iter().map(|(lw, g)| lw + g.log_mgf_neg(beta)).collect();
        let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = hi + logs.iter().map(|l| (l - hi).exp()).sum::<f64>().ln();
        let v = -beta * log_z - beta * rho;
        v.is_finite().then_some(v)
    };
    Ok(maximize_objective(objective, &DualConfig::new(rho, BETA_RANGE.0, BETA_RANGE.1))?.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureBandit {
    pub comp0: Gaussian,
    pub comp1: Gaussian,
    pub rho: f64,
    /// `[u₀, u₁]` with `q_proj(a) = (1 − a)u₀ + a·u₁`.
    projection: [f64; 2],
}

impl MixtureBandit {
    /// Components `N(1, 1)` and `N(0, 0.5²)`.
    pub fn new(rho: f64) -> Result<Self> {
        Self::with_components(
            Gaussian { mean: 1.0, sd: 1.0 },
            Gaussian { mean: 0.0, sd: 0.5 },
            rho,
        )
    }

    pub fn with_components(comp0: Gaussian, comp1: Gaussian, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config(format!("bandit radius must be finite and > 0, got {rho}")));
        }
        let mut bandit = Self {
            comp0,
            comp1,
            rho,
            projection: [0.0; 2],
        };
        bandit.projection = bandit.fit_projection()?;
        Ok(bandit)
    }

    pub fn mixture(&self, a: f64) -> [(f64, Gaussian); 2] {
        [(1.0 - a, self.comp0), (a, self.comp1)]
    }

    fn check(a: f64) -> Result<()> {
        if (0.0..=1.0).contains(&a) {
            Ok(())
        } else {
            Err(Error::Input(format!("action must lie in [0, 1], got {a}")))
        }
    }

    /// Robust value of the mixture reward itself.
    pub fn q_sa(&self, a: f64) -> Result<f64> {
        Self::check(a)?;
        robust_value_g(&self.mixture(a), self.rho)
    }

    /// Interpolation of the two component robust values.
    pub fn q_d(&self, a: f64) -> Result<f64> {
        Self::check(a)?;
        let g0 = robust_value_g(&[(1.0, self.comp0)], self.rho)?;
        let g1 = robust_value_g(&[(1.0, self.comp1)], self.rho)?;
        Ok((1.0 - a) * g0 + a * g1)
    }

    /// Least-squares projection of `q_sa` onto the features `[1 − a, a]`.
    pub fn q_proj(&self, a: f64) -> Result<f64> {
        Self::check(a)?;
        Ok((1.0 - a) * self.projection[0] + a * self.projection[1])
    }

    pub fn projection_weights(&self) -> [f64; 2] {
        self.projection
    }

    /// Nominal mean reward `(1 − a)μ₀ + a·μ₁`.
    pub fn nominal_mean(&self, a: f64) -> f64 {
        (1.0 - a) * self.comp0.mean + a * self.comp1.mean
    }

    fn fit_projection(&self) -> Result<[f64; 2]> {
        // Normal equations for features x = (1 − a, a).
        let (mut g00, mut g01, mut g11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..PROJECTION_POINTS {
            let a = k as f64 / (PROJECTION_POINTS - 1) as f64;
            let y = robust_value_g(&self.mixture(a), self.rho)?;
            let (x0, x1) = (1.0 - a, a);
            g00 += x0 * x0;
            g01 += x0 * x1;
            g11 += x1 * x1;
            b0 += x0 * y;
            b1 += x1 * y;
        }
        let det = g00 * g11 - g01 * g01;
        Ok([(g11 * b0 - g01 * b1) / det, (g00 * b1 - g01 * b0) / det])
    }

    /// The three curves on `resolution` equally spaced actions in `[0, 1]`.
    pub fn curves(&self, resolution: usize) -> Result<Vec<BanditRow>> {
        if resolution < 2 {
            return Err(Error::Config(format!("resolution must be >= 2, got {resolution}")));
        }
        (0..resolution)
            .map(|k| {
                let a = k as f64 / (resolution - 1) as f64;
                Ok(BanditRow {
                    a,
                    q_sa: self.q_sa(a)?,
                    q_proj: self.q_proj(a)?,
                    q_d: self.q_d(a)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BanditRow {
    pub a: f64,
    pub q_sa: f64,
    pub q_proj: f64,
    pub q_d: f64,
}
