use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kl_dual::{DualConfig, DEFAULT_BETA_MIN, DEFAULT_GRID_SIZE, DEFAULT_REFINE_TOL};

/// Per-stage pessimism coefficient `γ_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pessimism {
    #[default]
    Off,
    /// One coefficient per stage (stage 0 first).
    Explicit { gammas: Vec<f64> },
    /// `γ_h = c₁β(e^{(H−h)/β} − 1)·d·ζ₃^{1/2} + c₂β^{1/2}(e^{(H−h)/β} − 1)·H^{1/2}·ζ₂^{1/2}`
    /// with `β = beta_min`, `ζ₂ = log(2dNH³/(δρ))` and
    /// `ζ₃ = log(2N + 32N²H³d^{5/2}·ζ·e^{2H/β})`, where `ζ` is supplied as `zeta`.
    Schedule {
        #[serde(default = "one")]
        c1: f64,
        #[serde(default = "one")]
        c2: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "one")]
        zeta: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.1
}

impl Pessimism {
    pub fn schedule() -> Self {
        Pessimism::Schedule {
            c1: 1.0,
            c2: 1.0,
            delta: 0.1,
            zeta: 1.0,
        }
    }

    pub fn is_off(&self) -> bool {
        matches!(self, Pessimism::Off)
    }

    /// `γ_h` for every zero-based stage.
    pub fn gammas(&self, horizon: usize, dim: usize, episodes: usize, rho: f64, beta_min: f64) -> Result<Vec<f64>> {
        let gammas = match self {
            Pessimism::Off => vec![0.0; horizon],
            Pessimism::Explicit { gammas } => {
                if gammas.len() != horizon {
                    return Err(Error::Config(format!(
                        "explicit pessimism needs {horizon} coefficients, got {}",
                        gammas.len()
                    )));
                }
                gammas.clone()
            }
            &Pessimism::Schedule { c1, c2, delta, zeta } => {
                if !(rho > 0.0) || !(delta > 0.0) || !(zeta > 0.0) {
                    return Err(Error::Config("pessimism schedule needs rho, delta, zeta > 0".into()));
                }
                let (h_f, d_f, n_f, b) = (horizon as f64, dim as f64, episodes as f64, beta_min);
                let zeta2 = (2.0 * d_f * n_f * h_f.powi(3) / (delta * rho)).ln();
                // log(2N + X) with log X = log(32 N² H³ d^{5/2} ζ) + 2H/β, kept in log space.
                let log_x = (32.0 * n_f * n_f * h_f.powi(3) * d_f.powf(2.5) * zeta).ln() + 2.0 * h_f / b;
                let log_2n = (2.0 * n_f).ln();
                let (hi, lo) = if log_x > log_2n { (log_x, log_2n) } else { (log_2n, log_x) };
                let zeta3 = hi + (lo - hi).exp().ln_1p();
                (0..horizon)
                    .map(|h| {
                        let remaining = (horizon - h - 1) as f64;
                        let growth = (remaining / b).exp_m1();
                        c1 * b * growth * d_f * zeta3.sqrt() + c2 * b.sqrt() * growth * h_f.sqrt() * zeta2.sqrt()
                    })
                    .collect()
            }
        };
        if let Some((h, g)) = gammas.iter().enumerate().find(|(_, g)| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::Config(format!(
                "pessimism coefficient at stage {h} is {g}; a larger beta_min keeps the schedule finite"
            )));
        }
        Ok(gammas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoConfig {
    pub rho: f64,
    pub lambda: f64,
    pub beta_min: f64,
    /// Fixed upper end of the β interval; `None` uses `(H − h)/ρ` per stage.
    pub beta_max: Option<f64>,
    pub grid_size: usize,
    pub refine_tol: f64,
    pub pessimism: Pessimism,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            rho: 0.01,
            lambda: 1.0,
            beta_min: DEFAULT_BETA_MIN,
            beta_max: None,
            grid_size: DEFAULT_GRID_SIZE,
            refine_tol: DEFAULT_REFINE_TOL,
            pessimism: Pessimism::Off,
        }
    }
}

impl AlgoConfig {
    pub fn with_rho(rho: f64) -> Self {
        Self { rho, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        self.dual_config(2, 0).validate()
    }

    /// β interval for the duals solved at zero-based stage `h`; the next-stage
    /// values lie in `[0, H − h − 1]`.
    pub fn dual_config(&self, horizon: usize, h: usize) -> DualConfig {
        let range = horizon.saturating_sub(h + 1).max(1) as f64;
        let mut cfg = match self.beta_max {
            Some(b) => DualConfig::new(self.rho, self.beta_min, b.max(self.beta_min)),
            None => DualConfig::for_value_range(self.rho, self.beta_min, range, self.beta_min),
        };
        cfg.grid_size = self.grid_size;
        cfg.refine_tol = self.refine_tol;
        cfg
    }
}
