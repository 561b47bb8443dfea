//! Feature maps `φ(s, a)` stored as sparse rows.

use serde::{Deserialize, Serialize};

use crate::envs::{EpisodicMdp, OptionEnvParams};
use crate::error::{Error, Result};

/// Largest one-hot dimension accepted; the Gram matrix is dense `d × d`.
pub const MAX_ONEHOT_DIM: usize = 5000;

/// Serializable description from which a [`FeatureMap`] can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    OneHot {
        num_states: usize,
        num_actions: usize,
        terminal_state: Option<usize>,
    },
    /// Tent similarity to `dim` equally spaced price anchors, shared by both actions.
    Anchor { dim: usize, params: OptionEnvParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: FeatureSpec,
    dim: usize,
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl FeatureMap {
    pub fn from_spec(spec: &FeatureSpec) -> Result<Self> {
        match spec {
            FeatureSpec::OneHot {
                num_states,
                num_actions,
                terminal_state,
            } => onehot(*num_states, *num_actions, *terminal_state),
            FeatureSpec::Anchor { dim, params } => build_anchor_features(*dim, params),
        }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Nonzero entries of `φ(s, a)` in increasing index order.
    pub fn sparse(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s * self.num_actions + a]
    }

    pub fn dense(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in self.sparse(s, a) {
            out[i] = v;
        }
        out
    }

    /// `φ(s, a)ᵀ w`.
    pub fn dot(&self, s: usize, a: usize, w: &[f64]) -> f64 {
        self.sparse(s, a).iter().map(|&(i, v)| v * w[i]).sum()
    }
}

fn onehot(num_states: usize, num_actions: usize, terminal: Option<usize>) -> Result<FeatureMap> {
    let dim = num_states
        .checked_mul(num_actions)
        .filter(|d| *d > 0 && *d <= MAX_ONEHOT_DIM)
        .ok_or_else(|| {
            Error::Config(format!(
                "one-hot dimension {num_states}x{num_actions} exceeds {MAX_ONEHOT_DIM}"
            ))
        })?;
    let rows = (0..dim)
        .map(|k| {
            if Some(k / num_actions) == terminal {
                Vec::new()
            } else {
                vec![(k, 1.0)]
            }
        })
        .collect();
    Ok(FeatureMap {
        spec: FeatureSpec::OneHot {
            num_states,
            num_actions,
            terminal_state: terminal,
        },
        dim,
        num_states,
        num_actions,
        rows,
    })
}

/// Indicator of `(s, a)` at coordinate `s·A + a`; the terminal state maps to zero.
pub fn build_onehot_features(env: &EpisodicMdp) -> Result<FeatureMap> {
    onehot(env.num_states(), env.num_actions(), env.terminal_state())
}

/// `φᵢ(s) = max(0, 1 − |s − anchorᵢ|/Δ)` with `d` anchors spanning the price grid.
pub fn build_anchor_features(dim: usize, params: &OptionEnvParams) -> Result<FeatureMap> {
    if dim < 2 {
        return Err(Error::Config(format!("anchor features need d >= 2, got {dim}")));
    }
    params.validate()?;
    let spacing = (params.price_hi - params.price_lo) / (dim - 1) as f64;
    let num_states = params.num_states();
    let mut rows = Vec::with_capacity(num_states * 2);
    for s in 0..num_states {
        let row = if s == params.exit_state() {
            Vec::new()
        } else {
            let price = params.price(s);
            let mut row: Vec<(usize, f64)> = (0..dim)
                .filter_map(|i| {
                    let anchor = params.price_lo + spacing * i as f64;
                    let w = 1.0 - (price - anchor).abs() / spacing;
                    (w > 1e-12).then_some((i, w))
                })
                .collect();
            let total: f64 = row.iter().map(|(_, w)| w).sum();
            row.iter_mut().for_each(|(_, w)| *w /= total);
            row
        };
        rows.push(row.clone());
        rows.push(row);
    }
    Ok(FeatureMap {
        spec: FeatureSpec::Anchor { dim, params: *params },
        dim,
        num_states,
        num_actions: 2,
        rows,
    })
}
