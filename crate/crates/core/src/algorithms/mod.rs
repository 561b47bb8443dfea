//! Offline planners with linear value functions.
//!
//! All four share one backward pass over stages `H−1, …, 0`: accumulate and
//! factor the stage Gram matrix, regress rewards, then estimate the
//! next-stage term.
//!
//! * DRVI-L estimates one KL dual per feature coordinate from a shifted
//!   regression of `exp(−V̂/β) − 1`.
//! * PDRVI-L is DRVI-L with a per-coordinate uncertainty penalty subtracted
//!   from every learned Q value.
//! * RPVI solves a plug-in dual for each observed `(s, a)` and projects the
//!   robust targets onto the features.
//! * LSVI is the non-robust least-squares baseline.

mod config;
mod fit;

pub use config::{AlgoConfig, Pessimism};
pub use fit::{drvi_fit, fit, lsvi_fit, pdrvi_fit, rpvi_fit};

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureSpec};

pub const POLICY_FORMAT: &str = "drrl-policy/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Drvi,
    Pdrvi,
    Rpvi,
    Lsvi,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Drvi => "drvi",
            Algorithm::Pdrvi => "pdrvi",
            Algorithm::Rpvi => "rpvi",
            Algorithm::Lsvi => "lsvi",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drvi" => Ok(Algorithm::Drvi),
            "pdrvi" => Ok(Algorithm::Pdrvi),
            "rpvi" => Ok(Algorithm::Rpvi),
            "lsvi" => Ok(Algorithm::Lsvi),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected drvi, pdrvi, rpvi or lsvi)"
            ))),
        }
    }
}

/// Learned parameters of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageWeights {
    /// Reward regression.
    pub theta_hat: Vec<f64>,
    /// Next-stage term: robust dual values (DRVI/PDRVI), projected robust
    /// targets (RPVI) or the nominal regression (LSVI).
    pub w_hat: Vec<f64>,
    /// Weights defining `Q̂_h = φᵀν̂_h`; clipped to `[0, H − h]` except for RPVI.
    pub nu_hat: Vec<f64>,
    pub gamma: f64,
    /// `‖𝟙ᵢ‖_{Λ_h⁻¹}` per coordinate, the unit penalty width.
    pub coord_width: Vec<f64>,
}

/// Closed-form Q values of one action, shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOverride {
    pub action: usize,
    pub values: Vec<f64>,
}

/// Something that picks an action at `(stage, state)`.
pub trait Policy: Sync {
    fn action(&self, stage: usize, state: usize) -> usize;
}

impl<F: Fn(usize, usize) -> usize + Sync> Policy for F {
    fn action(&self, stage: usize, state: usize) -> usize {
        self(stage, state)
    }
}

/// Greedy policy over the learned `Q̂_h`, together with everything needed to
/// evaluate `Q̂` and `V̂` at any state.
#[derive(Debug, Clone)]
pub struct RobustPolicy {
    algorithm: Algorithm,
    features: Arc<FeatureMap>,
    overrides: Vec<ActionOverride>,
    stages: Vec<StageWeights>,
    config: AlgoConfig,
}

impl PartialEq for RobustPolicy {
    fn eq(&self, other: &Self) -> bool {
        self.algorithm == other.algorithm
            && self.features.spec() == other.features.spec()
            && self.overrides == other.overrides
            && self.stages == other.stages
            && self.config == other.config
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    algorithm: Algorithm,
    horizon: usize,
    num_actions: usize,
    features: FeatureSpec,
    overrides: Vec<ActionOverride>,
    config: AlgoConfig,
    stages: Vec<StageWeights>,
}

impl RobustPolicy {
    pub(crate) fn new(
        algorithm: Algorithm,
        features: Arc<FeatureMap>,
        overrides: Vec<ActionOverride>,
        stages: Vec<StageWeights>,
        config: AlgoConfig,
    ) -> Self {
        Self {
            algorithm,
            features,
            overrides,
            stages,
            config,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[StageWeights] {
        &self.stages
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn config(&self) -> &AlgoConfig {
        &self.config
    }

    pub fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    /// `Q̂_h(s, a)`, including overrides and the pessimism penalty.
    pub fn q_value(&self, h: usize, s: usize, a: usize) -> f64 {
        stage_q(&self.stages[h], &self.features, &self.overrides, s, a)
    }

    /// `V̂_h(s) = max_a Q̂_h(s, a)`; floored at zero when a penalty is active.
    pub fn value(&self, h: usize, s: usize) -> f64 {
        stage_value(&self.stages[h], &self.features, &self.overrides, s)
    }

    /// `V̂_h` over every state.
    pub fn stage_values(&self, h: usize) -> Vec<f64> {
        (0..self.features.num_states()).map(|s| self.value(h, s)).collect()
    }

    /// Highest `Q̂_h(s, ·)`, ties to the lowest action index.
    pub fn greedy_action(&self, h: usize, s: usize) -> usize {
        argmax((0..self.num_actions()).map(|a| self.q_value(h, s, a)))
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            format: POLICY_FORMAT.into(),
            algorithm: self.algorithm,
            horizon: self.horizon(),
            num_actions: self.num_actions(),
            features: self.features.spec().clone(),
            overrides: self.overrides.clone(),
            config: self.config.clone(),
            stages: self.stages.clone(),
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("invalid policy file: {e}"),
        })?;
        if file.format != POLICY_FORMAT {
            return Err(Error::Input(format!("unknown policy format {:?}", file.format)));
        }
        let features = FeatureMap::from_spec(&file.features)?;
        if file.stages.len() != file.horizon || file.num_actions != features.num_actions() {
            return Err(Error::Input("policy header disagrees with its stages or features".into()));
        }
        for (h, st) in file.stages.iter().enumerate() {
            let d = features.dim();
            if st.nu_hat.len() != d || st.theta_hat.len() != d || st.w_hat.len() != d || st.coord_width.len() != d {
                return Err(Error::Input(format!("stage {h} weights do not have dimension {d}")));
            }
        }
        for o in &file.overrides {
            if o.action >= features.num_actions() || o.values.len() != features.num_states() {
                return Err(Error::Input(format!("override for action {} has the wrong shape", o.action)));
            }
        }
        Ok(Self::new(file.algorithm, Arc::new(features), file.overrides, file.stages, file.config))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Policy for RobustPolicy {
    fn action(&self, stage: usize, state: usize) -> usize {
        self.greedy_action(stage, state)
    }
}

pub(crate) fn stage_q(w: &StageWeights, features: &FeatureMap, overrides: &[ActionOverride], s: usize, a: usize) -> f64 {
    if let Some(o) = overrides.iter().find(|o| o.action == a) {
        return o.values[s];
    }
    let phi = features.sparse(s, a);
    let linear: f64 = phi.iter().map(|&(i, v)| v * w.nu_hat[i]).sum();
    if w.gamma > 0.0 {
        let width: f64 = phi.iter().map(|&(i, v)| v.abs() * w.coord_width[i]).sum();
        linear - w.gamma * width
    } else {
        linear
    }
}

pub(crate) fn stage_value(w: &StageWeights, features: &FeatureMap, overrides: &[ActionOverride], s: usize) -> f64 {
    let best = (0..features.num_actions())
        .map(|a| stage_q(w, features, overrides, s, a))
        .fold(f64::NEG_INFINITY, f64::max);
    if w.gamma > 0.0 {
        best.max(0.0)
    } else {
        best
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
