//! Finite-horizon tabular MDPs, the American put option market, and small
//! random toy models used as test fixtures.

mod option;

pub use option::{
    build_option_env, exercise_q_values, perturb_option_env, OptionEnvParams, EXERCISE, HOLD,
};

use rand::Rng;

use crate::error::{Error, Result};

/// Sparse next-state distribution: `(state, probability)` pairs.
pub type TransitionRow = Vec<(usize, f64)>;

/// Transition and reward tables for one stage, indexed by `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub transitions: Vec<TransitionRow>,
    pub rewards: Vec<f64>,
}

/// Episodic MDP with `horizon` stages, indexed `0..horizon`.
///
/// `stages` holds either one model shared by every stage or one per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    stages: Vec<StageModel>,
    initial_dist: Vec<f64>,
    terminal_state: Option<usize>,
}

const ROW_TOL: f64 = 1e-9;

impl EpisodicMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        stages: Vec<StageModel>,
        initial_dist: Vec<f64>,
        terminal_state: Option<usize>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::Config("states, actions and horizon must all be positive".into()));
        }
        if stages.len() != 1 && stages.len() != horizon {
            return Err(Error::Config(format!(
                "expected 1 or {horizon} stage models, got {}",
                stages.len()
            )));
        }
        let rows = num_states * num_actions;
        for (h, stage) in stages.iter().enumerate() {
            if stage.transitions.len() != rows || stage.rewards.len() != rows {
                return Err(Error::Config(format!("stage {h} tables must have {rows} rows")));
            }
            for (k, row) in stage.transitions.iter().enumerate() {
                let mut total = 0.0;
                for &(s, p) in row {
                    if s >= num_states || !(p >= 0.0) {
                        return Err(Error::Config(format!(
                            "stage {h} row {k}: bad entry ({s}, {p})"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > ROW_TOL {
                    return Err(Error::Config(format!(
                        "stage {h} row {k} sums to {total}, expected 1"
                    )));
                }
            }
            if let Some(bad) = stage.rewards.iter().find(|r| !r.is_finite()) {
                return Err(Error::Config(format!("stage {h} has non-finite reward {bad}")));
            }
        }
        if initial_dist.len() != num_states
            || initial_dist.iter().any(|p| !(*p >= 0.0))
            || (initial_dist.iter().sum::<f64>() - 1.0).abs() > ROW_TOL
        {
            return Err(Error::Config("initial distribution must be a simplex vector over states".into()));
        }
        if let Some(t) = terminal_state {
            if t >= num_states {
                return Err(Error::Config(format!("terminal state {t} out of range")));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            stages,
            initial_dist,
            terminal_state,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn terminal_state(&self) -> Option<usize> {
        self.terminal_state
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_state == Some(s)
    }

    pub fn stage_model(&self, h: usize) -> &StageModel {
        if self.stages.len() == 1 {
            &self.stages[0]
        } else {
            &self.stages[h]
        }
    }

    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[(usize, f64)] {
        &self.stage_model(h).transitions[s * self.num_actions + a]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.stage_model(h).rewards[s * self.num_actions + a]
    }

    fn check_indices(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon || s >= self.num_states || a >= self.num_actions {
            return Err(Error::Input(format!(
                "index out of range: stage {h}/{}, state {s}/{}, action {a}/{}",
                self.horizon, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    /// Samples one transition: `(reward, next_state)`.
    pub fn step<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> Result<(f64, usize)> {
        self.check_indices(h, s, a)?;
        let next = sample_sparse(self.transition(h, s, a), rng);
        Ok((self.reward(h, s, a), next))
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_dense(&self.initial_dist, rng)
    }
}

pub(crate) fn sample_sparse<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(s, p) in row {
        acc += p;
        if u < acc {
            return s;
        }
    }
    // Rounding left a sliver above the last cumulative sum.
    row.iter().rev().find(|(_, p)| *p > 0.0).map(|(s, _)| *s).unwrap_or(row[0].0)
}

pub(crate) fn sample_dense<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Random MDP with stage-dependent tables whose probabilities are multiples
/// of `1/denominator`, so an exhaustive dataset can reproduce them exactly.
/// Rewards are drawn uniformly from `[0, 1]`; the initial distribution is uniform.
pub fn random_tabular_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    denominator: u32,
    rng: &mut R,
) -> Result<EpisodicMdp> {
    if denominator == 0 {
        return Err(Error::Config("denominator must be positive".into()));
    }
    let stages = (0..horizon)
        .map(|_| {
            let transitions = (0..num_states * num_actions)
                .map(|_| {
                    let mut counts = vec![0u32; num_states];
                    for _ in 0..denominator {
                        counts[rng.random_range(0..num_states)] += 1;
                    }
                    counts
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| **c > 0)
                        .map(|(s, &c)| (s, c as f64 / denominator as f64))
                        .collect()
                })
                .collect();
            let rewards = (0..num_states * num_actions).map(|_| rng.random::<f64>()).collect();
            StageModel { transitions, rewards }
        })
        .collect();
    let initial = vec![1.0 / num_states as f64; num_states];
    EpisodicMdp::new(num_states, num_actions, horizon, stages, initial, None)
}

/// Deterministic MDP: `next[h][s*A + a]` is the successor and
/// `rewards[h][s*A + a]` the payoff. Starts in state 0.
pub fn deterministic_mdp(
    num_states: usize,
    num_actions: usize,
    next: Vec<Vec<usize>>,
    rewards: Vec<Vec<f64>>,
) -> Result<EpisodicMdp> {
    let horizon = next.len();
    if rewards.len() != horizon {
        return Err(Error::Config("next and rewards must have the same number of stages".into()));
    }
    let stages = next
        .into_iter()
        .zip(rewards)
        .map(|(n, r)| StageModel {
            transitions: n.into_iter().map(|s| vec![(s, 1.0)]).collect(),
            rewards: r,
        })
        .collect();
    let mut initial = vec![0.0; num_states];
    initial[0] = 1.0;
    EpisodicMdp::new(num_states, num_actions, horizon, stages, initial, None)
}
