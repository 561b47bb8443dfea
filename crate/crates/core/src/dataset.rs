//! Offline trajectories: collection under a behavior policy and the
//! JSON-lines file format.
//!
//! A dataset file is one header object followed by one object per
//! transition:
//!
//! ```text
//! {"format":"drrl-dataset/1","num_episodes":2,"horizon":3,...}
//! {"episode":0,"stage":0,"state":4,"action":1,"reward":0.0,"next_state":7}
//! ```
//!
//! Stages are zero-based. Loading re-checks that every episode has exactly
//! one transition per stage and that consecutive transitions are stitched
//! (`next_state` at stage `h` is the `state` at stage `h + 1`).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{sample_dense, EpisodicMdp};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "drrl-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub episode: usize,
    pub stage: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub format: String,
    pub num_episodes: usize,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub behavior: String,
    pub seed: u64,
    /// Free-form description of the generating environment.
    #[serde(default)]
    pub env: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    metadata: DatasetMetadata,
    transitions: Vec<Transition>,
}

/// Action distribution as a function of `(stage, state)`.
pub trait BehaviorPolicy: Sync {
    fn id(&self) -> String;
    fn distribution(&self, stage: usize, state: usize, num_actions: usize) -> Vec<f64>;
}

/// Always plays the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedAction(pub usize);

impl BehaviorPolicy for FixedAction {
    fn id(&self) -> String {
        format!("fixed:{}", self.0)
    }

    fn distribution(&self, _stage: usize, _state: usize, num_actions: usize) -> Vec<f64> {
        let mut p = vec![0.0; num_actions];
        p[self.0.min(num_actions - 1)] = 1.0;
        p
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UniformBehavior;

impl BehaviorPolicy for UniformBehavior {
    fn id(&self) -> String {
        "uniform".into()
    }

    fn distribution(&self, _stage: usize, _state: usize, num_actions: usize) -> Vec<f64> {
        vec![1.0 / num_actions as f64; num_actions]
    }
}

/// Per-episode generator: the base seed selects the key, the episode the stream.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Rolls out `num_episodes` independent trajectories of `env` under `behavior`.
///
/// Episodes run in parallel; each draws from its own stream, so the result
/// depends only on `seed`.
pub fn collect(
    env: &EpisodicMdp,
    behavior: &dyn BehaviorPolicy,
    num_episodes: usize,
    seed: u64,
    env_description: serde_json::Value,
) -> Result<OfflineDataset> {
    if num_episodes == 0 {
        return Err(Error::Input("need at least one episode".into()));
    }
    let horizon = env.horizon();
    let episodes: Vec<Vec<Transition>> = (0..num_episodes)
        .into_par_iter()
        .map(|episode| {
            let mut rng = episode_rng(seed, episode as u64);
            let mut state = env.sample_initial(&mut rng);
            let mut out = Vec::with_capacity(horizon);
            for stage in 0..horizon {
                let probs = behavior.distribution(stage, state, env.num_actions());
                let action = sample_dense(&probs, &mut rng);
                let (reward, next_state) = env.step(stage, state, action, &mut rng)?;
                out.push(Transition {
                    episode,
                    stage,
                    state,
                    action,
                    reward,
                    next_state,
                });
                state = next_state;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let metadata = DatasetMetadata {
        format: FORMAT_TAG.into(),
        num_episodes,
        horizon,
        num_states: env.num_states(),
        num_actions: env.num_actions(),
        behavior: behavior.id(),
        seed,
        env: env_description,
    };
    OfflineDataset::new(metadata, episodes.into_iter().flatten().collect())
}

impl OfflineDataset {
    /// Validates and sorts transitions by `(episode, stage)`.
    pub fn new(metadata: DatasetMetadata, mut transitions: Vec<Transition>) -> Result<Self> {
        let (n, h) = (metadata.num_episodes, metadata.horizon);
        if metadata.format != FORMAT_TAG {
            return Err(Error::Input(format!("unknown dataset format {:?}", metadata.format)));
        }
        if n == 0 || h == 0 {
            return Err(Error::Input("dataset needs at least one episode and one stage".into()));
        }
        if transitions.len() != n * h {
            return Err(Error::Input(format!(
                "expected {} transitions ({n} episodes x {h} stages), found {}",
                n * h,
                transitions.len()
            )));
        }
        transitions.sort_by_key(|t| (t.episode, t.stage));
        for (k, t) in transitions.iter().enumerate() {
            if t.episode != k / h || t.stage != k % h {
                return Err(Error::Input(format!(
                    "episode {} is missing stage {} (found episode {} stage {})",
                    k / h,
                    k % h,
                    t.episode,
                    t.stage
                )));
            }
            if t.state >= metadata.num_states
                || t.next_state >= metadata.num_states
                || t.action >= metadata.num_actions
                || !t.reward.is_finite()
            {
                return Err(Error::Input(format!(
                    "episode {} stage {}: state/action/reward out of range",
                    t.episode, t.stage
                )));
            }
        }
        for pair in transitions.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.episode == b.episode && a.next_state != b.state {
                return Err(Error::Input(format!(
                    "episode {} breaks at stage {}: next_state {} but following state {}",
                    a.episode, a.stage, a.next_state, b.state
                )));
            }
        }
        Ok(Self { metadata, transitions })
    }

    pub fn metadata(&self) -> &DatasetMetadata {
        &self.metadata
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn num_episodes(&self) -> usize {
        self.metadata.num_episodes
    }

    pub fn horizon(&self) -> usize {
        self.metadata.horizon
    }

    /// Per-stage view consumed by the planners.
    pub fn staged(&self) -> StagedSamples {
        let h = self.horizon();
        let mut stages = vec![Vec::with_capacity(self.num_episodes()); h];
        for t in &self.transitions {
            stages[t.stage].push(Sample {
                state: t.state,
                action: t.action,
                reward: t.reward,
                next_state: t.next_state,
            });
        }
        StagedSamples { stages }
    }

    /// First `n` episodes, for sample-size sweeps over one collected dataset.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.num_episodes() {
            return Err(Error::Input(format!(
                "cannot keep {n} of {} episodes",
                self.num_episodes()
            )));
        }
        let mut metadata = self.metadata.clone();
        metadata.num_episodes = n;
        Self::new(metadata, self.transitions[..n * self.horizon()].to_vec())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.metadata).expect("metadata serializes");
        out.push('\n');
        for t in &self.transitions {
            let _ = writeln!(out, "{}", serde_json::to_string(t).expect("transition serializes"));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(self.to_jsonl().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let metadata = loop {
            match lines.next() {
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        message: "missing dataset header (empty file)".into(),
                    })
                }
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str::<DatasetMetadata>(&line).map_err(|e| Error::Parse {
                        line: i + 1,
                        message: format!("invalid dataset header: {e}"),
                    })?;
                }
            }
        };
        let mut transitions = Vec::with_capacity(metadata.num_episodes * metadata.horizon);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("invalid transition: {e}"),
            })?;
            transitions.push(t);
        }
        Self::new(metadata, transitions)
    }

    /// SHA-256 of the canonical JSON-lines encoding.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// One `(s, a, r, s')` tuple without episode bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Samples grouped by stage; `stages[h]` holds every tuple observed at stage `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedSamples {
    pub stages: Vec<Vec<Sample>>,
}

impl StagedSamples {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Every `(h, s, a)` repeated so that next-state counts equal
    /// `multiplicity · P(s' | s, a)` exactly. Fails unless all probabilities are
    /// multiples of `1 / multiplicity`.
    pub fn exhaustive(mdp: &EpisodicMdp, multiplicity: usize) -> Result<Self> {
        let m = multiplicity as f64;
        let mut stages = Vec::with_capacity(mdp.horizon());
        for h in 0..mdp.horizon() {
            let mut stage = Vec::new();
            for s in 0..mdp.num_states() {
                for a in 0..mdp.num_actions() {
                    let reward = mdp.reward(h, s, a);
                    for &(next_state, p) in mdp.transition(h, s, a) {
                        let count = p * m;
                        if (count - count.round()).abs() > 1e-9 {
                            return Err(Error::Input(format!(
                                "P({next_state}|{s},{a}) = {p} is not a multiple of 1/{multiplicity}"
                            )));
                        }
                        for _ in 0..count.round() as usize {
                            stage.push(Sample {
                                state: s,
                                action: a,
                                reward,
                                next_state,
                            });
                        }
                    }
                }
            }
            stages.push(stage);
        }
        Ok(Self { stages })
    }
}

impl From<&OfflineDataset> for StagedSamples {
    fn from(d: &OfflineDataset) -> Self {
        d.staged()
    }
}
