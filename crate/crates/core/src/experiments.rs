//! Config-driven experiment runners behind the command-line tool.
//!
//! A config is one TOML document with the sections `env`, `features`,
//! `data`, `algo`, `eval` and `sweep`. Only `data.episodes`, `data.seed` and
//! `algo.rho` are required. Keys can be overridden with `section.key=value`
//! strings, whose values are parsed as TOML literals.
//!
//! Values written to CSV are in the environment's original reward units: for
//! the option environment, learned and evaluated returns are multiplied back
//! by the strike.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{fit, ActionOverride, AlgoConfig, Algorithm, RobustPolicy};
use crate::bandit::{BanditRow, MixtureBandit};
use crate::dataset::{collect, episode_rng, BehaviorPolicy, FixedAction, OfflineDataset, UniformBehavior};
use crate::envs::{
    build_option_env, exercise_q_values, perturb_option_env, random_tabular_mdp, EpisodicMdp, OptionEnvParams,
    EXERCISE, HOLD,
};
use crate::error::{Error, Result};
use crate::features::{build_anchor_features, build_onehot_features, FeatureMap};
use crate::oracle::{evaluate_policy_mc, nominal_dp, tabular_robust_vi, value_error, ErrorNorm, ValueTables};

const REQUIRED_KEYS: [&str; 3] = ["data.episodes", "data.seed", "algo.rho"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Option(OptionEnvParams),
    /// Random MDP whose probabilities are multiples of `1/denominator`.
    RandomTabular {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        #[serde(default = "default_denominator")]
        denominator: u32,
        #[serde(default)]
        seed: u64,
    },
}

fn default_denominator() -> u32 {
    4
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Option(OptionEnvParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeaturesConfig {
    Anchor { dim: usize },
    OneHot,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig::Anchor { dim: 31 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub episodes: usize,
    pub seed: u64,
    /// `hold`, `exercise`, `uniform`, or an action index.
    #[serde(default = "default_behavior")]
    pub behavior: String,
}

fn default_behavior() -> String {
    "hold".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Robust,
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub p0: Vec<f64>,
    pub episodes: usize,
    pub seed: u64,
    pub norm: ErrorNorm,
    /// Reference for value errors.
    pub oracle: OracleKind,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            p0: (0..9).map(|k| 0.3 + 0.05 * k as f64).collect(),
            episodes: 2000,
            seed: 2024,
            norm: ErrorNorm::Euclidean,
            oracle: OracleKind::Robust,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub algorithm: Algorithm,
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub bench_dim: usize,
    pub bench_episodes: usize,
    /// Each timing is the fastest of this many fits.
    pub bench_repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Drvi,
            dims: vec![11, 21, 31, 41, 51, 61],
            sizes: vec![250, 500, 1000, 2000],
            repetitions: 20,
            bench_dim: 61,
            bench_episodes: 1000,
            bench_repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    pub data: DataConfig,
    pub algo: AlgoConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// Parses a TOML document and applies `key=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            line: toml_line(text, &e),
            message: e.message().to_string(),
        })?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        for key in REQUIRED_KEYS {
            if lookup(&doc, key).is_none() {
                return Err(Error::Config(format!("missing required field `{key}`")));
            }
        }
        for (section, kind) in [("env", "option"), ("features", "anchor")] {
            if let Some(toml::Value::Table(t)) = doc.get_mut(section) {
                t.entry("kind").or_insert_with(|| kind.into());
            }
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.algo.validate()?;
        if self.data.episodes == 0 {
            return Err(Error::Config("data.episodes must be positive".into()));
        }
        self.behavior()?;
        match (&self.env, &self.features) {
            (EnvConfig::Option(p), FeaturesConfig::Anchor { dim }) => {
                p.validate()?;
                if *dim < 2 {
                    return Err(Error::Config(format!("features.dim must be >= 2, got {dim}")));
                }
            }
            (EnvConfig::Option(p), FeaturesConfig::OneHot) => p.validate()?,
            (EnvConfig::RandomTabular { .. }, FeaturesConfig::Anchor { .. }) => {
                return Err(Error::Config("anchor features need the option environment".into()));
            }
            (EnvConfig::RandomTabular { .. }, FeaturesConfig::OneHot) => {}
        }
        if self.eval.p0.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Config("every eval.p0 must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// SHA-256 of the resolved config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn behavior(&self) -> Result<Box<dyn BehaviorPolicy>> {
        Ok(match self.data.behavior.as_str() {
            "hold" => Box::new(FixedAction(HOLD)),
            "exercise" => Box::new(FixedAction(EXERCISE)),
            "uniform" => Box::new(UniformBehavior),
            other => {
                let a: usize = other.parse().map_err(|_| {
                    Error::Config(format!(
                        "data.behavior must be hold, exercise, uniform or an action index, got {other:?}"
                    ))
                })?;
                Box::new(FixedAction(a))
            }
        })
    }

    pub fn build_env(&self) -> Result<EpisodicMdp> {
        match &self.env {
            EnvConfig::Option(p) => build_option_env(p),
            &EnvConfig::RandomTabular {
                num_states,
                num_actions,
                horizon,
                denominator,
                seed,
            } => random_tabular_mdp(
                num_states,
                num_actions,
                horizon,
                denominator,
                &mut episode_rng(seed, u64::MAX),
            ),
        }
    }

    /// The same environment with a different up-move probability.
    pub fn perturbed_env(&self, p0: f64) -> Result<EpisodicMdp> {
        match &self.env {
            EnvConfig::Option(p) => perturb_option_env(p, p0),
            EnvConfig::RandomTabular { .. } => {
                Err(Error::Unsupported("p0 perturbations need the option environment".into()))
            }
        }
    }

    pub fn build_features(&self, env: &EpisodicMdp) -> Result<Arc<FeatureMap>> {
        self.features_with_dim(env, None)
    }

    /// Feature map with the anchor count replaced by `dim`.
    pub fn features_with_dim(&self, env: &EpisodicMdp, dim: Option<usize>) -> Result<Arc<FeatureMap>> {
        Ok(Arc::new(match (&self.env, &self.features) {
            (EnvConfig::Option(p), FeaturesConfig::Anchor { dim: d }) => build_anchor_features(dim.unwrap_or(*d), p)?,
            (_, FeaturesConfig::OneHot) => build_onehot_features(env)?,
            _ => return Err(Error::Config("anchor features need the option environment".into())),
        }))
    }

    /// Closed-form exercise values for the option environment.
    pub fn overrides(&self) -> Vec<ActionOverride> {
        match &self.env {
            EnvConfig::Option(p) => vec![ActionOverride {
                action: EXERCISE,
                values: exercise_q_values(p),
            }],
            EnvConfig::RandomTabular { .. } => Vec::new(),
        }
    }

    /// Factor from internal rewards back to the environment's units.
    pub fn value_scale(&self) -> f64 {
        match &self.env {
            EnvConfig::Option(p) => p.strike,
            EnvConfig::RandomTabular { .. } => 1.0,
        }
    }

    pub fn env_description(&self) -> serde_json::Value {
        serde_json::to_value(&self.env).expect("env config serializes")
    }

    fn terminal(&self) -> Option<usize> {
        match &self.env {
            EnvConfig::Option(p) => Some(p.exit_state()),
            EnvConfig::RandomTabular { .. } => None,
        }
    }
}

fn toml_line(text: &str, e: &toml::de::Error) -> usize {
    e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1))
}

fn lookup<'a>(doc: &'a toml::Table, dotted: &str) -> Option<&'a toml::Value> {
    let mut parts = dotted.split('.');
    let mut cur = doc.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    // A bare word that is not a TOML literal is taken as a string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?} passes through a non-table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Independent seed number `index` derived from `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    episode_rng(base ^ 0x5eed_5eed_5eed_5eed, index).next_u64()
}

pub fn run_collect(cfg: &ExperimentConfig) -> Result<OfflineDataset> {
    collect_with(cfg, cfg.data.episodes, cfg.data.seed)
}

fn collect_with(cfg: &ExperimentConfig, episodes: usize, seed: u64) -> Result<OfflineDataset> {
    let env = cfg.build_env()?;
    collect(&env, cfg.behavior()?.as_ref(), episodes, seed, cfg.env_description())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    pub algorithm: &'static str,
    pub d: usize,
    pub n: usize,
    pub seconds: f64,
}

pub fn run_train(
    cfg: &ExperimentConfig,
    dataset: &OfflineDataset,
    algorithm: Algorithm,
) -> Result<(RobustPolicy, TrainRecord)> {
    let env = cfg.build_env()?;
    if dataset.horizon() != env.horizon() {
        return Err(Error::Input(format!(
            "dataset horizon {} differs from the configured environment's {}",
            dataset.horizon(),
            env.horizon()
        )));
    }
    let features = cfg.build_features(&env)?;
    let staged = dataset.staged();
    let start = Instant::now();
    let policy = fit(algorithm, &staged, features.clone(), cfg.overrides(), &cfg.algo)?;
    let record = TrainRecord {
        algorithm: algorithm.name(),
        d: features.dim(),
        n: dataset.num_episodes(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((policy, record))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub p0: f64,
    pub mean_return: f64,
    pub std_error: f64,
    pub episodes: usize,
}

/// Monte Carlo return of `policy` in every perturbed environment of `eval.p0`.
pub fn run_evaluate(cfg: &ExperimentConfig, policy: &RobustPolicy) -> Result<Vec<EvalRow>> {
    let scale = cfg.value_scale();
    let mut rows: Vec<EvalRow> = cfg
        .eval
        .p0
        .par_iter()
        .map(|&p0| {
            let env = cfg.perturbed_env(p0)?;
            let est = evaluate_policy_mc(&env, policy, cfg.eval.episodes, cfg.eval.seed)?;
            Ok(EvalRow {
                p0,
                mean_return: est.mean * scale,
                std_error: est.std_error * scale,
                episodes: est.episodes,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.p0.total_cmp(&b.p0));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub state: usize,
    pub v_robust: f64,
    pub v_nominal: f64,
}

pub struct OracleReport {
    pub robust: ValueTables,
    pub nominal: ValueTables,
    pub robust_initial: f64,
    pub nominal_initial: f64,
    pub rows: Vec<OracleRow>,
}

/// Robust (at `algo.rho`) and nominal optimal values on the configured model.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<OracleReport> {
    let env = cfg.build_env()?;
    let robust = tabular_robust_vi(&env, &cfg.algo)?;
    let nominal = nominal_dp(&env)?;
    let scale = cfg.value_scale();
    let rows = (0..env.num_states())
        .filter(|s| !env.is_terminal(*s))
        .map(|s| OracleRow {
            state: s,
            v_robust: robust.v[0][s] * scale,
            v_nominal: nominal.v[0][s] * scale,
        })
        .collect();
    Ok(OracleReport {
        robust_initial: robust.initial_value(&env) * scale,
        nominal_initial: nominal.initial_value(&env) * scale,
        robust,
        nominal,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub d: usize,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub error: f64,
}

/// `‖V̂_0 − V*_0‖` for every `(d, N, repetition)` of the sweep.
///
/// Repetition `r` collects `max(sizes)` episodes with seed
/// `derive_seed(data.seed, r)`; smaller sizes use a prefix of that dataset.
pub fn run_error_sweep(cfg: &ExperimentConfig) -> Result<Vec<ErrorRow>> {
    let env = cfg.build_env()?;
    let reference = match cfg.eval.oracle {
        OracleKind::Robust => tabular_robust_vi(&env, &cfg.algo)?,
        OracleKind::Nominal => nominal_dp(&env)?,
    };
    let v_star = &reference.v[0];
    let sweep = &cfg.sweep;
    let max_n = *sweep
        .sizes
        .iter()
        .max()
        .ok_or_else(|| Error::Config("sweep.sizes is empty".into()))?;
    let dims: Vec<Option<usize>> = match cfg.features {
        FeaturesConfig::Anchor { .. } => sweep.dims.iter().map(|d| Some(*d)).collect(),
        FeaturesConfig::OneHot => vec![None],
    };
    let features: Vec<Arc<FeatureMap>> = dims
        .iter()
        .map(|d| cfg.features_with_dim(&env, *d))
        .collect::<Result<_>>()?;
    let scale = cfg.value_scale();
    let mut rows: Vec<ErrorRow> = (0..sweep.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cfg.data.seed, rep as u64);
            let full = collect_with(cfg, max_n, seed)?;
            let mut out = Vec::new();
            for &n in &sweep.sizes {
                let staged = full.truncated(n)?.staged();
                for f in &features {
                    let policy = fit(sweep.algorithm, &staged, f.clone(), cfg.overrides(), &cfg.algo)?;
                    let error = value_error(&policy.stage_values(0), v_star, cfg.terminal(), cfg.eval.norm)?;
                    out.push(ErrorRow {
                        d: f.dim(),
                        n,
                        rep,
                        seed,
                        error: error * scale,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by_key(|r| (r.d, r.n, r.rep));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub d: usize,
    pub n: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub repetitions: usize,
}

/// Mean and standard error of the sweep errors for each `(d, N)`.
pub fn summarize_errors(rows: &[ErrorRow]) -> Vec<ErrorSummary> {
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.d, r.n)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(d, n)| {
            let e: Vec<f64> = rows.iter().filter(|r| r.d == d && r.n == n).map(|r| r.error).collect();
            let k = e.len() as f64;
            let mean = e.iter().sum::<f64>() / k;
            let var = if e.len() > 1 {
                e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            ErrorSummary {
                d,
                n,
                mean_error: mean,
                std_error: (var / k).sqrt(),
                repetitions: e.len(),
            }
        })
        .collect()
}

pub fn run_bandit(rho: f64, resolution: usize) -> Result<Vec<BanditRow>> {
    MixtureBandit::new(rho)?.curves(resolution)
}

/// Header hash for bandit tables, which have no config file.
pub fn bandit_hash(rho: f64, resolution: usize) -> String {
    let canonical = serde_json::json!({ "bandit": { "rho": rho, "resolution": resolution } }).to_string();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub series: &'static str,
    pub algorithm: &'static str,
    pub d: usize,
    pub n: usize,
    pub seconds: f64,
}

/// Fit-time scaling: DRVI-L over `sweep.dims` at `sweep.bench_episodes`
/// episodes, then RPVI and DRVI-L over `sweep.sizes` at `sweep.bench_dim`.
/// Runs sequentially so timings do not compete for cores.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    if !matches!(cfg.features, FeaturesConfig::Anchor { .. }) {
        return Err(Error::Config("bench sweeps need anchor features".into()));
    }
    let env = cfg.build_env()?;
    let sweep = &cfg.sweep;
    let max_n = sweep.sizes.iter().copied().chain([sweep.bench_episodes]).max().unwrap_or(1);
    let full = collect_with(cfg, max_n, cfg.data.seed)?;
    let overrides = cfg.overrides();
    let time = |algorithm: Algorithm, f: &Arc<FeatureMap>, n: usize| -> Result<f64> {
        let staged = full.truncated(n)?.staged();
        let mut best = f64::INFINITY;
        for _ in 0..sweep.bench_repeats.max(1) {
            let start = Instant::now();
            std::hint::black_box(fit(algorithm, &staged, f.clone(), overrides.clone(), &cfg.algo)?);
            best = best.min(start.elapsed().as_secs_f64());
        }
        Ok(best)
    };
    let mut rows = Vec::new();
    for &d in &sweep.dims {
        let f = cfg.features_with_dim(&env, Some(d))?;
        rows.push(BenchRow {
            series: "dim",
            algorithm: Algorithm::Drvi.name(),
            d,
            n: sweep.bench_episodes,
            seconds: time(Algorithm::Drvi, &f, sweep.bench_episodes)?,
        });
    }
    let f = cfg.features_with_dim(&env, Some(sweep.bench_dim))?;
    for &n in &sweep.sizes {
        for algorithm in [Algorithm::Rpvi, Algorithm::Drvi] {
            rows.push(BenchRow {
                series: "size",
                algorithm: algorithm.name(),
                d: sweep.bench_dim,
                n,
                seconds: time(algorithm, &f, n)?,
            });
        }
    }
    Ok(rows)
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Writes `rows` as CSV after a `# config_hash=… seed=…` comment line.
pub fn write_csv<W: Write, T: Serialize>(out: W, config_hash: &str, seed: u64, rows: &[T]) -> Result<()> {
    let mut out = out;
    writeln!(out, "# config_hash={config_hash} seed={seed}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Input(format!("csv: {other:?}")),
    }
}
