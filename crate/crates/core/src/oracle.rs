//! Exact tabular references: robust and nominal dynamic programming, policy
//! evaluation, and the value-error metric.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgoConfig, Policy};
use crate::dataset::episode_rng;
use crate::envs::EpisodicMdp;
use crate::error::{Error, Result};
use crate::kl_dual::robust_expectation;

/// Per-stage `Q[h][s·A + a]` and `V[h][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub num_actions: usize,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl ValueTables {
    pub fn q_value(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[h][s * self.num_actions + a]
    }

    /// `E_{s∼μ} V_0(s)`.
    pub fn initial_value(&self, mdp: &EpisodicMdp) -> f64 {
        expected_initial(mdp, &self.v[0])
    }
}

fn expected_initial(mdp: &EpisodicMdp, v: &[f64]) -> f64 {
    mdp.initial_dist().iter().zip(v).map(|(p, v)| p * v).sum()
}

/// Backward recursion with a per-row worst-case expectation. The last stage
/// has no successor, so its next-stage term is exactly zero.
fn backward<F>(mdp: &EpisodicMdp, next_expectation: F) -> Result<ValueTables>
where
    F: Fn(usize, &[(usize, f64)], &[f64]) -> Result<f64> + Sync,
{
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut q = vec![Vec::new(); horizon];
    let mut v = vec![Vec::new(); horizon];
    let mut next_v = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let qh: Vec<f64> = (0..ns * na)
            .into_par_iter()
            .map(|k| {
                let (s, a) = (k / na, k % na);
                let next = if h + 1 == horizon {
                    0.0
                } else {
                    next_expectation(h, mdp.transition(h, s, a), &next_v)?
                };
                Ok(mdp.reward(h, s, a) + next)
            })
            .collect::<Result<_>>()?;
        let vh: Vec<f64> = (0..ns)
            .map(|s| qh[s * na..(s + 1) * na].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        next_v = vh.clone();
        q[h] = qh;
        v[h] = vh;
    }
    Ok(ValueTables { num_actions: na, q, v })
}

fn row_arrays(row: &[(usize, f64)], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    row.iter().map(|&(t, p)| (v[t], p)).unzip()
}

/// Robust optimal values under `(s, a)`-rectangular KL balls around `mdp`'s
/// rows. Each stage uses the same β interval as the learners
/// (`cfg.dual_config(H, h)`), so one-hot plug-in fits are directly comparable.
pub fn tabular_robust_vi(mdp: &EpisodicMdp, cfg: &AlgoConfig) -> Result<ValueTables> {
    cfg.validate()?;
    let horizon = mdp.horizon();
    backward(mdp, |h, row, v| {
        let (values, probs) = row_arrays(row, v);
        Ok(robust_expectation(&values, &probs, &cfg.dual_config(horizon, h))?.value)
    })
}

/// Exact non-robust optimal values.
pub fn nominal_dp(mdp: &EpisodicMdp) -> Result<ValueTables> {
    backward(mdp, |_, row, v| Ok(row.iter().map(|&(t, p)| p * v[t]).sum()))
}

/// `V^π_h(s)` for every stage under the nominal model.
pub fn policy_values(mdp: &EpisodicMdp, policy: &dyn Policy) -> Result<Vec<Vec<f64>>> {
    evaluate_backward(mdp, policy, |_, row, v| Ok(row.iter().map(|&(t, p)| p * v[t]).sum()))
}

/// `V^{π,rob}_h(s)` of a fixed policy under the same KL balls as
/// [`tabular_robust_vi`].
pub fn robust_policy_values(mdp: &EpisodicMdp, policy: &dyn Policy, cfg: &AlgoConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let horizon = mdp.horizon();
    evaluate_backward(mdp, policy, |h, row, v| {
        let (values, probs) = row_arrays(row, v);
        Ok(robust_expectation(&values, &probs, &cfg.dual_config(horizon, h))?.value)
    })
}

fn evaluate_backward<F>(mdp: &EpisodicMdp, policy: &dyn Policy, next_expectation: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, &[(usize, f64)], &[f64]) -> Result<f64> + Sync,
{
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut out = vec![Vec::new(); horizon];
    let mut next_v = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let vh: Vec<f64> = (0..ns)
            .into_par_iter()
            .map(|s| {
                let a = policy.action(h, s);
                if a >= na {
                    return Err(Error::Input(format!("policy chose action {a} at stage {h}, state {s}")));
                }
                let next = if h + 1 == horizon {
                    0.0
                } else {
                    next_expectation(h, mdp.transition(h, s, a), &next_v)?
                };
                Ok(mdp.reward(h, s, a) + next)
            })
            .collect::<Result<_>>()?;
        next_v = vh.clone();
        out[h] = vh;
    }
    Ok(out)
}

/// Exact expected return `E_{s∼μ} V^π_0(s)` under `mdp`.
pub fn evaluate_policy_exact(mdp: &EpisodicMdp, policy: &dyn Policy) -> Result<f64> {
    Ok(expected_initial(mdp, &policy_values(mdp, policy)?[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
}

/// Mean return and its standard error over `episodes` seeded rollouts;
/// episode `k` draws from stream `k` of `seed`.
pub fn evaluate_policy_mc(env: &EpisodicMdp, policy: &dyn Policy, episodes: usize, seed: u64) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::Input("need at least one evaluation episode".into()));
    }
    let returns: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut rng = episode_rng(seed, k as u64);
            let mut s = env.sample_initial(&mut rng);
            let mut total = 0.0;
            for h in 0..env.horizon() {
                let (r, next) = env.step(h, s, policy.action(h, s), &mut rng)?;
                total += r;
                s = next;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std_error = if episodes > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error,
        episodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNorm {
    #[default]
    Euclidean,
    Sup,
}

/// `‖v_hat − v_star‖` over every state except `skip` (the absorbing state).
pub fn value_error(v_hat: &[f64], v_star: &[f64], skip: Option<usize>, norm: ErrorNorm) -> Result<f64> {
    if v_hat.len() != v_star.len() {
        return Err(Error::Input(format!(
            "value vectors have lengths {} and {}",
            v_hat.len(),
            v_star.len()
        )));
    }
    let diffs = v_hat
        .iter()
        .zip(v_star)
        .enumerate()
        .filter(|(s, _)| Some(*s) != skip)
        .map(|(_, (a, b))| (a - b).abs());
    Ok(match norm {
        ErrorNorm::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        ErrorNorm::Sup => diffs.fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_option_env, deterministic_mdp, random_tabular_mdp, OptionEnvParams, EXERCISE};
    use crate::kl_dual::primal_oracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mdp(seed: u64, s: usize, a: usize, h: usize) -> EpisodicMdp {
        random_tabular_mdp(s, a, h, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn vanishing_radius_recovers_nominal_dp() {
        let mdp = random_mdp(1, 3, 2, 3);
        let cfg = AlgoConfig {
            beta_max: Some(1e9),
            ..AlgoConfig::with_rho(1e-8)
        };
        let robust = tabular_robust_vi(&mdp, &cfg).unwrap();
        let nominal = nominal_dp(&mdp).unwrap();
        for (r, n) in robust.q.iter().flatten().zip(nominal.q.iter().flatten()) {
            assert!((r - n).abs() < 1e-4, "{r} vs {n}");
        }
    }

    #[test]
    fn deterministic_rows_are_not_perturbed() {
        let next = vec![vec![1, 0, 0, 1]; 2];
        let rewards = vec![vec![0.3, 0.1, 0.7, 0.2]; 2];
        let mdp = deterministic_mdp(2, 2, next, rewards).unwrap();
        // The dual's value at β_min is v − β_min·ρ, so β_min is taken tiny.
        let cfg = AlgoConfig {
            beta_min: 1e-10,
            ..AlgoConfig::with_rho(0.5)
        };
        let robust = tabular_robust_vi(&mdp, &cfg).unwrap();
        let nominal = nominal_dp(&mdp).unwrap();
        for (r, n) in robust.q.iter().flatten().zip(nominal.q.iter().flatten()) {
            assert!((r - n).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_primal_oracle_recursion() {
        let mdp = random_mdp(2, 2, 2, 2);
        let rho = 0.1;
        let cfg = AlgoConfig {
            beta_min: 1e-7,
            ..AlgoConfig::with_rho(rho)
        };
        let robust = tabular_robust_vi(&mdp, &cfg).unwrap();
        let mut v = vec![0.0; 2];
        for h in (0..2).rev() {
            let mut q = [0.0; 4];
            for s in 0..2 {
                for a in 0..2 {
                    let (values, probs) = row_arrays(mdp.transition(h, s, a), &v);
                    q[s * 2 + a] = mdp.reward(h, s, a) + primal_oracle(&values, &probs, rho).unwrap();
                    assert!((robust.q_value(h, s, a) - q[s * 2 + a]).abs() < 1e-4);
                }
            }
            v = (0..2).map(|s| q[2 * s].max(q[2 * s + 1])).collect();
        }
    }

    #[test]
    fn robust_values_shrink_with_radius_and_stay_below_nominal() {
        let mdp = random_mdp(3, 4, 2, 4);
        let nominal = nominal_dp(&mdp).unwrap();
        let mut prev = nominal.v.clone();
        for rho in [0.01, 0.1, 1.0] {
            let r = tabular_robust_vi(&mdp, &AlgoConfig::with_rho(rho)).unwrap();
            for (a, b) in r.v.iter().flatten().zip(prev.iter().flatten()) {
                assert!(*a <= b + 1e-12);
            }
            prev = r.v;
        }
    }

    #[test]
    fn fixed_policy_robust_value_is_below_nominal() {
        let mdp = random_mdp(4, 3, 2, 3);
        let policy = |h: usize, s: usize| (h + s) % 2;
        let nominal = policy_values(&mdp, &policy).unwrap();
        let robust = robust_policy_values(&mdp, &policy, &AlgoConfig::with_rho(0.2)).unwrap();
        for (r, n) in robust.iter().flatten().zip(nominal.iter().flatten()) {
            assert!(*r <= n + 1e-12);
        }
    }

    #[test]
    fn immediate_exercise_value_is_mean_payoff() {
        let p = OptionEnvParams::default();
        let env = build_option_env(&p).unwrap();
        let exact = evaluate_policy_exact(&env, &|_: usize, _: usize| EXERCISE).unwrap();
        let init: Vec<usize> = p.initial_states().collect();
        let closed: f64 = init.iter().map(|&s| (100.0 - p.price(s)).max(0.0) / 100.0).sum::<f64>() / init.len() as f64;
        assert!((exact - closed).abs() < 1e-12);
    }

    #[test]
    fn deterministic_path_return() {
        let next = vec![vec![1, 1, 0, 0]; 3];
        let rewards = vec![vec![0.5, 0.0, 0.25, 0.0]; 3];
        let mdp = deterministic_mdp(2, 2, next, rewards).unwrap();
        let always0 = |_: usize, _: usize| 0;
        // 0 → 1 → 0 → 1, collecting 0.5 + 0.25 + 0.5.
        assert!((evaluate_policy_exact(&mdp, &always0).unwrap() - 1.25).abs() < 1e-12);
        let mc = evaluate_policy_mc(&mdp, &always0, 50, 3).unwrap();
        assert_eq!(mc.mean, 1.25);
        assert_eq!(mc.std_error, 0.0);
        let one = evaluate_policy_mc(&mdp, &always0, 1, 3).unwrap();
        assert_eq!((one.episodes, one.std_error), (1, 0.0));
    }

    #[test]
    fn monte_carlo_agrees_with_exact_evaluation() {
        let mdp = random_mdp(5, 3, 2, 4);
        let policy = |h: usize, s: usize| (h * 7 + s) % 2;
        let exact = evaluate_policy_exact(&mdp, &policy).unwrap();
        let mc = evaluate_policy_mc(&mdp, &policy, 100_000, 11).unwrap();
        assert!((mc.mean - exact).abs() <= 3.0 * mc.std_error, "{} vs {exact} ± {}", mc.mean, mc.std_error);
        assert_eq!(mc, evaluate_policy_mc(&mdp, &policy, 100_000, 11).unwrap());
    }

    #[test]
    fn value_error_examples() {
        assert_eq!(value_error(&[1.0, 2.0], &[1.0, 2.0], None, ErrorNorm::Euclidean).unwrap(), 0.0);
        assert_eq!(value_error(&[3.0, 4.0], &[0.0, 0.0], None, ErrorNorm::Euclidean).unwrap(), 5.0);
        assert_eq!(value_error(&[3.0, 4.0, 9.0], &[0.0; 3], Some(2), ErrorNorm::Sup).unwrap(), 4.0);
        assert!(value_error(&[1.0], &[1.0, 2.0], None, ErrorNorm::Sup).is_err());
    }
}
