//! American put option on a discretized binomial price process.
//!
//! States `0..num_prices` are the price ticks `price_lo + k·tick`; the last
//! state is the absorbing exit reached after exercising. Rewards are the put
//! payoff divided by the strike so that every reward lies in `[0, 1]`.

use serde::{Deserialize, Serialize};

use super::{EpisodicMdp, StageModel};
use crate::error::{Error, Result};

pub const EXERCISE: usize = 0;
pub const HOLD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptionEnvParams {
    pub horizon: usize,
    pub c_up: f64,
    pub c_down: f64,
    pub p_up: f64,
    pub strike: f64,
    pub init_halfwidth: f64,
    pub price_lo: f64,
    pub price_hi: f64,
    pub tick: f64,
}

impl Default for OptionEnvParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            c_up: 1.02,
            c_down: 0.98,
            p_up: 0.5,
            strike: 100.0,
            init_halfwidth: 5.0,
            price_lo: 80.0,
            price_hi: 140.0,
            tick: 0.1,
        }
    }
}

impl OptionEnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("option horizon must be positive".into()));
        }
        if !(self.p_up > 0.0 && self.p_up < 1.0) {
            return Err(Error::Config(format!("p_up must lie in (0, 1), got {}", self.p_up)));
        }
        if !(self.price_lo < self.strike && self.strike < self.price_hi) {
            return Err(Error::Config(format!(
                "need price_lo < strike < price_hi, got {} / {} / {}",
                self.price_lo, self.strike, self.price_hi
            )));
        }
        if !(self.tick > 0.0) || !(self.c_up > 0.0) || !(self.c_down > 0.0) || !(self.init_halfwidth >= 0.0) {
            return Err(Error::Config("tick, c_up, c_down must be > 0 and init_halfwidth >= 0".into()));
        }
        let steps = (self.price_hi - self.price_lo) / self.tick;
        if steps < 1.0 || (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "price range [{}, {}] is not a whole number of ticks of {}",
                self.price_lo, self.price_hi, self.tick
            )));
        }
        Ok(())
    }

    pub fn num_prices(&self) -> usize {
        ((self.price_hi - self.price_lo) / self.tick).round() as usize + 1
    }

    /// Price states plus the exit state.
    pub fn num_states(&self) -> usize {
        self.num_prices() + 1
    }

    pub fn exit_state(&self) -> usize {
        self.num_prices()
    }

    pub fn price(&self, state: usize) -> f64 {
        self.price_lo + self.tick * state as f64
    }

    /// Nearest tick, clamped to the grid.
    pub fn price_index(&self, price: f64) -> usize {
        let k = ((price - self.price_lo) / self.tick).round();
        k.clamp(0.0, (self.num_prices() - 1) as f64) as usize
    }

    /// Rescaled exercise payoff `max(0, κ − s)/κ`; zero at the exit state.
    pub fn payoff(&self, state: usize) -> f64 {
        if state >= self.num_prices() {
            0.0
        } else {
            (self.strike - self.price(state)).max(0.0) / self.strike
        }
    }

    /// Indices of the ticks inside `[κ − ε, κ + ε]`.
    pub fn initial_states(&self) -> std::ops::RangeInclusive<usize> {
        let eps = 1e-9 * self.tick;
        let lo = ((self.strike - self.init_halfwidth - self.price_lo) / self.tick - eps).ceil().max(0.0) as usize;
        let hi = ((self.strike + self.init_halfwidth - self.price_lo) / self.tick + eps)
            .floor()
            .min((self.num_prices() - 1) as f64) as usize;
        lo..=hi
    }
}

pub fn build_option_env(params: &OptionEnvParams) -> Result<EpisodicMdp> {
    params.validate()?;
    let n = params.num_prices();
    let exit = params.exit_state();
    let num_states = n + 1;
    let mut transitions = Vec::with_capacity(num_states * 2);
    let mut rewards = Vec::with_capacity(num_states * 2);
    for s in 0..num_states {
        if s == exit {
            transitions.push(vec![(exit, 1.0)]);
            transitions.push(vec![(exit, 1.0)]);
            rewards.extend([0.0, 0.0]);
            continue;
        }
        // EXERCISE
        transitions.push(vec![(exit, 1.0)]);
        rewards.push(params.payoff(s));
        // HOLD
        let price = params.price(s);
        let up = params.price_index(params.c_up * price);
        let down = params.price_index(params.c_down * price);
        if up == down {
            transitions.push(vec![(up, 1.0)]);
        } else {
            transitions.push(vec![(up, params.p_up), (down, 1.0 - params.p_up)]);
        }
        rewards.push(0.0);
    }
    let init = params.initial_states();
    let count = init.clone().count();
    if count == 0 {
        return Err(Error::Config("initial price interval contains no grid tick".into()));
    }
    let mut initial = vec![0.0; num_states];
    for s in init {
        initial[s] = 1.0 / count as f64;
    }
    EpisodicMdp::new(
        num_states,
        2,
        params.horizon,
        vec![StageModel { transitions, rewards }],
        initial,
        Some(exit),
    )
}

/// Same market with the probability of an up-move replaced.
pub fn perturb_option_env(params: &OptionEnvParams, new_p_up: f64) -> Result<EpisodicMdp> {
    build_option_env(&OptionEnvParams {
        p_up: new_p_up,
        ..*params
    })
}

/// Closed-form `Q(s, exercise)` for every state, stage-independent.
pub fn exercise_q_values(params: &OptionEnvParams) -> Vec<f64> {
    (0..params.num_states()).map(|s| params.payoff(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn env() -> (OptionEnvParams, EpisodicMdp) {
        let p = OptionEnvParams::default();
        (p, build_option_env(&p).unwrap())
    }

    #[test]
    fn state_space_has_602_states() {
        let (p, mdp) = env();
        assert_eq!(p.num_prices(), 601);
        assert_eq!(mdp.num_states(), 602);
        assert_eq!(mdp.terminal_state(), Some(601));
    }

    #[test]
    fn exercise_rewards_and_exit() {
        let (p, mdp) = env();
        let at_strike = p.price_index(100.0);
        assert_eq!(mdp.reward(0, at_strike, EXERCISE), 0.0);
        assert_eq!(mdp.transition(0, at_strike, EXERCISE), &[(601, 1.0)]);
        let s90 = p.price_index(90.0);
        assert!((mdp.reward(0, s90, EXERCISE) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hold_moves_to_rounded_neighbours() {
        let (p, mdp) = env();
        let s = p.price_index(100.0);
        let row = mdp.transition(3, s, HOLD);
        assert_eq!(row, &[(p.price_index(102.0), 0.5), (p.price_index(98.0), 0.5)]);
        assert!((p.price(row[0].0) - 102.0).abs() < 1e-9);
        assert!((p.price(row[1].0) - 98.0).abs() < 1e-9);
        assert_eq!(mdp.reward(3, s, HOLD), 0.0);
    }

    #[test]
    fn exit_is_absorbing() {
        let (_, mdp) = env();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for a in [EXERCISE, HOLD] {
            assert_eq!(mdp.step(0, 601, a, &mut rng).unwrap(), (0.0, 601));
        }
    }

    #[test]
    fn hold_rows_have_two_atoms_except_at_clamps() {
        let (p, mdp) = env();
        for s in 0..p.num_prices() {
            let row = mdp.transition(0, s, HOLD);
            let price = p.price(s);
            let clamped = p.c_up * price > p.price_hi || p.c_down * price < p.price_lo;
            if !clamped {
                assert_eq!(row.len(), 2, "state {s}");
            }
            assert!(row.iter().all(|(t, _)| *t < p.num_prices()));
        }
        // Top of the grid: the up-move is clamped onto the boundary.
        let top = mdp.transition(0, p.num_prices() - 1, HOLD);
        assert_eq!(top[0].0, p.num_prices() - 1);
    }

    #[test]
    fn initial_distribution_is_uniform_on_strike_window() {
        let (p, mdp) = env();
        let init = p.initial_states();
        assert_eq!((*init.start(), *init.end()), (150, 250));
        let mass: f64 = mdp.initial_dist()[150..=250].iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!((mdp.initial_dist()[200] - 1.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn perturbation_replaces_up_probability() {
        let (p, mdp) = env();
        assert_eq!(perturb_option_env(&p, 0.5).unwrap(), mdp);
        let hot = perturb_option_env(&p, 0.7).unwrap();
        for s in 0..p.num_prices() {
            let row = hot.transition(0, s, HOLD);
            if row.len() == 2 {
                assert_eq!(row[0].1, 0.7);
            }
            assert_eq!(hot.transition(0, s, EXERCISE), mdp.transition(0, s, EXERCISE));
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let p = OptionEnvParams::default();
        assert_eq!(build_option_env(&p).unwrap(), build_option_env(&p).unwrap());
    }

    #[test]
    fn degenerate_parameters_are_config_errors() {
        let bad = [
            OptionEnvParams { p_up: 1.0, ..Default::default() },
            OptionEnvParams { strike: 150.0, ..Default::default() },
            OptionEnvParams { tick: 0.7, ..Default::default() },
            OptionEnvParams { tick: 100.0, price_hi: 120.0, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(build_option_env(&p), Err(Error::Config(_))), "{p:?}");
        }
    }
}
