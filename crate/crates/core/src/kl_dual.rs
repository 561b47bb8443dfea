//! KL-constrained worst-case expectations through their one-dimensional dual.
//!
//! For a payoff `X ~ P` the worst expectation over the KL ball of radius `ρ`
//! equals `sup_{β ≥ 0} σ(Z(β), β)` with `σ(Z, β) = −β log Z − βρ` and
//! `Z(β) = E_P[exp(−X/β)]`. The shifted form `σ̃(Z−1, β) = −β log(1 + (Z−1)) − βρ`
//! is the same function of `Z`, but it takes an estimate of `Z − 1` so that a
//! regression shrunk toward zero stays inside the domain of the logarithm.
//!
//! The supremum is searched over a bounded interval `[β_min, β_max]`: a
//! log-spaced grid first, then golden-section refinement around the best grid
//! point, in `log β`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 64;
pub const DEFAULT_REFINE_TOL: f64 = 1e-6;
pub const DEFAULT_BETA_MIN: f64 = 0.01;

/// `−β log Z − βρ`.
pub fn sigma(z: f64, beta: f64, rho: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("sigma requires Z > 0, got {z:e}")));
    }
    Ok(-beta * z.ln() - beta * rho)
}

/// `−β log(Zm1 + 1) − βρ`, where `Zm1` estimates `Z − 1`.
pub fn sigma_shifted(zm1: f64, beta: f64, rho: f64) -> Result<f64> {
    if !(zm1 > -1.0) {
        return Err(Error::Domain(format!("shifted sigma requires Z - 1 > -1, got {zm1:e}")));
    }
    Ok(-beta * zm1.ln_1p() - beta * rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub rho: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub grid_size: usize,
    pub refine_tol: f64,
}

impl DualConfig {
    pub fn new(rho: f64, beta_min: f64, beta_max: f64) -> Self {
        Self {
            rho,
            beta_min,
            beta_max,
            grid_size: DEFAULT_GRID_SIZE,
            refine_tol: DEFAULT_REFINE_TOL,
        }
    }

    /// Interval `[β_min, (remaining horizon)/ρ]`; the upper end is raised to
    /// `β_min` when the bound falls below it and falls back to `fallback_max`
    /// when `ρ = 0`.
    pub fn for_value_range(rho: f64, beta_min: f64, value_range: f64, fallback_max: f64) -> Self {
        let upper = if rho > 0.0 { value_range / rho } else { fallback_max };
        Self::new(rho, beta_min, upper.max(beta_min))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.beta_min > 0.0) || !(self.beta_min <= self.beta_max) || !self.beta_max.is_finite() {
            return Err(Error::Config(format!(
                "need 0 < beta_min <= beta_max < inf, got [{}, {}]",
                self.beta_min, self.beta_max
            )));
        }
        if self.grid_size < 2 {
            return Err(Error::Config(format!("grid_size must be >= 2, got {}", self.grid_size)));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::Config(format!("refine_tol must be > 0, got {}", self.refine_tol)));
        }
        Ok(())
    }

    /// Log-spaced β grid including both endpoints.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_size;
        let (lo, hi) = (self.beta_min.ln(), self.beta_max.ln());
        (0..n)
            .map(|k| {
                if k == 0 {
                    self.beta_min
                } else if k == n - 1 {
                    self.beta_max
                } else {
                    (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualResult {
    pub value: f64,
    pub beta_star: f64,
    pub at_boundary: bool,
}

/// Maximizes `σ(eval_z(β), β)` (or `σ̃` when `shifted`) over `[β_min, β_max]`.
///
/// Points where the objective is undefined (`Z ≤ 0`, or `Z − 1 ≤ −1` when
/// shifted, or a non-finite value) are skipped. With `ρ = 0` the objective is
/// increasing in β and the value at `β_max` is returned, flagged as a boundary
/// solution.
pub fn maximize_dual<F>(eval_z: F, cfg: &DualConfig, shifted: bool) -> Result<DualResult>
where
    F: Fn(f64) -> f64,
{
    let rho = cfg.rho;
    let objective = |beta: f64| {
        let z = eval_z(beta);
        let v = if shifted {
            sigma_shifted(z, beta, rho)
        } else {
            sigma(z, beta, rho)
        };
        v.ok().filter(|v| v.is_finite())
    };
    maximize_objective(objective, cfg)
}

/// Grid search plus golden-section refinement for an arbitrary objective of β.
pub fn maximize_objective<F>(objective: F, cfg: &DualConfig) -> Result<DualResult>
where
    F: Fn(f64) -> Option<f64>,
{
    cfg.validate()?;
    if cfg.rho == 0.0 {
        let value = objective(cfg.beta_max)
            .ok_or_else(|| Error::Numeric("dual objective undefined at beta_max".into()))?;
        return Ok(DualResult {
            value,
            beta_star: cfg.beta_max,
            at_boundary: true,
        });
    }
    let grid = cfg.grid();
    let values: Vec<Option<f64>> = grid.iter().map(|&b| objective(b)).collect();
    refine_from_grid(&grid, &values, objective, cfg)
}

/// Refines the best of precomputed grid values.
///
/// `grid` must be `cfg.grid()`; `values[k]` is the objective at `grid[k]`
/// (`None` where undefined). Used directly when many objectives share the same
/// expensive per-β computation.
pub fn refine_from_grid<F>(
    grid: &[f64],
    values: &[Option<f64>],
    objective: F,
    cfg: &DualConfig,
) -> Result<DualResult>
where
    F: Fn(f64) -> Option<f64>,
{
    debug_assert_eq!(grid.len(), values.len());
    let n = grid.len();
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
    }
    let (k, grid_value) =
        best.ok_or_else(|| Error::Numeric("dual objective undefined at every grid point".into()))?;

    let mut beta_star = grid[k];
    let mut value = grid_value;
    if grid[0] < grid[n - 1] {
        // Refinement stays between grid points where the objective is defined.
        let lo_k = if k > 0 && values[k - 1].is_some() { k - 1 } else { k };
        let hi_k = if k + 1 < n && values[k + 1].is_some() { k + 1 } else { k };
        let lo = grid[lo_k].ln();
        let hi = grid[hi_k].ln();
        let f = |x: f64| objective(x.exp()).unwrap_or(f64::NEG_INFINITY);
        let (x, fx) = golden_section_max(f, lo, hi, cfg.refine_tol);
        if fx > value {
            value = fx;
            beta_star = x.exp().clamp(cfg.beta_min, cfg.beta_max);
        }
    }
    let at_boundary = n <= 2 || beta_star <= grid[1] || beta_star >= grid[n - 2];
    Ok(DualResult {
        value,
        beta_star,
        at_boundary,
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a maximum on `[lo, hi]`, stopping when the
/// bracket is narrower than `tol`. Returns the best probe seen.
fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

/// Worst-case expectation of a discrete distribution, using a shifted
/// log-sum-exp so that `exp(−v/β)` never underflows for small β.
pub fn robust_expectation(values: &[f64], probs: &[f64], cfg: &DualConfig) -> Result<DualResult> {
    if values.len() != probs.len() || values.is_empty() {
        return Err(Error::Input(format!(
            "values ({}) and probs ({}) must have equal non-zero length",
            values.len(),
            probs.len()
        )));
    }
    let support: Vec<(f64, f64)> = values
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&v, &p)| (v, p))
        .collect();
    let min = support.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let total: f64 = support.iter().map(|(_, p)| p).sum();
    let rho = cfg.rho;
    let objective = |beta: f64| {
        let s: f64 = support.iter().map(|(v, p)| p / total * (-(v - min) / beta).exp()).sum();
        let out = min - beta * s.ln() - beta * rho;
        out.is_finite().then_some(out)
    };
    maximize_objective(objective, cfg)
}

/// Brute-force primal value `min_q Σ qᵢ vᵢ` subject to `KL(q‖p) ≤ ρ`.
///
/// Supports up to four atoms. The last two coordinates are solved exactly on
/// their line (the feasible set is an interval found by bisection and a linear
/// objective is minimized at one of its ends); every earlier coordinate is
/// enumerated on a dense grid.
pub fn primal_oracle(values: &[f64], probs: &[f64], rho: f64) -> Result<f64> {
    let n = values.len();
    if n != probs.len() || n == 0 {
        return Err(Error::Input("values and probs must have equal non-zero length".into()));
    }
    if n > 4 {
        return Err(Error::Unsupported(format!("primal oracle supports at most 4 atoms, got {n}")));
    }
    if probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Input("primal oracle requires strictly positive probabilities".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::Input(format!("rho must be >= 0, got {rho}")));
    }
    let total: f64 = probs.iter().sum();
    let p: Vec<f64> = probs.iter().map(|x| x / total).collect();
    let nominal: f64 = p.iter().zip(values).map(|(a, b)| a * b).sum();
    if rho == 0.0 || n == 1 {
        return Ok(nominal);
    }
    let outer = match n {
        2 => 0,
        3 => 20_000,
        _ => 700,
    };
    let best = block_min(values, &p, 1.0, rho, outer).unwrap_or(nominal);
    Ok(best.min(nominal))
}

fn kl_term(q: f64, p: f64) -> f64 {
    if q <= 0.0 {
        0.0
    } else {
        q * (q / p).ln()
    }
}

/// Minimizes `Σ qᵢvᵢ` over `q ≥ 0`, `Σ qᵢ = mass`, `Σ qᵢ log(qᵢ/pᵢ) ≤ budget`.
fn block_min(values: &[f64], p: &[f64], mass: f64, budget: f64, outer: usize) -> Option<f64> {
    if mass <= 0.0 {
        return (budget >= -1e-15).then_some(0.0);
    }
    match values.len() {
        1 => (kl_term(mass, p[0]) <= budget).then(|| mass * values[0]),
        2 => line_min(values, p, mass, budget),
        _ => {
            let p_block: f64 = p.iter().sum();
            let mut best: Option<f64> = None;
            let mut consider = |q1: f64| {
                // Partial KL sums can be negative, so a negative remaining budget is not infeasible.
                let rest_budget = budget - kl_term(q1, p[0]);
                if let Some(rest) = block_min(&values[1..], &p[1..], mass - q1, rest_budget, outer) {
                    let v = q1 * values[0] + rest;
                    if best.is_none_or(|b| v < b) {
                        best = Some(v);
                    }
                }
            };
            // Conditional-nominal point keeps the search non-empty.
            consider(mass * p[0] / p_block);
            for k in 0..=outer {
                consider(mass * k as f64 / outer as f64);
            }
            best
        }
    }
}

fn line_min(values: &[f64], p: &[f64], mass: f64, budget: f64) -> Option<f64> {
    let f = |q: f64| kl_term(q, p[0]) + kl_term(mass - q, p[1]);
    let q_star = mass * p[0] / (p[0] + p[1]);
    if f(q_star) > budget {
        return None;
    }
    let objective = |q: f64| q * values[0] + (mass - q) * values[1];
    // f is decreasing on [0, q*] and increasing on [q*, mass].
    let lower = if f(0.0) <= budget {
        0.0
    } else {
        let (mut infeasible, mut feasible) = (0.0, q_star);
        for _ in 0..200 {
            let mid = 0.5 * (infeasible + feasible);
            if mid <= infeasible || mid >= feasible {
                break;
            }
            if f(mid) <= budget {
                feasible = mid;
            } else {
                infeasible = mid;
            }
        }
        feasible
    };
    let upper = if f(mass) <= budget {
        mass
    } else {
        let (mut feasible, mut infeasible) = (q_star, mass);
        for _ in 0..200 {
            let mid = 0.5 * (infeasible + feasible);
            if mid <= feasible || mid >= infeasible {
                break;
            }
            if f(mid) <= budget {
                feasible = mid;
            } else {
                infeasible = mid;
            }
        }
        feasible
    };
    Some(objective(lower).min(objective(upper)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(1.0, 2.0, 0.5).unwrap(), -1.0);
        let (c, beta, rho): (f64, f64, f64) = (0.7, 3.0, 0.2);
        assert_abs_diff_eq!(sigma((-c / beta).exp(), beta, rho).unwrap(), c - beta * rho, epsilon = 1e-14);
        assert!(matches!(sigma(0.0, 1.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(sigma(-1.0, 1.0, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn shifted_sigma_examples() {
        assert_abs_diff_eq!(sigma_shifted(0.0, 3.0, 0.1).unwrap(), -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(sigma_shifted(-0.5, 1.0, 0.01).unwrap(), 0.5f64.ln().abs() - 0.01, epsilon = 1e-14);
        assert_abs_diff_eq!(sigma_shifted(-0.5, 1.0, 0.01).unwrap(), 0.68315, epsilon = 1e-5);
        for z in [0.01, 0.3, 1.0, 2.5] {
            assert_abs_diff_eq!(
                sigma_shifted(z - 1.0, 1.7, 0.3).unwrap(),
                sigma(z, 1.7, 0.3).unwrap(),
                epsilon = 1e-14
            );
        }
        assert!(matches!(sigma_shifted(-1.0, 1.0, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_sigma_on_grid_matches_calculus() {
        // E[exp(-X/β)] for N(1,1) is exp(-1/β + 1/(2β²)); the optimum is μ − s√(2ρ).
        let cfg = DualConfig::new(1.0, 0.01, 100.0);
        let r = maximize_dual(|b| (-1.0 / b + 0.5 / (b * b)).exp(), &cfg, false).unwrap();
        assert_abs_diff_eq!(r.value, 1.0 - 2f64.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(r.beta_star, 1.0 / 2f64.sqrt(), epsilon = 1e-4);
        assert!(!r.at_boundary);

        // Independent check: plain dense scan of the same objective.
        let scan = (0..200_000)
            .map(|k| 0.01 * (1e4f64).powf(k as f64 / 199_999.0))
            .map(|b| sigma((-1.0 / b + 0.5 / (b * b)).exp(), b, 1.0).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(r.value, scan, epsilon = 1e-7);
    }

    #[test]
    fn constant_payoff_optimum_is_at_beta_min() {
        let c = 0.4;
        let cfg = DualConfig::new(0.1, 0.05, 50.0);
        let r = maximize_dual(|b| (-c / b).exp(), &cfg, false).unwrap();
        assert_abs_diff_eq!(r.value, c - 0.05 * 0.1, epsilon = 1e-12);
        assert_eq!(r.beta_star, 0.05);
        assert!(r.at_boundary);
    }

    #[test]
    fn two_point_matches_dense_primal_grid() {
        let rho = 0.1;
        let cfg = DualConfig::new(rho, 1e-4, 200.0);
        let r = maximize_dual(|b| 0.5 + 0.5 * (-1.0 / b).exp(), &cfg, false).unwrap();
        let n = 1_000_000;
        let primal = (0..=n)
            .map(|k| k as f64 / n as f64)
            .filter(|&q| kl_term(q, 0.5) + kl_term(1.0 - q, 0.5) <= rho)
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(r.value, primal, epsilon = 1e-4);
    }

    #[test]
    fn undefined_points_are_skipped() {
        let cfg = DualConfig::new(0.1, 0.01, 10.0);
        // Z ≤ 0 below β = 1: only the upper part of the grid is usable.
        let r = maximize_dual(|b| if b < 1.0 { -1.0 } else { (-0.5 / b).exp() }, &cfg, false).unwrap();
        assert!(r.beta_star >= 1.0);
        assert!(matches!(maximize_dual(|_| 0.0, &cfg, false), Err(Error::Numeric(_))));
        assert!(matches!(maximize_dual(|_| -1.0, &cfg, true), Err(Error::Numeric(_))));
    }

    #[test]
    fn zero_radius_returns_value_at_beta_max() {
        let cfg = DualConfig::new(0.0, 0.01, 1e4);
        let r = maximize_dual(|b| 0.5 * (-1.0 / b).exp() + 0.5, &cfg, false).unwrap();
        assert!(r.at_boundary);
        assert_eq!(r.beta_star, 1e4);
        assert_abs_diff_eq!(r.value, 0.5, epsilon = 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(DualConfig::new(0.1, 0.0, 1.0).validate().is_err());
        assert!(DualConfig::new(0.1, 2.0, 1.0).validate().is_err());
        assert!(DualConfig::new(-0.1, 0.1, 1.0).validate().is_err());
        let mut c = DualConfig::new(0.1, 0.1, 1.0);
        c.grid_size = 1;
        assert!(c.validate().is_err());
        let g = DualConfig::new(0.1, 0.01, 100.0).grid();
        assert_eq!(g.len(), DEFAULT_GRID_SIZE);
        assert_eq!((g[0], g[63]), (0.01, 100.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn primal_oracle_examples() {
        assert_abs_diff_eq!(primal_oracle(&[0.3, 0.3], &[0.2, 0.8], 0.5).unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(
            primal_oracle(&[0.1, 0.5, 0.9], &[0.2, 0.3, 0.5], 0.0).unwrap(),
            0.02 + 0.15 + 0.45,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(primal_oracle(&[0.1, 0.5, 0.9], &[0.2, 0.3, 0.5], 50.0).unwrap(), 0.1, epsilon = 1e-3);
        assert_abs_diff_eq!(
            primal_oracle(&[0.4, 0.2, 0.9, 0.6], &[0.1, 0.2, 0.3, 0.4], 50.0).unwrap(),
            0.2,
            epsilon = 1e-3
        );
        assert!(matches!(primal_oracle(&[0.0; 5], &[0.2; 5], 0.1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn stable_expectation_agrees_with_direct_dual() {
        let values = [0.2, 0.9, 0.5];
        let probs = [0.3, 0.3, 0.4];
        let cfg = DualConfig::new(0.2, 0.01, 20.0);
        let stable = robust_expectation(&values, &probs, &cfg).unwrap();
        let direct = maximize_dual(
            |b| values.iter().zip(&probs).map(|(v, p)| p * (-v / b).exp()).sum(),
            &cfg,
            false,
        )
        .unwrap();
        assert_abs_diff_eq!(stable.value, direct.value, epsilon = 1e-10);
        // Small β would underflow exp(-v/β) without the shift.
        let cfg = DualConfig::new(5.0, 1e-6, 1.0);
        let r = robust_expectation(&[3.0, 4.0], &[0.5, 0.5], &cfg).unwrap();
        assert_abs_diff_eq!(r.value, 3.0, epsilon = 1e-5);
    }

    fn distribution() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..=4).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..1.0, n),
                proptest::collection::vec(0.05f64..1.0, n),
            )
        })
    }

    fn discrete_z<'a>(values: &'a [f64], probs: &'a [f64]) -> impl Fn(f64) -> f64 + 'a {
        let total: f64 = probs.iter().sum();
        move |b| values.iter().zip(probs).map(|(v, p)| p / total * (-v / b).exp()).sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dual_is_bracketed((values, probs) in distribution(), rho in 0.01f64..2.0) {
            let total: f64 = probs.iter().sum();
            let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p / total).sum();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            // exp(−v/β) stays representable down to β = 2e-3; the value at β_min is at least min − β_min·ρ.
            let r = maximize_dual(discrete_z(&values, &probs), &DualConfig::new(rho, 2e-3, 20.0 / rho), false).unwrap();
            prop_assert!(r.value >= min - 2e-3 * rho - 1e-12);
            prop_assert!(r.value <= mean + 1e-12);
            let stable = robust_expectation(&values, &probs, &DualConfig::new(rho, 1e-7, 20.0 / rho)).unwrap();
            prop_assert!(stable.value >= min - 1e-7 * rho - 1e-12);
            prop_assert!(stable.value <= mean + 1e-12);
        }

        #[test]
        fn dual_is_monotone_in_radius((values, probs) in distribution()) {
            let mut last = f64::INFINITY;
            for rho in [0.01, 0.1, 0.5, 1.0] {
                let r = maximize_dual(discrete_z(&values, &probs), &DualConfig::new(rho, 1e-3, 2000.0), false).unwrap();
                prop_assert!(r.value <= last + 1e-9);
                last = r.value;
            }
        }

        #[test]
        fn shift_matches_unshifted((values, probs) in distribution(), rho in 0.01f64..1.0) {
            // Z − 1 carries an absolute rounding error of one ulp of 1, so the
            // identity is only tight while Z stays away from 0 (here Z ≥ e^{-5}).
            let cfg = DualConfig::new(rho, 0.2, 100.0);
            let z = discrete_z(&values, &probs);
            let total: f64 = probs.iter().sum();
            let zm1 = |b: f64| values.iter().zip(&probs).map(|(v, p)| p / total * (-v / b).exp_m1()).sum::<f64>();
            let plain = maximize_dual(&z, &cfg, false).unwrap();
            let shifted = maximize_dual(zm1, &cfg, true).unwrap();
            prop_assert!((plain.value - shifted.value).abs() <= 1e-11);
        }

        #[test]
        fn small_support_duality_gap((values, probs) in (2usize..=3).prop_flat_map(|n| (
            proptest::collection::vec(0.0f64..1.0, n),
            proptest::collection::vec(0.05f64..1.0, n),
        )), rho in prop::sample::select(vec![0.01, 0.1, 0.5, 1.0])) {
            let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - values.iter().cloned().fold(f64::INFINITY, f64::min);
            let cfg = DualConfig::new(rho, 1e-5, (spread * 20.0 / rho).max(1e-4));
            let dual = maximize_dual(discrete_z(&values, &probs), &cfg, false).unwrap();
            let primal = primal_oracle(&values, &probs, rho).unwrap();
            prop_assert!((dual.value - primal).abs() <= 1e-3, "dual {} primal {}", dual.value, primal);
        }
    }
}
