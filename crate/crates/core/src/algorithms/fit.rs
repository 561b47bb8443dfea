use std::collections::HashMap;
use std::sync::Arc;

use crate::dataset::{Sample, StagedSamples};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::kl_dual::{maximize_dual, refine_from_grid, sigma_shifted, DualConfig};
use crate::linalg::{Cholesky, GramMatrix};

use super::{stage_value, ActionOverride, AlgoConfig, Algorithm, RobustPolicy, StageWeights};

/// Runs the planner selected by `algorithm`.
///
/// Samples whose action has an override are left out of every regression:
/// their Q values are known, and with features shared across actions they
/// would otherwise bias the learned ones.
pub fn fit(
    algorithm: Algorithm,
    data: &StagedSamples,
    features: Arc<FeatureMap>,
    overrides: Vec<ActionOverride>,
    cfg: &AlgoConfig,
) -> Result<RobustPolicy> {
    cfg.validate()?;
    check_inputs(data, &features, &overrides)?;
    let horizon = data.horizon();
    let dim = features.dim();
    let gammas = match algorithm {
        Algorithm::Pdrvi => {
            let episodes = data.stages.iter().map(Vec::len).max().unwrap_or(0);
            cfg.pessimism.gammas(horizon, dim, episodes, cfg.rho, cfg.beta_min)?
        }
        _ => vec![0.0; horizon],
    };

    let mut stages: Vec<StageWeights> = Vec::with_capacity(horizon);
    for h in (0..horizon).rev() {
        let next = stages.last();
        let ctx = StageContext::build(&data.stages[h], &features, &overrides, cfg.lambda, |s| match next {
            Some(w) => stage_value(w, &features, &overrides, s),
            None => 0.0,
        })?;
        let theta_hat = ctx.solve(&ctx.reward_rhs);
        let last = h + 1 == horizon;
        let upper = (horizon - h) as f64;
        let dual = cfg.dual_config(horizon, h);

        let w_hat = if last {
            vec![0.0; dim]
        } else {
            match algorithm {
                Algorithm::Lsvi => ctx.nominal_next(),
                Algorithm::Drvi | Algorithm::Pdrvi if cfg.rho == 0.0 => ctx.nominal_next(),
                Algorithm::Drvi | Algorithm::Pdrvi => ctx.coordinate_duals(&dual, h)?,
                Algorithm::Rpvi => ctx.rpvi_targets(&features, &dual)?,
            }
        };
        let nu_hat = theta_hat
            .iter()
            .zip(&w_hat)
            .map(|(t, w)| match algorithm {
                Algorithm::Rpvi => t + w,
                _ => (t + w).clamp(0.0, upper),
            })
            .collect();
        let gamma = gammas[h];
        let coord_width = if gamma > 0.0 { ctx.solver.coord_widths() } else { vec![0.0; dim] };
        stages.push(StageWeights {
            theta_hat,
            w_hat,
            nu_hat,
            gamma,
            coord_width,
        });
    }
    stages.reverse();
    Ok(RobustPolicy::new(algorithm, features, overrides, stages, cfg.clone()))
}

/// DRVI-L. Any pessimism setting in `cfg` is ignored.
pub fn drvi_fit(
    data: &StagedSamples,
    features: Arc<FeatureMap>,
    overrides: Vec<ActionOverride>,
    cfg: &AlgoConfig,
) -> Result<RobustPolicy> {
    fit(Algorithm::Drvi, data, features, overrides, cfg)
}

/// PDRVI-L: DRVI-L with `γ_h` taken from `cfg.pessimism`.
pub fn pdrvi_fit(
    data: &StagedSamples,
    features: Arc<FeatureMap>,
    overrides: Vec<ActionOverride>,
    cfg: &AlgoConfig,
) -> Result<RobustPolicy> {
    fit(Algorithm::Pdrvi, data, features, overrides, cfg)
}

pub fn rpvi_fit(
    data: &StagedSamples,
    features: Arc<FeatureMap>,
    overrides: Vec<ActionOverride>,
    cfg: &AlgoConfig,
) -> Result<RobustPolicy> {
    fit(Algorithm::Rpvi, data, features, overrides, cfg)
}

pub fn lsvi_fit(
    data: &StagedSamples,
    features: Arc<FeatureMap>,
    overrides: Vec<ActionOverride>,
    cfg: &AlgoConfig,
) -> Result<RobustPolicy> {
    fit(Algorithm::Lsvi, data, features, overrides, cfg)
}

fn check_inputs(data: &StagedSamples, features: &FeatureMap, overrides: &[ActionOverride]) -> Result<()> {
    if data.horizon() == 0 {
        return Err(Error::Input("dataset has no stages".into()));
    }
    let (ns, na) = (features.num_states(), features.num_actions());
    for (h, stage) in data.stages.iter().enumerate() {
        if let Some(x) = stage
            .iter()
            .find(|x| x.state >= ns || x.next_state >= ns || x.action >= na)
        {
            return Err(Error::Input(format!(
                "stage {h} sample {x:?} is outside the feature map's {ns} states x {na} actions"
            )));
        }
    }
    for o in overrides {
        if o.action >= na || o.values.len() != ns {
            return Err(Error::Input(format!("override for action {} has the wrong shape", o.action)));
        }
    }
    Ok(())
}

/// Linear solves with `Λ_h`. One-hot style features (at most one nonzero per
/// row) give a diagonal Gram matrix, solved without a dense factorization.
enum StageSolver {
    Diagonal(Vec<f64>),
    Dense(Cholesky),
}

impl StageSolver {
    fn solve_in_place(&self, x: &mut [f64]) {
        match self {
            StageSolver::Diagonal(diag) => x.iter_mut().zip(diag).for_each(|(x, d)| *x /= d),
            StageSolver::Dense(chol) => chol.solve_in_place(x),
        }
    }

    fn coord_widths(&self) -> Vec<f64> {
        match self {
            StageSolver::Diagonal(diag) => diag.iter().map(|d| d.recip().sqrt()).collect(),
            StageSolver::Dense(chol) => chol.basis_inv_norms(),
        }
    }
}

/// Everything one backward step reads from the stage data.
struct StageContext<'a> {
    dim: usize,
    solver: StageSolver,
    samples: Vec<(&'a Sample, &'a [(usize, f64)])>,
    /// Distinct next states and `V̂_{h+1}` at each.
    next_values: Vec<f64>,
    /// Position of each sample's next state in `next_values`.
    next_index: Vec<usize>,
    reward_rhs: Vec<f64>,
    /// `Λ⁻¹ Σ_τ φ_τ 𝟙{s'_τ = m}`, row-major `dim × next_values.len()`.
    next_weights: Vec<f64>,
}

impl<'a> StageContext<'a> {
    fn build<V: Fn(usize) -> f64>(
        stage: &'a [Sample],
        features: &'a FeatureMap,
        overrides: &[ActionOverride],
        lambda: f64,
        next_value: V,
    ) -> Result<Self> {
        let dim = features.dim();
        let samples: Vec<_> = stage
            .iter()
            .filter(|x| !overrides.iter().any(|o| o.action == x.action))
            .map(|x| (x, features.sparse(x.state, x.action)))
            .collect();

        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut next_values = Vec::new();
        let next_index = samples
            .iter()
            .map(|(x, _)| {
                *slot.entry(x.next_state).or_insert_with(|| {
                    next_values.push(next_value(x.next_state));
                    next_values.len() - 1
                })
            })
            .collect::<Vec<_>>();

        let solver = if samples.iter().all(|(_, phi)| phi.len() <= 1) {
            let mut diag = vec![lambda; dim];
            for (_, phi) in &samples {
                for &(i, v) in *phi {
                    diag[i] += v * v;
                }
            }
            if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
                return Err(Error::Numeric(format!("gram matrix is singular at coordinate {i}")));
            }
            StageSolver::Diagonal(diag)
        } else {
            let mut gram = GramMatrix::identity_scaled(dim, lambda)?;
            for (_, phi) in &samples {
                gram.add_outer_sparse(phi)?;
            }
            gram.symmetrize();
            StageSolver::Dense(gram.cholesky()?)
        };

        let mut reward_rhs = vec![0.0; dim];
        let m = next_values.len();
        let mut next_weights = vec![0.0; dim * m];
        for ((x, phi), &k) in samples.iter().zip(&next_index) {
            for &(i, v) in *phi {
                reward_rhs[i] += v * x.reward;
                next_weights[i * m + k] += v;
            }
        }
        let mut column = vec![0.0; dim];
        for k in 0..m {
            column.iter_mut().enumerate().for_each(|(i, c)| *c = next_weights[i * m + k]);
            solver.solve_in_place(&mut column);
            column.iter().enumerate().for_each(|(i, c)| next_weights[i * m + k] = *c);
        }

        Ok(Self {
            dim,
            solver,
            samples,
            next_values,
            next_index,
            reward_rhs,
            next_weights,
        })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solver.solve_in_place(&mut x);
        x
    }

    /// `Λ⁻¹ Σ_τ φ_τ g(s'_τ)` given `g` at each distinct next state.
    fn regress_next(&self, g: &[f64]) -> Vec<f64> {
        let m = g.len();
        (0..self.dim)
            .map(|i| {
                let row = &self.next_weights[i * m..(i + 1) * m];
                row.iter().zip(g).map(|(u, g)| u * g).sum()
            })
            .collect()
    }

    fn regress_next_coord(&self, i: usize, g: &[f64]) -> f64 {
        let m = g.len();
        let row = &self.next_weights[i * m..(i + 1) * m];
        row.iter().zip(g).map(|(u, g)| u * g).sum()
    }

    fn shifted_targets(&self, beta: f64) -> Vec<f64> {
        self.next_values.iter().map(|v| (-v / beta).exp_m1()).collect()
    }

    /// Ridge regression of `V̂_{h+1}(s')`.
    fn nominal_next(&self) -> Vec<f64> {
        self.regress_next(&self.next_values)
    }

    /// `ŵ_i = sup_β σ̃(μ̂_i(β), β)` for every coordinate, with
    /// `μ̂(β) = Λ⁻¹ Σ_τ φ_τ (e^{−V̂_{h+1}(s'_τ)/β} − 1)` computed once per grid β.
    fn coordinate_duals(&self, cfg: &DualConfig, h: usize) -> Result<Vec<f64>> {
        let grid = cfg.grid();
        let mu: Vec<Vec<f64>> = grid.iter().map(|&b| self.regress_next(&self.shifted_targets(b))).collect();
        (0..self.dim)
            .map(|i| {
                let values: Vec<Option<f64>> = grid
                    .iter()
                    .zip(&mu)
                    .map(|(&b, mu)| finite(sigma_shifted(mu[i], b, cfg.rho)))
                    .collect();
                let objective =
                    |b: f64| finite(sigma_shifted(self.regress_next_coord(i, &self.shifted_targets(b)), b, cfg.rho));
                refine_from_grid(&grid, &values, objective, cfg)
                    .map(|r| r.value)
                    .map_err(|e| Error::Numeric(format!("dual undefined at stage {h}, coordinate {i}: {e}")))
            })
            .collect()
    }

    /// Plug-in robust value `σ̂_{sa}` for every distinct observed pair, then the
    /// ridge regression of those values onto the features.
    fn rpvi_targets(&self, features: &FeatureMap, cfg: &DualConfig) -> Result<Vec<f64>> {
        let mut solved: HashMap<(usize, usize), f64> = HashMap::new();
        let mut rhs = vec![0.0; self.dim];
        let mut direction = vec![0.0; self.dim];
        for (x, phi) in &self.samples {
            let key = (x.state, x.action);
            let value = match solved.get(&key) {
                Some(v) => *v,
                None => {
                    direction.iter_mut().for_each(|d| *d = 0.0);
                    for &(i, v) in features.sparse(x.state, x.action) {
                        direction[i] = v;
                    }
                    self.solver.solve_in_place(&mut direction);
                    // Kernel weight φ_saᵀΛ⁻¹φ_τ and next value of every sample.
                    let kernel: Vec<(f64, f64)> = self
                        .samples
                        .iter()
                        .zip(&self.next_index)
                        .map(|((_, p), &k)| {
                            let w: f64 = p.iter().map(|&(i, v)| v * direction[i]).sum();
                            (w, self.next_values[k])
                        })
                        .collect();
                    let z = |b: f64| {
                        let z: f64 = kernel.iter().map(|(w, v)| w * (-v / b).exp()).sum();
                        z.max(1e-12)
                    };
                    let v = maximize_dual(z, cfg, false)?.value;
                    solved.insert(key, v);
                    v
                }
            };
            for &(i, v) in *phi {
                rhs[i] += v * value;
            }
        }
        Ok(self.solve(&rhs))
    }
}

fn finite(v: Result<f64>) -> Option<f64> {
    v.ok().filter(|v| v.is_finite())
}
