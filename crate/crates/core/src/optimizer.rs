//! Projected full-batch Adam over masked parameter vectors.
//!
//! After every step each free weight is clipped to `[0, ∞)`; masked-off
//! amplitudes stay pinned at zero. The returned parameters are the iterate
//! with the lowest total loss seen, so the reported loss never exceeds the
//! initial one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{model_r_squared, Dataset, RSquared};
use crate::error::{Error, Result};
use crate::model::{ModelFamily, ParamVector, TermMask, MAX_FREE, N_EXPONENTS, N_TERMS};
use crate::objective::{active_terms, loss_and_gradient, LossBreakdown, LossSpec, PenaltyConfig};

pub const DEFAULT_SEED: u64 = 42;
/// Starting exponent of a term added by a warm start.
pub const WARM_EXPONENT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    /// Relative loss change over `convergence_window` epochs below which a run stops.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub seed: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 20_000,
            convergence_tol: 1e-9,
            convergence_window: 100,
            seed: DEFAULT_SEED,
        }
    }
}

impl AdamConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.convergence_window > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration: {self:?}")))
        }
    }
}

/// How a run picks its starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitStrategy {
    /// Amplitudes uniform in `[0, 1]`, exponents uniform in `[0.1, 2]`.
    #[default]
    UniformRandom,
    /// Amplitudes set to the one-term best fits; exponents drawn as for `UniformRandom`.
    L0Informed { amplitudes: [f64; N_TERMS] },
    /// Start from given parameters. Terms of the mask with zero amplitude start
    /// at `fill`, their exponents at [`WARM_EXPONENT`].
    Warm { params: ParamVector, fill: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ParamVector,
    pub mask: TermMask,
    pub loss: LossBreakdown,
    pub initial_loss: f64,
    pub r2: RSquared,
    pub active_terms: usize,
    pub epochs_run: usize,
    pub converged: bool,
    pub seed: u64,
}

fn initial_params(
    family: ModelFamily,
    mask: TermMask,
    init: &InitStrategy,
    rng: &mut ChaCha8Rng,
) -> ParamVector {
    let mut p = ParamVector::zeros(family);
    // draw everything first so the stream does not depend on the strategy's branch
    let amps: [f64; N_TERMS] = std::array::from_fn(|_| rng.gen_range(0.0..=1.0));
    let exps: [f64; N_EXPONENTS] = std::array::from_fn(|_| rng.gen_range(0.1..=2.0));
    match init {
        InitStrategy::UniformRandom => p.amplitudes = amps,
        InitStrategy::L0Informed { amplitudes } => p.amplitudes = *amplitudes,
        InitStrategy::Warm { params, fill } => {
            p.amplitudes = params.amplitudes;
            for k in mask.terms() {
                if p.amplitudes[k] <= 0.0 {
                    p.amplitudes[k] = *fill;
                }
            }
        }
    }
    if family == ModelFamily::Invariant8 {
        p.exponents = exps;
        if let InitStrategy::Warm { params, .. } = init {
            for k in mask.terms() {
                if let Some(j) = family.exponent_slot(k) {
                    let carried = params.family == family && params.amplitudes[k] > 0.0;
                    p.exponents[j] = if carried { params.exponents[j] } else { WARM_EXPONENT };
                }
            }
        }
        for k in 0..N_TERMS {
            if let Some(j) = family.exponent_slot(k) {
                if !mask.contains(k) {
                    p.exponents[j] = 0.0;
                }
            }
        }
    }
    for a in p.amplitudes.iter_mut() {
        *a = a.max(0.0);
    }
    p.masked(mask)
}

/// Free-parameter indices the optimizer may move.
fn free_indices(family: ModelFamily, mask: TermMask) -> Vec<usize> {
    let mut idx: Vec<usize> = mask.terms().collect();
    if family == ModelFamily::Invariant8 {
        idx.extend(mask.terms().filter_map(|k| family.exponent_slot(k)).map(|j| N_TERMS + j));
    }
    idx
}

fn check_mask(family: ModelFamily, mask: TermMask) -> Result<()> {
    if !mask.is_subset_of(family.full_mask()) {
        return Err(Error::Config(format!("mask {mask} not available for family {family}")));
    }
    Ok(())
}

/// Minimizes data loss plus penalty within `mask` by projected Adam.
pub fn fit(
    family: ModelFamily,
    mask: TermMask,
    dataset: &Dataset,
    spec: impl Into<LossSpec>,
    penalty: &PenaltyConfig,
    adam: &AdamConfig,
    init: &InitStrategy,
) -> Result<FitResult> {
    let spec = spec.into();
    check_mask(family, mask)?;
    adam.validate()?;
    penalty.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("dataset has no points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(adam.seed);
    let start = initial_params(family, mask, init, &mut rng);
    let free = free_indices(family, mask);
    let n_free = family.n_free();

    let mut x: [f64; MAX_FREE] = [0.0; MAX_FREE];
    x[..n_free].copy_from_slice(&start.to_free());
    let mut m = [0.0; MAX_FREE];
    let mut v = [0.0; MAX_FREE];
    let mut history: Vec<f64> = Vec::with_capacity(adam.max_epochs + 1);

    let mut best_x = x;
    let mut best_loss = f64::INFINITY;
    let mut initial_loss = f64::NAN;
    let mut converged = false;
    let mut epochs_run = 0;
    let (mut b1t, mut b2t) = (1.0, 1.0);

    for epoch in 0..=adam.max_epochs {
        let params = ParamVector::from_free(family, &x[..n_free])?;
        let evaluated = loss_and_gradient(&params, dataset, &spec, penalty);
        let (loss, grad) = match evaluated {
            Ok((b, g)) if b.total.is_finite() && g.iter().all(|v| v.is_finite()) => (b.total, g),
            Ok(_) | Err(Error::Overflow { .. }) => {
                return Err(Error::Divergence { epoch, last_finite: best_x[..n_free].to_vec() });
            }
            Err(e) => return Err(e),
        };
        if epoch == 0 {
            initial_loss = loss;
        }
        if loss < best_loss {
            best_loss = loss;
            best_x = x;
        }
        history.push(loss);
        if epoch >= adam.convergence_window {
            let prev = history[epoch - adam.convergence_window];
            let change = (prev - loss).abs();
            if change <= adam.convergence_tol * prev.abs() {
                converged = true;
                break;
            }
        }
        if epoch == adam.max_epochs {
            break;
        }
        epochs_run = epoch + 1;
        b1t *= adam.beta1;
        b2t *= adam.beta2;
        for &i in &free {
            m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * grad[i];
            v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            x[i] = (x[i] - adam.learning_rate * m_hat / (v_hat.sqrt() + adam.eps)).max(0.0);
        }
    }

    let params = ParamVector::from_free(family, &best_x[..n_free])?;
    let (loss, _) = loss_and_gradient(&params, dataset, &spec, penalty)?;
    Ok(FitResult {
        params,
        mask,
        loss,
        initial_loss,
        r2: model_r_squared(&params, dataset)?,
        active_terms: active_terms(&params, None),
        epochs_run,
        converged,
        seed: adam.seed,
    })
}

/// Seed of run `index` in an ensemble driven by `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio stride
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    /// Mean and sample standard deviation; `std = 0` for a single value.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Stats { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RSquaredStats {
    pub tension: Option<Stats>,
    pub compression: Option<Stats>,
    pub shear: Option<Stats>,
    pub pooled: Option<Stats>,
}

impl RSquaredStats {
    pub fn of<'a>(values: impl Iterator<Item = &'a RSquared> + Clone) -> Self {
        let col = |f: fn(&RSquared) -> Option<f64>| {
            Stats::of(&values.clone().filter_map(f).collect::<Vec<_>>())
        };
        RSquaredStats {
            tension: col(|r| r.tension),
            compression: col(|r| r.compression),
            shear: col(|r| r.shear),
            pooled: col(|r| r.pooled()),
        }
    }
}

/// Ensemble statistics, reduced in run order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RestartSummary {
    pub n_runs: usize,
    pub n_failed: usize,
    /// Per free parameter, `ParamVector::to_free` layout.
    pub weights: Vec<Option<Stats>>,
    pub total_loss: Option<Stats>,
    pub data_loss: Option<Stats>,
    pub active_terms: Option<Stats>,
    pub r2: RSquaredStats,
}

impl RestartSummary {
    pub fn of(family: ModelFamily, fits: &[&FitResult], n_failed: usize) -> Self {
        let n_free = family.n_free();
        let weights = (0..n_free)
            .map(|i| Stats::of(&fits.iter().map(|f| f.params.to_free()[i]).collect::<Vec<_>>()))
            .collect();
        RestartSummary {
            n_runs: fits.len() + n_failed,
            n_failed,
            weights,
            total_loss: Stats::of(&fits.iter().map(|f| f.loss.total).collect::<Vec<_>>()),
            data_loss: Stats::of(&fits.iter().map(|f| f.loss.data()).collect::<Vec<_>>()),
            active_terms: Stats::of(&fits.iter().map(|f| f.active_terms as f64).collect::<Vec<_>>()),
            r2: RSquaredStats::of(fits.iter().map(|f| &f.r2)),
        }
    }

    /// Mean amplitude of term `k`, if any run succeeded.
    pub fn mean_amplitude(&self, k: usize) -> Option<f64> {
        self.weights.get(k).copied().flatten().map(|s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRestartResult {
    pub master_seed: u64,
    pub fits: Vec<FitResult>,
    pub failures: Vec<RunFailure>,
    pub summary: RestartSummary,
}

impl MultiRestartResult {
    /// Lowest-loss run.
    pub fn best(&self) -> Option<&FitResult> {
        self.fits.iter().min_by(|a, b| a.loss.total.total_cmp(&b.loss.total))
    }
}

/// `n_runs` independent fits with seeds derived from `adam.seed`.
///
/// Runs execute in parallel; results and statistics are in run order and do
/// not depend on scheduling. A failing run is recorded and the ensemble continues.
#[allow(clippy::too_many_arguments)]
pub fn multi_restart_fit(
    n_runs: usize,
    init: &InitStrategy,
    family: ModelFamily,
    mask: TermMask,
    dataset: &Dataset,
    spec: impl Into<LossSpec>,
    penalty: &PenaltyConfig,
    adam: &AdamConfig,
) -> Result<MultiRestartResult> {
    let spec = spec.into();
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    check_mask(family, mask)?;
    adam.validate()?;
    penalty.validate()?;
    let outcomes: Vec<(usize, u64, Result<FitResult>)> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(adam.seed, i as u64);
            let cfg = adam.with_seed(seed);
            (i, seed, fit(family, mask, dataset, spec, penalty, &cfg, init))
        })
        .collect();
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (index, seed, r) in outcomes {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => failures.push(RunFailure { index, seed, error: e.to_string() }),
        }
    }
    let refs: Vec<&FitResult> = fits.iter().collect();
    let summary = RestartSummary::of(family, &refs, failures.len());
    Ok(MultiRestartResult { master_seed: adam.seed, fits, failures, summary })
}
