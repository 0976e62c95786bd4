//! Discrete and continuous model discovery.
//!
//! Subset enumeration fits every mask of a given size without penalty and
//! adds the constant `α·k` afterwards, which is exact for the L0 penalty
//! because the number of amplitudes is fixed by the mask.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelFamily, ParamVector, TermMask, N_EXPONENTS, N_TERMS};
use crate::objective::{penalty, total_loss, LossSpec, PenaltyConfig};
use crate::optimizer::{
    derive_seed, fit, multi_restart_fit, AdamConfig, FitResult, InitStrategy, RSquaredStats,
    RunFailure, Stats,
};

/// Exponents used by landscape grids unless the caller supplies others.
pub const DEFAULT_FROZEN_EXPONENTS: [f64; N_EXPONENTS] = [0.25; N_EXPONENTS];
/// Amplitude given to a term when densification adds it to a warm start.
pub const DENSIFY_FILL: f64 = 0.1;

/// JSON has no infinity: `+∞` losses travel as `null`.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub mod grid {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            let rows: Vec<Vec<Option<f64>>> =
                v.iter().map(|r| r.iter().map(|x| x.is_finite().then_some(*x)).collect()).collect();
            rows.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let rows = Vec::<Vec<Option<f64>>>::deserialize(d)?;
            Ok(rows.into_iter().map(|r| r.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect()).collect())
        }
    }
}

/// Settings shared by the subset-fitting strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub spec: LossSpec,
    pub adam: AdamConfig,
    /// Random restarts per mask; the lowest-loss run is kept.
    pub restarts: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig { spec: LossSpec::default(), adam: AdamConfig::default(), restarts: 3 }
    }
}

/// Seed of restart `restart` for `mask` under master seed `master`.
pub fn mask_seed(master: u64, mask: TermMask, restart: usize) -> u64 {
    derive_seed(derive_seed(master, u64::from(mask.bits())), restart as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub mask: TermMask,
    /// Best unpenalized fit within the mask, `None` if every restart failed.
    pub fitted: Option<FitResult>,
    /// Data loss of `fitted`, `+∞` for a failed mask.
    #[serde(with = "infinite_as_null")]
    pub data_loss: f64,
    pub n_exponential: usize,
    pub error: Option<String>,
}

impl SubsetReport {
    pub fn k(&self) -> usize {
        self.mask.count()
    }

    pub fn failed(&self) -> bool {
        self.fitted.is_none()
    }

    /// Data loss plus `α·k`.
    pub fn penalized_loss(&self, alpha: f64) -> f64 {
        self.data_loss + alpha * self.k() as f64
    }

    fn from_fits(family: ModelFamily, mask: TermMask, fits: Vec<Result<FitResult>>) -> Self {
        let n_exponential = mask.terms().filter(|&k| family.is_exponential_term(k)).count();
        let mut best: Option<FitResult> = None;
        let mut last_error = None;
        for r in fits {
            match r {
                Ok(f) => {
                    if best.as_ref().is_none_or(|b| f.loss.data() < b.loss.data()) {
                        best = Some(f);
                    }
                }
                Err(e) => last_error = Some(e.to_string()),
            }
        }
        let data_loss = best.as_ref().map_or(f64::INFINITY, |f| f.loss.data());
        let error = if best.is_none() { last_error } else { None };
        SubsetReport { mask, fitted: best, data_loss, n_exponential, error }
    }
}

/// Ranking order at penalty `alpha`: penalized loss, then fewer terms, then
/// fewer exponential terms, then lexicographic term order. Failures sort last.
pub fn compare_reports(a: &SubsetReport, b: &SubsetReport, alpha: f64) -> Ordering {
    a.failed()
        .cmp(&b.failed())
        .then_with(|| a.penalized_loss(alpha).total_cmp(&b.penalized_loss(alpha)))
        .then_with(|| a.k().cmp(&b.k()))
        .then_with(|| a.n_exponential.cmp(&b.n_exponential))
        .then_with(|| a.mask.term_list().cmp(&b.mask.term_list()))
}

/// Sorts reports best first at penalty `alpha`.
pub fn rank(reports: &mut [SubsetReport], alpha: f64) {
    reports.sort_by(|a, b| compare_reports(a, b, alpha));
}

/// Fits one mask with `cfg.restarts` seeded restarts and keeps the best.
pub fn fit_subset(
    family: ModelFamily,
    mask: TermMask,
    dataset: &Dataset,
    cfg: &DiscoveryConfig,
) -> SubsetReport {
    let fits = (0..cfg.restarts.max(1))
        .map(|r| {
            let adam = cfg.adam.with_seed(mask_seed(cfg.adam.seed, mask, r));
            fit(family, mask, dataset, cfg.spec, &PenaltyConfig::none(), &adam, &InitStrategy::UniformRandom)
        })
        .collect();
    SubsetReport::from_fits(family, mask, fits)
}

fn fit_masks(
    family: ModelFamily,
    masks: Vec<TermMask>,
    dataset: &Dataset,
    alpha: f64,
    cfg: &DiscoveryConfig,
) -> Result<Vec<SubsetReport>> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
    }
    cfg.adam.validate()?;
    let mut reports: Vec<SubsetReport> =
        masks.into_par_iter().map(|m| fit_subset(family, m, dataset, cfg)).collect();
    rank(&mut reports, alpha);
    Ok(reports)
}

/// Fits every mask with `k` terms and ranks them by data loss plus `α·k`.
///
/// The cost grows as C(8, k) fits times `cfg.restarts`.
pub fn enumerate_best_in_class(
    family: ModelFamily,
    dataset: &Dataset,
    k: usize,
    alpha: f64,
    cfg: &DiscoveryConfig,
) -> Result<Vec<SubsetReport>> {
    if k == 0 || k > N_TERMS {
        return Err(Error::Config(format!("subset size must be in 1..=8, got {k}")));
    }
    let full = family.full_mask();
    let masks: Vec<TermMask> =
        TermMask::combinations(k).into_iter().filter(|m| m.is_subset_of(full)).collect();
    if masks.is_empty() {
        return Err(Error::Config(format!("family {family} has no {k}-term subsets")));
    }
    fit_masks(family, masks, dataset, alpha, cfg)
}

/// Fits all 255 non-empty masks. Expensive; ranked as in [`enumerate_best_in_class`].
pub fn enumerate_all_subsets(
    family: ModelFamily,
    dataset: &Dataset,
    alpha: f64,
    cfg: &DiscoveryConfig,
) -> Result<Vec<SubsetReport>> {
    let full = family.full_mask();
    let masks: Vec<TermMask> = (1..=N_TERMS)
        .flat_map(TermMask::combinations)
        .filter(|m| m.is_subset_of(full))
        .collect();
    fit_masks(family, masks, dataset, alpha, cfg)
}

/// Penalty at which the one- and two-term models tie: `α* = L₁ − L₂`.
pub fn l0_crossover(best_k1: &SubsetReport, best_k2: &SubsetReport) -> f64 {
    crossover_from_losses(best_k1.data_loss, best_k2.data_loss)
}

pub fn crossover_from_losses(loss_k1: f64, loss_k2: f64) -> f64 {
    loss_k1 - loss_k2
}

/// Selection rule at penalty `alpha`: the larger model wins iff `alpha < alpha_star`.
pub fn prefers_larger(alpha_star: f64, alpha: f64) -> bool {
    alpha < alpha_star
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensifyStart {
    /// New candidates start from the incumbent weights.
    #[default]
    Warm,
    /// New candidates start from random weights.
    Cold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensifyStep {
    pub adopted: SubsetReport,
    /// Every extension fitted at this step, best first.
    pub candidates: Vec<SubsetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensifyTrajectory {
    pub alpha: f64,
    pub improvement_tol: f64,
    pub start: DensifyStart,
    /// Adopted models; the first is the best one-term model.
    pub steps: Vec<DensifyStep>,
    pub loss_evaluations: usize,
}

impl DensifyTrajectory {
    pub fn last(&self) -> &SubsetReport {
        &self.steps.last().expect("trajectory has a starting model").adopted
    }
}

/// Greedy forward selection: add the single term that lowers the penalized
/// loss most, while the gain is at least `improvement_tol`.
pub fn greedy_densify(
    family: ModelFamily,
    dataset: &Dataset,
    alpha: f64,
    improvement_tol: f64,
    start: DensifyStart,
    cfg: &DiscoveryConfig,
) -> Result<DensifyTrajectory> {
    if !(improvement_tol.is_finite() && improvement_tol > 0.0) {
        return Err(Error::Config(format!("improvement tolerance must be > 0, got {improvement_tol}")));
    }
    let first = enumerate_best_in_class(family, dataset, 1, alpha, cfg)?;
    let mut loss_evaluations = first.len();
    let incumbent = first[0].clone();
    if incumbent.failed() {
        return Err(Error::Config("every one-term fit failed".into()));
    }
    let mut steps = vec![DensifyStep { adopted: incumbent, candidates: first }];
    let full = family.full_mask();
    loop {
        let current = &steps.last().unwrap().adopted;
        let base = current.fitted.as_ref().unwrap().params;
        let extensions: Vec<TermMask> = full
            .terms()
            .filter(|&t| !current.mask.contains(t))
            .map(|t| current.mask.with(t))
            .collect();
        if extensions.is_empty() {
            break;
        }
        loss_evaluations += extensions.len();
        let mut candidates: Vec<SubsetReport> = extensions
            .into_par_iter()
            .map(|mask| match start {
                DensifyStart::Cold => fit_subset(family, mask, dataset, cfg),
                DensifyStart::Warm => {
                    let adam = cfg.adam.with_seed(mask_seed(cfg.adam.seed, mask, 0));
                    let init = InitStrategy::Warm { params: base, fill: DENSIFY_FILL };
                    let r = fit(family, mask, dataset, cfg.spec, &PenaltyConfig::none(), &adam, &init);
                    SubsetReport::from_fits(family, mask, vec![r])
                }
            })
            .collect();
        rank(&mut candidates, alpha);
        let best = &candidates[0];
        let gain = current.penalized_loss(alpha) - best.penalized_loss(alpha);
        if best.failed() || !(gain >= improvement_tol) {
            break;
        }
        let adopted = best.clone();
        steps.push(DensifyStep { adopted, candidates });
    }
    Ok(DensifyTrajectory { alpha, improvement_tol, start, steps, loss_evaluations })
}

/// Statistics of one `(p, α)` cell of an Lp sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub p: f64,
    pub alpha: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub r2: RSquaredStats,
    pub active_terms: Option<Stats>,
    pub total_loss: Option<Stats>,
    /// Per free parameter, `ParamVector::to_free` layout.
    pub weights: Vec<Option<Stats>>,
    pub failures: Vec<RunFailure>,
    /// Set when the whole cell could not run.
    pub error: Option<String>,
}

impl SweepCell {
    /// True when statistics cover all `n_runs` runs.
    pub fn complete(&self) -> bool {
        self.error.is_none() && self.failures.is_empty()
    }

    pub fn mean_amplitude(&self, k: usize) -> Option<f64> {
        self.weights.get(k).copied().flatten().map(|s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub powers: Vec<f64>,
    pub alphas: Vec<f64>,
    pub n_runs: usize,
    pub master_seed: u64,
    pub init: InitStrategy,
    /// Penalty divisors `ν`, typically the one-term best-fit amplitudes.
    pub weight_norms: Option<[f64; N_TERMS]>,
}

/// Runs `multi_restart_fit` for every `(p, α)` pair, powers outer, alphas inner.
pub fn lp_sweep(
    family: ModelFamily,
    mask: TermMask,
    dataset: &Dataset,
    sweep: &SweepConfig,
    spec: LossSpec,
    adam: &AdamConfig,
) -> Result<Vec<SweepCell>> {
    if let Some(p) = sweep.powers.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Config(format!("sweep powers must be > 0, got {p}")));
    }
    if let Some(a) = sweep.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::Config(format!("sweep alphas must be >= 0, got {a}")));
    }
    if sweep.n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    let cells: Vec<(usize, f64, f64)> = sweep
        .powers
        .iter()
        .flat_map(|&p| sweep.alphas.iter().map(move |&a| (p, a)))
        .enumerate()
        .map(|(i, (p, a))| (i, p, a))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(i, p, alpha)| {
            let seed = derive_seed(sweep.master_seed, i as u64);
            let mut pen = PenaltyConfig::new(p, alpha);
            pen.weight_norms = sweep.weight_norms;
            let run = multi_restart_fit(
                sweep.n_runs,
                &sweep.init,
                family,
                mask,
                dataset,
                spec,
                &pen,
                &adam.with_seed(seed),
            );
            match run {
                Ok(r) => SweepCell {
                    p,
                    alpha,
                    n_runs: sweep.n_runs,
                    seed,
                    r2: r.summary.r2,
                    active_terms: r.summary.active_terms,
                    total_loss: r.summary.total_loss,
                    weights: r.summary.weights,
                    failures: r.failures,
                    error: None,
                },
                Err(e) => SweepCell {
                    p,
                    alpha,
                    n_runs: sweep.n_runs,
                    seed,
                    r2: RSquaredStats::default(),
                    active_terms: None,
                    total_loss: None,
                    weights: Vec::new(),
                    failures: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Penalty weight at which data loss and penalty are equal at `corner`:
/// `α = L_data(corner) / Σ |wₖ|ᵖ` over the masked amplitudes.
pub fn calibrate_alpha(
    family: ModelFamily,
    mask: TermMask,
    dataset: &Dataset,
    p: f64,
    corner: &ParamVector,
    spec: LossSpec,
) -> Result<f64> {
    if corner.family != family {
        return Err(Error::Config(format!("corner is a {} vector, expected {family}", corner.family)));
    }
    if mask.terms().any(|k| !(corner.amplitudes[k] > 0.0)) {
        return Err(Error::Config("corner amplitudes must be strictly positive on the mask".into()));
    }
    let corner = corner.masked(mask);
    let norm = penalty(&corner, &PenaltyConfig::new(p, 1.0));
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Config(format!("penalty norm at corner is {norm}")));
    }
    let data = total_loss(&corner, dataset, spec, &PenaltyConfig::none())?.data();
    Ok(data / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub term: usize,
    pub min: f64,
    pub max: f64,
}

impl GridAxis {
    pub fn value(&self, index: usize, resolution: usize) -> f64 {
        self.min + (self.max - self.min) * index as f64 / (resolution - 1) as f64
    }

    pub fn spacing(&self, resolution: usize) -> f64 {
        (self.max - self.min) / (resolution - 1) as f64
    }
}

/// Total loss sampled on a uniform two-weight grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub family: ModelFamily,
    pub mask: TermMask,
    pub axis_i: GridAxis,
    pub axis_j: GridAxis,
    pub resolution: usize,
    pub penalty: PenaltyConfig,
    pub exponents: [f64; N_EXPONENTS],
    /// `values[a][b]` is the loss at `(axis_i.value(a), axis_j.value(b))`; overflow is `+∞`.
    #[serde(with = "infinite_as_null::grid")]
    pub values: Vec<Vec<f64>>,
    pub argmin: (usize, usize),
    #[serde(with = "infinite_as_null")]
    pub min: f64,
}

impl LandscapeGrid {
    pub fn argmin_weights(&self) -> (f64, f64) {
        (
            self.axis_i.value(self.argmin.0, self.resolution),
            self.axis_j.value(self.argmin.1, self.resolution),
        )
    }

    /// Largest midpoint-convexity excess `L(mid) − (L(a)+L(b))/2` over
    /// `n_pairs` random grid-aligned pairs (negative means every pair passed).
    pub fn midpoint_convexity_excess(&self, n_pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.resolution;
        let mut worst = f64::NEG_INFINITY;
        let mut checked = 0;
        while checked < n_pairs {
            let a = (rng.gen_range(0..n), rng.gen_range(0..n));
            let b = (rng.gen_range(0..n), rng.gen_range(0..n));
            if (a.0 + b.0) % 2 != 0 || (a.1 + b.1) % 2 != 0 || a == b {
                continue;
            }
            let mid = self.values[(a.0 + b.0) / 2][(a.1 + b.1) / 2];
            let chord = 0.5 * (self.values[a.0][a.1] + self.values[b.0][b.1]);
            if chord.is_finite() {
                worst = worst.max(mid - chord);
            }
            checked += 1;
        }
        worst
    }
}

/// Evaluates the total loss of the two-term model `(axis_i.term, axis_j.term)` on a grid.
///
/// Invariant-family exponents are frozen to `exponents`
/// (default [`DEFAULT_FROZEN_EXPONENTS`]) rather than optimized per cell.
#[allow(clippy::too_many_arguments)]
pub fn loss_landscape_grid(
    family: ModelFamily,
    axis_i: GridAxis,
    axis_j: GridAxis,
    dataset: &Dataset,
    resolution: usize,
    penalty_config: &PenaltyConfig,
    exponents: Option<[f64; N_EXPONENTS]>,
    spec: LossSpec,
) -> Result<LandscapeGrid> {
    if resolution < 2 {
        return Err(Error::Config(format!("grid resolution must be >= 2, got {resolution}")));
    }
    if axis_i.term == axis_j.term {
        return Err(Error::Config("landscape needs two distinct terms".into()));
    }
    for ax in [&axis_i, &axis_j] {
        if !(ax.min.is_finite() && ax.max.is_finite() && ax.min >= 0.0 && ax.max > ax.min) {
            return Err(Error::Config(format!("invalid weight range {}:{}", ax.min, ax.max)));
        }
    }
    let mask = TermMask::from_terms(&[axis_i.term, axis_j.term]);
    if !mask.is_subset_of(family.full_mask()) {
        return Err(Error::Config(format!("terms {mask} not available for family {family}")));
    }
    penalty_config.validate()?;
    let exponents = exponents.unwrap_or(DEFAULT_FROZEN_EXPONENTS);
    let mut base = ParamVector::zeros(family);
    if family == ModelFamily::Invariant8 {
        base.exponents = exponents;
    }
    let rows: Vec<Result<Vec<f64>>> = (0..resolution)
        .into_par_iter()
        .map(|a| {
            (0..resolution)
                .map(|b| {
                    let mut p = base;
                    p.amplitudes[axis_i.term] = axis_i.value(a, resolution);
                    p.amplitudes[axis_j.term] = axis_j.value(b, resolution);
                    match total_loss(&p, dataset, spec, penalty_config) {
                        Ok(l) if l.total.is_nan() => Ok(f64::INFINITY),
                        Ok(l) => Ok(l.total),
                        Err(Error::Overflow { .. }) => Ok(f64::INFINITY),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect();
    let values = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut argmin = (0, 0);
    let mut min = f64::INFINITY;
    for (a, row) in values.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            if v < min {
                min = v;
                argmin = (a, b);
            }
        }
    }
    Ok(LandscapeGrid {
        family,
        mask,
        axis_i,
        axis_j,
        resolution,
        penalty: *penalty_config,
        exponents: if family == ModelFamily::Invariant8 { exponents } else { [0.0; N_EXPONENTS] },
        values,
        argmin,
        min,
    })
}
