//! Data misfit, the Lp penalty family and their analytic gradients.
//!
//! The data term is a per-protocol squared residual, optionally divided by
//! the protocol's extreme recorded stress. Only the eight amplitudes are
//! penalized; exponent weights of the invariant family enter the data term
//! only.

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, MODES};
use crate::error::{Error, Result};
use crate::kinematics::LoadMode;
use crate::model::{eval_point, ParamVector, MAX_FREE, N_TERMS};

/// Amplitudes at or below this magnitude count as zero.
pub const TAU_ZERO: f64 = 1e-4;
pub const DEFAULT_EPSILON_SMOOTH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Divide residuals by the maximum tensile, minimum compressive and maximum shear stress.
    #[default]
    MaxStress,
}

/// How squared residuals of one protocol are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LossSpec {
    pub normalization: Normalization,
    pub reduction: Reduction,
}

impl LossSpec {
    pub fn new(normalization: Normalization, reduction: Reduction) -> Self {
        LossSpec { normalization, reduction }
    }

    pub fn normalized() -> Self {
        LossSpec::new(Normalization::MaxStress, Reduction::Mean)
    }

    pub fn raw() -> Self {
        LossSpec::new(Normalization::None, Reduction::Mean)
    }
}

impl From<Normalization> for LossSpec {
    fn from(normalization: Normalization) -> Self {
        LossSpec { normalization, reduction: Reduction::Mean }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub p: f64,
    pub alpha: f64,
    /// Per-amplitude divisors `ν`; `None` means all ones.
    pub weight_norms: Option<[f64; N_TERMS]>,
    pub epsilon_smooth: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig::none()
    }
}

impl PenaltyConfig {
    pub fn new(p: f64, alpha: f64) -> Self {
        PenaltyConfig { p, alpha, weight_norms: None, epsilon_smooth: DEFAULT_EPSILON_SMOOTH }
    }

    /// No regularization.
    pub fn none() -> Self {
        PenaltyConfig::new(1.0, 0.0)
    }

    pub fn with_norms(mut self, norms: [f64; N_TERMS]) -> Self {
        self.weight_norms = Some(norms);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("penalty alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.p.is_finite() && self.p >= 0.0) {
            return Err(Error::Config(format!("penalty power must be >= 0, got {}", self.p)));
        }
        if !(self.epsilon_smooth.is_finite() && self.epsilon_smooth > 0.0) {
            return Err(Error::Config("epsilon_smooth must be positive".into()));
        }
        if let Some(n) = &self.weight_norms {
            if n.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config("weight norms must all be positive".into()));
            }
        }
        Ok(())
    }

    fn norm(&self, k: usize) -> f64 {
        self.weight_norms.map_or(1.0, |n| n[k])
    }
}

/// Loss split by protocol. `total` is the sum of the four other fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data_tension: f64,
    pub data_compression: f64,
    pub data_shear: f64,
    pub penalty: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn data(&self) -> f64 {
        self.data_tension + self.data_compression + self.data_shear
    }

    fn set_mode(&mut self, mode: LoadMode, v: f64) {
        match mode {
            LoadMode::UniaxialTension => self.data_tension = v,
            LoadMode::UniaxialCompression => self.data_compression = v,
            LoadMode::SimpleShear => self.data_shear = v,
        }
    }

    fn finish(mut self) -> Self {
        self.total = self.data_tension + self.data_compression + self.data_shear + self.penalty;
        self
    }
}

fn divisor(dataset: &Dataset, mode: LoadMode, spec: &LossSpec) -> Result<f64> {
    match spec.normalization {
        Normalization::None => Ok(1.0),
        Normalization::MaxStress => {
            let d = dataset.normalizer(mode);
            if d == 0.0 || !d.is_finite() {
                Err(Error::Config(format!(
                    "cannot normalize {mode:?} data: extreme recorded stress is {d}"
                )))
            } else {
                Ok(d)
            }
        }
    }
}

/// Data loss and, when requested, its gradient over the free parameters.
pub(crate) fn data_loss_impl(
    params: &ParamVector,
    dataset: &Dataset,
    spec: &LossSpec,
    mut grad: Option<&mut [f64; MAX_FREE]>,
) -> Result<LossBreakdown> {
    let n_free = params.family.n_free();
    let mut out = LossBreakdown::default();
    for mode in MODES {
        let pts = dataset.protocol(mode);
        if pts.is_empty() {
            continue;
        }
        let s = divisor(dataset, mode, spec)?;
        let weight = match spec.reduction {
            Reduction::Mean => 1.0 / pts.len() as f64,
            Reduction::Sum => 1.0,
        };
        let mut acc = 0.0;
        for pt in pts {
            let e = eval_point(params, mode, pt.control)?;
            let r = (e.stress - pt.stress) / s;
            acc += r * r;
            if let Some(g) = grad.as_deref_mut() {
                let c = 2.0 * weight * r / s;
                for (gi, di) in g.iter_mut().zip(&e.grad).take(n_free) {
                    *gi += c * di;
                }
            }
        }
        out.set_mode(mode, weight * acc);
    }
    Ok(out.finish())
}

/// Per-protocol squared residuals; the penalty field is zero.
pub fn data_loss(params: &ParamVector, dataset: &Dataset, spec: impl Into<LossSpec>) -> Result<LossBreakdown> {
    data_loss_impl(params, dataset, &spec.into(), None)
}

/// `α Σₖ |wₖ/νₖ|ᵖ` over the amplitudes; `p = 0` counts amplitudes above [`TAU_ZERO`].
pub fn penalty(params: &ParamVector, config: &PenaltyConfig) -> f64 {
    if config.alpha == 0.0 {
        return 0.0;
    }
    let norm_sum: f64 = (0..N_TERMS)
        .map(|k| {
            let w = (params.amplitudes[k] / config.norm(k)).abs();
            if config.p == 0.0 {
                if w > TAU_ZERO { 1.0 } else { 0.0 }
            } else {
                w.powf(config.p)
            }
        })
        .sum();
    config.alpha * norm_sum
}

/// Number of amplitudes above [`TAU_ZERO`] after optional `ν` normalization.
pub fn active_terms(params: &ParamVector, weight_norms: Option<&[f64; N_TERMS]>) -> usize {
    (0..N_TERMS)
        .filter(|&k| {
            let nu = weight_norms.map_or(1.0, |n| n[k]);
            (params.amplitudes[k] / nu).abs() > TAU_ZERO
        })
        .count()
}

pub(crate) fn penalty_gradient(params: &ParamVector, config: &PenaltyConfig, grad: &mut [f64; MAX_FREE]) {
    if config.alpha == 0.0 || config.p == 0.0 {
        return;
    }
    let p = config.p;
    for k in 0..N_TERMS {
        let nu = config.norm(k);
        let w = params.amplitudes[k];
        // weights live on [0, ∞): use the right derivative at zero
        let sign = if w < 0.0 { -1.0 } else { 1.0 };
        let u = (w / nu).abs();
        let d = if p < 1.0 {
            p * (u + config.epsilon_smooth).powf(p - 1.0)
        } else if p == 1.0 {
            1.0
        } else {
            p * u.powf(p - 1.0)
        };
        grad[k] += config.alpha * sign * d / nu;
    }
}

/// Data loss plus penalty. With `α = 0` this is exactly [`data_loss`].
pub fn total_loss(
    params: &ParamVector,
    dataset: &Dataset,
    spec: impl Into<LossSpec>,
    config: &PenaltyConfig,
) -> Result<LossBreakdown> {
    config.validate()?;
    let mut b = data_loss_impl(params, dataset, &spec.into(), None)?;
    b.penalty = penalty(params, config);
    Ok(b.finish())
}

pub(crate) fn loss_and_gradient(
    params: &ParamVector,
    dataset: &Dataset,
    spec: &LossSpec,
    config: &PenaltyConfig,
) -> Result<(LossBreakdown, [f64; MAX_FREE])> {
    let mut g = [0.0; MAX_FREE];
    let mut b = data_loss_impl(params, dataset, spec, Some(&mut g))?;
    b.penalty = penalty(params, config);
    penalty_gradient(params, config, &mut g);
    Ok((b.finish(), g))
}

/// Gradient of [`total_loss`] over the free parameters (`ParamVector::to_free` layout).
///
/// For `0 < p < 1` the penalty uses `(|w| + ε)ᵖ⁻¹`; `p = 0` contributes nothing.
pub fn loss_gradient(
    params: &ParamVector,
    dataset: &Dataset,
    spec: impl Into<LossSpec>,
    config: &PenaltyConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let (_, g) = loss_and_gradient(params, dataset, &spec.into(), config)?;
    Ok(g[..params.family.n_free()].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, SyntheticRanges};
    use crate::model::ModelFamily;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mr_data() -> Dataset {
        generate_synthetic(&ParamVector::mooney_rivlin(1.0, 1.0), &SyntheticRanges::default(), 10, None)
            .unwrap()
    }

    #[test]
    fn exact_parameters_give_zero_loss() {
        let d = mr_data();
        for norm in [Normalization::None, Normalization::MaxStress] {
            let b = data_loss(&ParamVector::mooney_rivlin(1.0, 1.0), &d, norm).unwrap();
            assert_eq!(b.total, 0.0);
            assert_eq!(b.penalty, 0.0);
        }
        let one = Dataset::from_pairs(&[(2.0, 5.25)], &[], &[], "").unwrap();
        let b = data_loss(&ParamVector::mooney_rivlin(1.0, 1.0), &one, Normalization::None).unwrap();
        assert_abs_diff_eq!(b.total, 0.0, epsilon = 1e-24);
    }

    #[test]
    fn penalty_examples() {
        let mut p = ParamVector::zeros(ModelFamily::Stretch8);
        p.amplitudes[0] = 1.0;
        p.amplitudes[2] = 2.0;
        assert_eq!(penalty(&p, &PenaltyConfig::new(0.0, 1.0)), 2.0);

        let ones = ParamVector::stretch([1.0; N_TERMS]);
        assert_eq!(penalty(&ones, &PenaltyConfig::new(1.0, 0.5)), 4.0);

        let mut four = ParamVector::zeros(ModelFamily::Stretch8);
        four.amplitudes[3] = 4.0;
        assert_abs_diff_eq!(penalty(&four, &PenaltyConfig::new(0.5, 1.0)), 2.0, epsilon = 1e-15);

        // exponents of the invariant family are not penalized
        let inv = ParamVector::invariant([0.0; N_TERMS], [5.0; 4]);
        assert_eq!(penalty(&inv, &PenaltyConfig::new(1.0, 1.0)), 0.0);
    }

    #[test]
    fn total_loss_composition() {
        let d = mr_data();
        let exact = ParamVector::mooney_rivlin(1.0, 1.0);
        let b = total_loss(&exact, &d, Normalization::MaxStress, &PenaltyConfig::new(1.0, 0.25)).unwrap();
        assert_abs_diff_eq!(b.total, 0.5, epsilon = 1e-15);

        let off = ParamVector::mooney_rivlin(0.3, 1.7);
        let data = data_loss(&off, &d, Normalization::MaxStress).unwrap();
        let tot = total_loss(&off, &d, Normalization::MaxStress, &PenaltyConfig::new(2.0, 0.0)).unwrap();
        assert_eq!(data, tot);
    }

    #[test]
    fn zero_divisor_is_a_configuration_error() {
        let d = Dataset::from_pairs(&[(1.0, 0.0), (1.1, 0.0)], &[], &[], "").unwrap();
        let r = data_loss(&ParamVector::mooney_rivlin(1.0, 1.0), &d, Normalization::MaxStress);
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(data_loss(&ParamVector::mooney_rivlin(1.0, 1.0), &d, Normalization::None).is_ok());
    }

    #[test]
    fn empty_protocols_contribute_nothing() {
        let d = Dataset::from_pairs(&[(1.5, 1.0)], &[], &[], "").unwrap();
        let b = data_loss(&ParamVector::mooney_rivlin(0.2, 0.2), &d, Normalization::MaxStress).unwrap();
        assert_eq!(b.data_compression, 0.0);
        assert_eq!(b.data_shear, 0.0);
        assert!(b.data_tension > 0.0);
    }

    #[test]
    fn sum_reduction_scales_mean_by_point_count() {
        let d = mr_data();
        let p = ParamVector::mooney_rivlin(2.0, 2.0);
        let mean = data_loss(&p, &d, LossSpec::normalized()).unwrap();
        let sum = data_loss(&p, &d, LossSpec::new(Normalization::MaxStress, Reduction::Sum)).unwrap();
        assert_abs_diff_eq!(sum.total, 11.0 * mean.total, epsilon = 1e-12);
    }

    #[test]
    fn gradient_examples() {
        // zero-residual data, single weight w = 3, p = 2, α = 1 ⇒ 6
        let mut p = ParamVector::zeros(ModelFamily::Stretch8);
        p.amplitudes[2] = 3.0;
        let d = generate_synthetic(&p, &SyntheticRanges::default(), 10, None).unwrap();
        let g = loss_gradient(&p, &d, Normalization::MaxStress, &PenaltyConfig::new(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g[2], 6.0, epsilon = 1e-12);

        let mut q = ParamVector::zeros(ModelFamily::Stretch8);
        q.amplitudes[1] = 0.5;
        let dq = generate_synthetic(&q, &SyntheticRanges::default(), 10, None).unwrap();
        let g = loss_gradient(&q, &dq, Normalization::MaxStress, &PenaltyConfig::new(1.0, 0.1)).unwrap();
        assert_abs_diff_eq!(g[1], 0.1, epsilon = 1e-12);

        // α = 0: gradient is the data gradient alone
        let r = ParamVector::mooney_rivlin(0.4, 1.3);
        let a = loss_gradient(&r, &dq, Normalization::MaxStress, &PenaltyConfig::new(1.0, 0.0)).unwrap();
        let mut buf = [0.0; MAX_FREE];
        data_loss_impl(&r, &dq, &LossSpec::normalized(), Some(&mut buf)).unwrap();
        assert_eq!(a, buf[..8].to_vec());
    }

    fn fd_check(family: ModelFamily, cfg: PenaltyConfig, spec: LossSpec, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = {
            let mut t = ParamVector::zeros(family);
            for k in family.full_mask().terms() {
                t.amplitudes[k] = rng.gen_range(0.1..1.0);
            }
            t.exponents = [0.5; 4];
            t
        };
        let data = generate_synthetic(&truth, &SyntheticRanges::default(), 10, None).unwrap();
        let mut p = ParamVector::zeros(family);
        for k in family.full_mask().terms() {
            p.amplitudes[k] = rng.gen_range(0.2..1.2);
        }
        if family == ModelFamily::Invariant8 {
            for e in p.exponents.iter_mut() {
                *e = rng.gen_range(0.2..0.8);
            }
        }
        let g = loss_gradient(&p, &data, spec, &cfg).unwrap();
        let x0 = p.to_free();
        for i in 0..x0.len() {
            if family == ModelFamily::MooneyRivlin && i != 0 && i != 4 {
                continue;
            }
            let h = 1e-6 * x0[i].abs().max(1.0);
            let mut up = x0.clone();
            up[i] += h;
            let mut dn = x0.clone();
            dn[i] -= h;
            let f = |x: &[f64]| {
                total_loss(&ParamVector::from_free(family, x).unwrap(), &data, spec, &cfg).unwrap().total
            };
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            let err = (g[i] - fd).abs() / fd.abs().max(1e-6);
            assert!(err < 1e-5, "{family:?} p={} param {i}: analytic {} fd {fd} rel {err}", cfg.p, g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, family) in [ModelFamily::Invariant8, ModelFamily::Stretch8, ModelFamily::MooneyRivlin]
            .into_iter()
            .enumerate()
        {
            for p in [0.5, 1.0, 1.5, 2.0] {
                for spec in [LossSpec::normalized(), LossSpec::raw()] {
                    fd_check(family, PenaltyConfig::new(p, 0.05), spec, seed as u64 * 31 + 7);
                }
            }
        }
        let norms = [0.5, 1.0, 2.0, 0.7, 1.1, 0.9, 3.0, 1.5];
        fd_check(ModelFamily::Stretch8, PenaltyConfig::new(1.0, 0.1).with_norms(norms), LossSpec::normalized(), 3);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(PenaltyConfig::new(1.0, -0.1).validate().is_err());
        assert!(PenaltyConfig::new(-1.0, 0.1).validate().is_err());
        assert!(PenaltyConfig::new(1.0, 0.1).with_norms([0.0; 8]).validate().is_err());
    }

    proptest! {
        #[test]
        fn breakdown_is_additive(w1 in 0.0f64..2.0, w5 in 0.0f64..2.0, p in 0.0f64..4.0, alpha in 0.0f64..3.0) {
            let d = mr_data();
            let b = total_loss(&ParamVector::mooney_rivlin(w1, w5), &d, Normalization::MaxStress, &PenaltyConfig::new(p, alpha)).unwrap();
            let sum = b.data_tension + b.data_compression + b.data_shear + b.penalty;
            prop_assert!((b.total - sum).abs() < 1e-12);
        }

        #[test]
        fn normalized_loss_is_scale_invariant(amps in proptest::array::uniform8(0.0f64..1.0), probe in proptest::array::uniform8(0.0f64..1.0), c in 0.1f64..10.0) {
            let truth = ParamVector::stretch(amps);
            prop_assume!(amps.iter().any(|&a| a > 1e-3));
            let d = generate_synthetic(&truth, &SyntheticRanges::default(), 10, None).unwrap();
            let model = ParamVector::stretch(probe);
            let base = data_loss(&model, &d, Normalization::MaxStress).unwrap().total;
            let scaled = data_loss(&ParamVector::stretch(probe.map(|w| c * w)), &d.scaled(c).unwrap(), Normalization::MaxStress).unwrap().total;
            prop_assert!((base - scaled).abs() <= 1e-10 * (1.0 + base.abs()));
        }

        #[test]
        fn total_loss_nondecreasing_in_alpha(w1 in 0.0f64..2.0, w5 in 0.0f64..2.0, p in 0.0f64..4.0, a in 0.0f64..3.0, da in 0.0f64..3.0) {
            let d = mr_data();
            let x = ParamVector::mooney_rivlin(w1, w5);
            let lo = total_loss(&x, &d, Normalization::MaxStress, &PenaltyConfig::new(p, a)).unwrap().total;
            let hi = total_loss(&x, &d, Normalization::MaxStress, &PenaltyConfig::new(p, a + da)).unwrap().total;
            prop_assert!(hi >= lo);
        }

        #[test]
        fn penalty_nonincreasing_in_p_inside_unit_ball(amps in proptest::array::uniform8(0.0f64..1.0), p in 0.01f64..4.0, dp in 0.0f64..4.0) {
            let x = ParamVector::stretch(amps);
            let lo = penalty(&x, &PenaltyConfig::new(p, 1.0));
            let hi = penalty(&x, &PenaltyConfig::new(p + dp, 1.0));
            prop_assert!(hi <= lo + 1e-12);
        }

        #[test]
        fn l0_penalty_is_scale_invariant(amps in proptest::array::uniform8(0.0f64..1.0), c in 0.5f64..100.0) {
            let x = ParamVector::stretch(amps.map(|a| if a < 0.3 { 0.0 } else { a }));
            let y = ParamVector::stretch(x.amplitudes.map(|a| c * a));
            let cfg = PenaltyConfig::new(0.0, 0.7);
            prop_assert_eq!(penalty(&x, &cfg), penalty(&y, &cfg));
        }
    }
}
