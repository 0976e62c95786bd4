//! The two eight-term constitutive model families and their shared
//! Mooney–Rivlin special case.
//!
//! Terms are indexed `0..8`. For the invariant family, terms `0..4` act on
//! `I₁ − 3` and terms `4..8` on `I₂ − 3`, each row cycling through
//! linear, exponential, quadratic and exponential-quadratic activations.
//! Terms 1, 3, 5, 7 carry an inner exponent weight. For the stretch family
//! term `k` is `w_k Σᵢ (λᵢ^αₖ − 1)` with the fixed exponents
//! [`STRETCH_EXPONENTS`].
//!
//! Stresses are the nominal (first Piola–Kirchhoff) components with the
//! incompressibility pressure already eliminated: `P₁₁(λ)` under uniaxial
//! load with free lateral faces and `P₁₂(γ)` in simple shear.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{shear_principal_stretch, DeformationState, LoadMode};

pub const N_TERMS: usize = 8;
pub const N_EXPONENTS: usize = 4;
/// Largest free parameter count over all families (invariant family: 8 amplitudes + 4 exponents).
pub const MAX_FREE: usize = N_TERMS + N_EXPONENTS;

/// Fixed Ogden-type exponents of the stretch family.
pub const STRETCH_EXPONENTS: [f64; N_TERMS] = [2.0, 4.0, 6.0, 8.0, -2.0, -4.0, -6.0, -8.0];

/// Largest admissible argument of `exp` before a term is reported as overflowing.
pub const EXP_ARG_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Invariant8,
    Stretch8,
    MooneyRivlin,
}

impl ModelFamily {
    /// Number of free parameters in the flattened layout used by the optimizer.
    pub fn n_free(self) -> usize {
        match self {
            ModelFamily::Invariant8 => MAX_FREE,
            ModelFamily::Stretch8 | ModelFamily::MooneyRivlin => N_TERMS,
        }
    }

    /// Terms this family can activate.
    pub fn full_mask(self) -> TermMask {
        match self {
            ModelFamily::MooneyRivlin => TermMask::from_terms(&[0, 4]),
            _ => TermMask::all(),
        }
    }

    pub fn is_exponential_term(self, term: usize) -> bool {
        self == ModelFamily::Invariant8 && term % 2 == 1
    }

    /// Index into the exponent array for an exponential invariant term.
    pub fn exponent_slot(self, term: usize) -> Option<usize> {
        self.is_exponential_term(term).then_some(term / 2)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ModelFamily::Invariant8 => "inv8",
            ModelFamily::Stretch8 => "str8",
            ModelFamily::MooneyRivlin => "mr",
        }
    }

    /// Human-readable label of a term's activation.
    pub fn term_label(self, term: usize) -> String {
        match self {
            ModelFamily::Stretch8 => {
                format!("sum(lambda_i^{:+}) - 3", STRETCH_EXPONENTS[term] as i32)
            }
            _ => {
                let inv = if term < 4 { "I1" } else { "I2" };
                match term % 4 {
                    0 => format!("[{inv}-3]"),
                    1 => format!("exp(w*[{inv}-3])-1"),
                    2 => format!("[{inv}-3]^2"),
                    _ => format!("exp(w*[{inv}-3]^2)-1"),
                }
            }
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inv8" | "invariant8" | "invariant" => Ok(ModelFamily::Invariant8),
            "str8" | "stretch8" | "stretch" => Ok(ModelFamily::Stretch8),
            "mr" | "mooney-rivlin" | "mooneyrivlin" => Ok(ModelFamily::MooneyRivlin),
            other => Err(Error::Config(format!("unknown model family '{other}'"))),
        }
    }
}

/// Set of active terms, stored as a bitset over the eight terms.
///
/// Serialized as the list of active term numbers, 1-based.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct TermMask(u8);

impl TermMask {
    pub const fn all() -> Self {
        TermMask(0xff)
    }

    pub const fn empty() -> Self {
        TermMask(0)
    }

    pub const fn from_bits(bits: u8) -> Self {
        TermMask(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Builds a mask from 0-based term indices.
    pub fn from_terms(terms: &[usize]) -> Self {
        let mut m = TermMask::empty();
        for &t in terms {
            m = m.with(t);
        }
        m
    }

    pub fn from_active(active: [bool; N_TERMS]) -> Self {
        let mut m = TermMask::empty();
        for (t, &a) in active.iter().enumerate() {
            if a {
                m = m.with(t);
            }
        }
        m
    }

    pub fn active(self) -> [bool; N_TERMS] {
        std::array::from_fn(|t| self.contains(t))
    }

    pub fn contains(self, term: usize) -> bool {
        term < N_TERMS && self.0 & (1 << term) != 0
    }

    pub fn with(self, term: usize) -> Self {
        assert!(term < N_TERMS, "term index {term} out of range");
        TermMask(self.0 | (1 << term))
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn terms(self) -> impl Iterator<Item = usize> {
        (0..N_TERMS).filter(move |&t| self.contains(t))
    }

    pub fn is_subset_of(self, other: TermMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// All masks with exactly `k` active terms, in lexicographic order of their term lists.
    pub fn combinations(k: usize) -> Vec<TermMask> {
        let mut out = Vec::new();
        fn rec(start: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<TermMask>) {
            if cur.len() == k {
                out.push(TermMask::from_terms(cur));
                return;
            }
            for t in start..N_TERMS {
                cur.push(t);
                rec(t + 1, k, cur, out);
                cur.pop();
            }
        }
        if k <= N_TERMS {
            rec(0, k, &mut Vec::new(), &mut out);
        }
        out
    }

    /// Active term indices, used as the lexicographic tie-breaker.
    pub fn term_list(self) -> Vec<usize> {
        self.terms().collect()
    }
}

impl fmt::Debug for TermMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TermMask{:?}", self.terms().map(|t| t + 1).collect::<Vec<_>>())
    }
}

impl fmt::Display for TermMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms().map(|t| (t + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl From<TermMask> for Vec<usize> {
    fn from(m: TermMask) -> Self {
        m.terms().map(|t| t + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for TermMask {
    type Error = String;

    fn try_from(v: Vec<usize>) -> std::result::Result<Self, String> {
        let mut m = TermMask::empty();
        for t in v {
            if !(1..=N_TERMS).contains(&t) {
                return Err(format!("term number {t} outside 1..=8"));
            }
            m = m.with(t - 1);
        }
        Ok(m)
    }
}

/// Model weights for one family.
///
/// Invariant family amplitudes are the merged products `w₁,ₖw₂,ₖ` for the
/// non-exponential terms and the outer weights `w₂,ₖ` for the exponential
/// ones; `exponents` holds the inner weights `w₁,₂, w₁,₄, w₁,₆, w₁,₈`.
/// Stretch and Mooney–Rivlin parameter vectors carry no exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub family: ModelFamily,
    pub amplitudes: [f64; N_TERMS],
    pub exponents: [f64; N_EXPONENTS],
}

impl ParamVector {
    pub fn zeros(family: ModelFamily) -> Self {
        ParamVector {
            family,
            amplitudes: [0.0; N_TERMS],
            exponents: [0.0; N_EXPONENTS],
        }
    }

    pub fn mooney_rivlin(w1: f64, w5: f64) -> Self {
        let mut p = ParamVector::zeros(ModelFamily::MooneyRivlin);
        p.amplitudes[0] = w1;
        p.amplitudes[4] = w5;
        p
    }

    pub fn stretch(amplitudes: [f64; N_TERMS]) -> Self {
        ParamVector {
            family: ModelFamily::Stretch8,
            amplitudes,
            exponents: [0.0; N_EXPONENTS],
        }
    }

    pub fn invariant(amplitudes: [f64; N_TERMS], exponents: [f64; N_EXPONENTS]) -> Self {
        ParamVector {
            family: ModelFamily::Invariant8,
            amplitudes,
            exponents,
        }
    }

    /// Checks finiteness and the non-negativity constraint on every free weight.
    pub fn validate(&self) -> Result<()> {
        for (k, a) in self.amplitudes.iter().enumerate() {
            if !a.is_finite() || *a < 0.0 {
                return Err(Error::Config(format!(
                    "amplitude {} must be finite and non-negative, got {a}",
                    k + 1
                )));
            }
        }
        if self.family == ModelFamily::Invariant8 {
            for (j, e) in self.exponents.iter().enumerate() {
                if !e.is_finite() || *e < 0.0 {
                    return Err(Error::Config(format!(
                        "exponent weight {} must be finite and non-negative, got {e}",
                        2 * j + 2
                    )));
                }
            }
        }
        if self.family == ModelFamily::MooneyRivlin
            && (0..N_TERMS).any(|k| k != 0 && k != 4 && self.amplitudes[k] != 0.0)
        {
            return Err(Error::Config(
                "Mooney-Rivlin parameters may only set terms 1 and 5".into(),
            ));
        }
        Ok(())
    }

    /// Flattened free parameters: amplitudes, then exponents for the invariant family.
    pub fn to_free(&self) -> Vec<f64> {
        let mut v = self.amplitudes.to_vec();
        if self.family == ModelFamily::Invariant8 {
            v.extend_from_slice(&self.exponents);
        }
        v
    }

    pub fn from_free(family: ModelFamily, free: &[f64]) -> Result<Self> {
        if free.len() != family.n_free() {
            return Err(Error::Config(format!(
                "expected {} free parameters for {family}, got {}",
                family.n_free(),
                free.len()
            )));
        }
        let mut p = ParamVector::zeros(family);
        p.amplitudes.copy_from_slice(&free[..N_TERMS]);
        if family == ModelFamily::Invariant8 {
            p.exponents.copy_from_slice(&free[N_TERMS..]);
        }
        Ok(p)
    }

    /// Zeroes every amplitude outside `mask`.
    pub fn masked(mut self, mask: TermMask) -> Self {
        for k in 0..N_TERMS {
            if !mask.contains(k) {
                self.amplitudes[k] = 0.0;
            }
        }
        self
    }

    /// Re-expresses a Mooney–Rivlin vector in one of the eight-term families.
    pub fn embed_mooney_rivlin(&self, family: ModelFamily) -> Self {
        let mut p = ParamVector::zeros(family);
        p.amplitudes[0] = self.amplitudes[0];
        p.amplitudes[4] = self.amplitudes[4];
        p
    }

    /// Shear moduli `μₖ = αₖwₖ` of the stretch family.
    pub fn shear_moduli(&self) -> Option<[f64; N_TERMS]> {
        (self.family == ModelFamily::Stretch8)
            .then(|| std::array::from_fn(|k| STRETCH_EXPONENTS[k] * self.amplitudes[k]))
    }
}

/// Total stress and its additive split over the eight terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressEval {
    pub total: f64,
    pub per_term: [f64; N_TERMS],
}

/// Stress and its derivative with respect to the flattened free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PointEval {
    pub stress: f64,
    pub per_term: [f64; N_TERMS],
    pub grad: [f64; MAX_FREE],
}

struct InvariantTerm {
    /// ∂ψₖ/∂I
    dpsi: f64,
    /// ∂(∂ψₖ/∂I)/∂amplitude
    dpsi_da: f64,
    /// ∂(∂ψₖ/∂I)/∂exponent
    dpsi_de: f64,
}

fn checked_exp(term: usize, arg: f64) -> Result<f64> {
    if arg > EXP_ARG_LIMIT || !arg.is_finite() {
        return Err(Error::Overflow { term, argument: arg });
    }
    Ok(arg.exp())
}

fn invariant_term(term: usize, amp: f64, expo: f64, x: f64) -> Result<InvariantTerm> {
    Ok(match term % 4 {
        0 => InvariantTerm { dpsi: amp, dpsi_da: 1.0, dpsi_de: 0.0 },
        1 => {
            let e = checked_exp(term, expo * x)?;
            InvariantTerm {
                dpsi: amp * expo * e,
                dpsi_da: expo * e,
                dpsi_de: amp * e * (1.0 + expo * x),
            }
        }
        2 => InvariantTerm { dpsi: 2.0 * amp * x, dpsi_da: 2.0 * x, dpsi_de: 0.0 },
        _ => {
            let x2 = x * x;
            let e = checked_exp(term, expo * x2)?;
            InvariantTerm {
                dpsi: 2.0 * amp * expo * x * e,
                dpsi_da: 2.0 * expo * x * e,
                dpsi_de: 2.0 * amp * x * e * (1.0 + expo * x2),
            }
        }
    })
}

fn invariant_energy_term(term: usize, amp: f64, expo: f64, x: f64) -> Result<f64> {
    Ok(match term % 4 {
        0 => amp * x,
        1 => {
            checked_exp(term, expo * x)?;
            amp * (expo * x).exp_m1()
        }
        2 => amp * x * x,
        _ => {
            checked_exp(term, expo * x * x)?;
            amp * (expo * x * x).exp_m1()
        }
    })
}

fn terms_of(family: ModelFamily) -> &'static [usize] {
    match family {
        ModelFamily::MooneyRivlin => &[0, 4],
        _ => &[0, 1, 2, 3, 4, 5, 6, 7],
    }
}

/// Free energy `ψ` at a deformation state.
pub fn energy(params: &ParamVector, state: &DeformationState) -> Result<f64> {
    let mut psi = 0.0;
    match params.family {
        ModelFamily::Stretch8 => {
            for k in 0..N_TERMS {
                let a = STRETCH_EXPONENTS[k];
                let s = state.lambda1.powf(a) + state.lambda2.powf(a) + state.lambda3.powf(a) - 3.0;
                let v = params.amplitudes[k] * s;
                if !v.is_finite() {
                    return Err(Error::Overflow { term: k, argument: state.control });
                }
                psi += v;
            }
        }
        family => {
            for &k in terms_of(family) {
                let x = if k < 4 { state.i1 - 3.0 } else { state.i2 - 3.0 };
                let expo = family.exponent_slot(k).map_or(0.0, |j| params.exponents[j]);
                psi += invariant_energy_term(k, params.amplitudes[k], expo, x)?;
            }
        }
    }
    Ok(psi)
}

fn stretch_power(term: usize, base: f64, exponent: f64) -> Result<f64> {
    let v = base.powf(exponent);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { term, argument: exponent * base.ln() })
    }
}

pub(crate) fn eval_point(params: &ParamVector, mode: LoadMode, control: f64) -> Result<PointEval> {
    let mut out = PointEval {
        stress: 0.0,
        per_term: [0.0; N_TERMS],
        grad: [0.0; MAX_FREE],
    };
    match params.family {
        ModelFamily::Stretch8 => {
            for k in 0..N_TERMS {
                let a = STRETCH_EXPONENTS[k];
                let basis = match mode {
                    LoadMode::SimpleShear => {
                        let l = shear_principal_stretch(control);
                        a * (stretch_power(k, l, a + 1.0)? - stretch_power(k, l, 1.0 - a)?)
                            / (1.0 + l * l)
                    }
                    _ => {
                        let l = control;
                        a * (stretch_power(k, l, a)? - stretch_power(k, l, -0.5 * a)?) / l
                    }
                };
                out.grad[k] = basis;
                out.per_term[k] = params.amplitudes[k] * basis;
            }
        }
        family => {
            let (x1, x2, f1, f2) = match mode {
                LoadMode::SimpleShear => {
                    let x = control * control;
                    (x, x, 2.0 * control, 2.0 * control)
                }
                _ => {
                    let l = control;
                    let f = 2.0 * (l - 1.0 / (l * l));
                    (l * l + 2.0 / l - 3.0, 2.0 * l + 1.0 / (l * l) - 3.0, f, f / l)
                }
            };
            for &k in terms_of(family) {
                let (x, f) = if k < 4 { (x1, f1) } else { (x2, f2) };
                let slot = family.exponent_slot(k);
                let expo = slot.map_or(0.0, |j| params.exponents[j]);
                let t = invariant_term(k, params.amplitudes[k], expo, x)?;
                out.per_term[k] = f * t.dpsi;
                out.grad[k] = f * t.dpsi_da;
                if let Some(j) = slot {
                    out.grad[N_TERMS + j] = f * t.dpsi_de;
                }
            }
        }
    }
    out.stress = out.per_term.iter().sum();
    if !out.stress.is_finite() {
        return Err(Error::Overflow { term: N_TERMS, argument: control });
    }
    Ok(out)
}

fn check_stretch(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!("stretch must be finite and positive, got {lambda}")));
    }
    Ok(())
}

/// Uniaxial nominal stress `P₁₁(λ)` with its per-term split.
pub fn stress_uniaxial(params: &ParamVector, lambda: f64) -> Result<StressEval> {
    check_stretch(lambda)?;
    let e = eval_point(params, LoadMode::UniaxialTension, lambda)?;
    Ok(StressEval { total: e.stress, per_term: e.per_term })
}

/// Simple-shear nominal stress `P₁₂(γ)` with its per-term split.
pub fn stress_shear(params: &ParamVector, gamma: f64) -> Result<StressEval> {
    if !gamma.is_finite() {
        return Err(Error::Domain(format!("shear amount must be finite, got {gamma}")));
    }
    let e = eval_point(params, LoadMode::SimpleShear, gamma)?;
    Ok(StressEval { total: e.stress, per_term: e.per_term })
}

/// Stress for any loading mode; `control` is `λ` or `γ` accordingly.
pub fn stress(params: &ParamVector, mode: LoadMode, control: f64) -> Result<StressEval> {
    match mode {
        LoadMode::SimpleShear => stress_shear(params, control),
        _ => stress_uniaxial(params, control),
    }
}

/// `∂P/∂θ` over the flattened free parameters (`ParamVector::to_free` layout).
pub fn stress_gradient(params: &ParamVector, mode: LoadMode, control: f64) -> Result<Vec<f64>> {
    if mode != LoadMode::SimpleShear {
        check_stretch(control)?;
    } else if !control.is_finite() {
        return Err(Error::Domain(format!("shear amount must be finite, got {control}")));
    }
    let e = eval_point(params, mode, control)?;
    Ok(e.grad[..params.family.n_free()].to_vec())
}
