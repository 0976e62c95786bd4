//! Incompressible deformation states for the three loading protocols.
//!
//! Uniaxial loading uses `λ₁ = λ`, `λ₂ = λ₃ = λ^(-1/2)`; simple shear uses
//! `λ₁,₂ = (±γ + √(4+γ²))/2`, `λ₃ = 1`. Invariants come from the closed forms
//! for each path rather than from a general 3×3 pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    UniaxialTension,
    UniaxialCompression,
    SimpleShear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub mode: LoadMode,
    /// Stretch `λ` for uniaxial modes, shear amount `γ` for simple shear.
    pub control: f64,
}

/// Uniaxial tension/compression at stretch `lambda`. `λ = 1` is tagged as tension.
pub fn uniaxial_state(lambda: f64) -> Result<DeformationState> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!(
            "uniaxial stretch must be finite and positive, got {lambda}"
        )));
    }
    let lateral = lambda.sqrt().recip();
    let mode = if lambda >= 1.0 {
        LoadMode::UniaxialTension
    } else {
        LoadMode::UniaxialCompression
    };
    Ok(DeformationState {
        lambda1: lambda,
        lambda2: lateral,
        lambda3: lateral,
        i1: lambda * lambda + 2.0 / lambda,
        i2: 2.0 * lambda + 1.0 / (lambda * lambda),
        i3: 1.0,
        mode,
        control: lambda,
    })
}

/// Simple shear by amount `gamma`.
pub fn shear_state(gamma: f64) -> Result<DeformationState> {
    if !gamma.is_finite() {
        return Err(Error::Domain(format!("shear amount must be finite, got {gamma}")));
    }
    let lambda1 = shear_principal_stretch(gamma);
    let i = 3.0 + gamma * gamma;
    Ok(DeformationState {
        lambda1,
        lambda2: lambda1.recip(),
        lambda3: 1.0,
        i1: i,
        i2: i,
        i3: 1.0,
        mode: LoadMode::SimpleShear,
        control: gamma,
    })
}

/// Major principal stretch of simple shear, `(γ + √(4+γ²))/2`.
pub fn shear_principal_stretch(gamma: f64) -> f64 {
    0.5 * (gamma + (4.0 + gamma * gamma).sqrt())
}

/// Invariants `(I₁, I₂, I₃)` from principal stretches with the incompressible form of `I₂`.
pub fn invariants_from_stretches(l1: f64, l2: f64, l3: f64) -> (f64, f64, f64) {
    let i1 = l1 * l1 + l2 * l2 + l3 * l3;
    let i2 = (l1 * l1).recip() + (l2 * l2).recip() + (l3 * l3).recip();
    let j = l1 * l2 * l3;
    (i1, i2, j * j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_states() {
        let s = uniaxial_state(1.0).unwrap();
        assert_eq!((s.i1, s.i2, s.i3), (3.0, 3.0, 1.0));
        assert_eq!((s.lambda1, s.lambda2, s.lambda3), (1.0, 1.0, 1.0));
        assert_eq!(s.mode, LoadMode::UniaxialTension);

        let s = shear_state(0.0).unwrap();
        assert_eq!((s.i1, s.i2), (3.0, 3.0));
        assert_eq!((s.lambda1, s.lambda2, s.lambda3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn uniaxial_examples() {
        let s = uniaxial_state(2.0).unwrap();
        assert_abs_diff_eq!(s.i1, 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.i2, 4.25, epsilon = 1e-14);
        assert_abs_diff_eq!(s.lambda2, 1.0 / 2f64.sqrt(), epsilon = 1e-14);

        let c = uniaxial_state(0.5).unwrap();
        assert_abs_diff_eq!(c.i1, 4.25, epsilon = 1e-14);
        assert_abs_diff_eq!(c.i2, 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.lambda2, 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(c.mode, LoadMode::UniaxialCompression);
    }

    #[test]
    fn shear_examples() {
        let s = shear_state(0.5).unwrap();
        assert_abs_diff_eq!(s.i1, 3.25, epsilon = 1e-14);
        assert_abs_diff_eq!(s.i2, 3.25, epsilon = 1e-14);
        assert_abs_diff_eq!(s.lambda1, 1.280776406404415, epsilon = 1e-12);
        let s = shear_state(0.2).unwrap();
        assert_abs_diff_eq!(s.i1, 3.04, epsilon = 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(uniaxial_state(0.0), Err(Error::Domain(_))));
        assert!(matches!(uniaxial_state(-1.0), Err(Error::Domain(_))));
        assert!(matches!(uniaxial_state(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(shear_state(f64::INFINITY), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn uniaxial_matches_generic_invariants(lambda in 0.5f64..2.0) {
            let s = uniaxial_state(lambda).unwrap();
            let (i1, i2, i3) = invariants_from_stretches(s.lambda1, s.lambda2, s.lambda3);
            prop_assert!((s.i1 - i1).abs() < 1e-12);
            prop_assert!((s.i2 - i2).abs() < 1e-12);
            prop_assert!((i3 - 1.0).abs() < 1e-12);
            prop_assert!((s.lambda1 * s.lambda2 * s.lambda3 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn shear_stretches_are_reciprocal(gamma in 0.0f64..1.0) {
            let s = shear_state(gamma).unwrap();
            prop_assert!((s.lambda1 * s.lambda2 - 1.0).abs() < 1e-12);
            let (i1, i2, i3) = invariants_from_stretches(s.lambda1, s.lambda2, s.lambda3);
            prop_assert!((s.i1 - i1).abs() < 1e-12);
            prop_assert!((s.i2 - i2).abs() < 1e-12);
            prop_assert!((i3 - 1.0).abs() < 1e-12);
        }
    }
}
