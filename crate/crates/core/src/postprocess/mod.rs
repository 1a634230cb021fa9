//! Classical key distillation: secret-fraction bounds, Cascade reconciliation and
//! Toeplitz privacy amplification.

mod cascade;
mod toeplitz;

pub use cascade::{error_correct, CascadeParams, CorrectionResult, ReconciliationTranscript};
pub use toeplitz::{privacy_amplify, HashSeed, SecretKey};

use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum PostprocessError {
    #[error("{0} is outside the valid domain")]
    Domain(f64),
    #[error("keys differ in length ({alice} vs {bob})")]
    LengthMismatch { alice: usize, bob: usize },
    #[error("key of {0} bits is too short to reconcile (minimum {min})", min = cascade::MIN_KEY_BITS)]
    KeyTooShort(usize),
    #[error("verification hash mismatch after reconciliation ({leaked_bits} bits disclosed)")]
    ReconciliationFailure { leaked_bits: usize },
    #[error("hash seed has {actual} bits, expected {expected}")]
    SeedLengthMismatch { expected: usize, actual: usize },
    #[error("requested output length {ell} exceeds input length {n}")]
    OutputTooLong { ell: usize, n: usize },
}

/// Eve's assumed power; selects the secret-fraction bound and abort threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AttackModel {
    /// Eve interacts with one qubit at a time.
    Individual,
    /// Eve may act coherently on the whole key.
    #[default]
    Coherent,
}

impl AttackModel {
    /// QBER at which the secret fraction reaches zero.
    pub fn threshold(self) -> f64 {
        match self {
            // (1 - 1/√2) / 2
            AttackModel::Individual => 0.146_446_609_406_726_24,
            // root of 1 - 2h(e)
            AttackModel::Coherent => 0.110_027_864_438_359_55,
        }
    }

    /// Eve's information per sifted bit at error rate `e`.
    pub fn eve_information(self, e: f64) -> f64 {
        match self {
            AttackModel::Coherent => h(e),
            AttackModel::Individual => 1.0 - h(0.5 + libm::sqrt(e * (1.0 - e))),
        }
    }
}

impl fmt::Display for AttackModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackModel::Individual => "individual",
            AttackModel::Coherent => "coherent",
        })
    }
}

// Unchecked; callers guarantee 0 <= x <= 1.
fn h(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * libm::log2(x) - (1.0 - x) * libm::log2(1.0 - x)
    }
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64, PostprocessError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(PostprocessError::Domain(x));
    }
    Ok(h(x))
}

/// Asymptotic secret bits per sifted bit with ideal reconciliation.
///
/// Coherent: `1 − 2h(e)`. Individual: `h(½ + √(e(1−e))) − h(e)`. Clamped at 0.
pub fn secret_fraction(e: f64, model: AttackModel) -> Result<f64, PostprocessError> {
    if !(0.0..=0.5).contains(&e) {
        return Err(PostprocessError::Domain(e));
    }
    Ok((1.0 - model.eve_information(e) - h(e)).max(0.0))
}

/// Length of the final key after privacy amplification.
///
/// `ℓ = max(0, ⌊n − n·τ(e) − leaked_ec − margin⌋)` with `τ` Eve's information per
/// bit under `model`. `e_hat` is clamped into `[0, 0.5]`.
pub fn final_key_length(
    n: usize,
    e_hat: f64,
    leaked_ec: usize,
    model: AttackModel,
    margin: usize,
) -> usize {
    let e = e_hat.clamp(0.0, 0.5);
    let n_f = n as f64;
    let ell = n_f - n_f * model.eve_information(e) - leaked_ec as f64 - margin as f64;
    if ell <= 0.0 {
        0
    } else {
        libm::floor(ell) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_reference_points() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        // mpmath at 30 digits: h(0.11) = 0.499915958164527...
        assert!((binary_entropy(0.11).unwrap() - 0.499_915_958).abs() < 1e-5);
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn noiseless_fraction_is_one() {
        for m in [AttackModel::Individual, AttackModel::Coherent] {
            assert_eq!(secret_fraction(0.0, m).unwrap(), 1.0);
            assert!(secret_fraction(0.51, m).is_err());
        }
    }

    #[test]
    fn thresholds_are_roots() {
        for m in [AttackModel::Individual, AttackModel::Coherent] {
            let t = m.threshold();
            assert!(secret_fraction(t - 1e-6, m).unwrap() > 0.0);
            assert!(secret_fraction(t + 1e-6, m).unwrap() == 0.0);
        }
    }

    #[test]
    fn final_length_noiseless_arithmetic() {
        assert_eq!(final_key_length(2000, 0.0, 64, AttackModel::Coherent, 30), 1906);
        assert_eq!(final_key_length(2000, 0.0, 64, AttackModel::Individual, 30), 1906);
        assert_eq!(final_key_length(10, 0.0, 64, AttackModel::Coherent, 30), 0);
    }

    #[test]
    fn ideal_leak_reduces_to_secret_fraction() {
        let n = 100_000;
        for m in [AttackModel::Individual, AttackModel::Coherent] {
            for e in [0.01, 0.03, 0.05, 0.08] {
                let leak = libm::ceil(n as f64 * h(e)) as usize;
                let ell = final_key_length(n, e, leak, m, 30) as f64;
                let expected = n as f64 * secret_fraction(e, m).unwrap() - 30.0;
                assert!((ell - expected).abs() <= 2.0, "{m} {e}: {ell} vs {expected}");
            }
        }
    }
}
