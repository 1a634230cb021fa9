//! Privacy amplification by binary Toeplitz hashing.
//!
//! An `ℓ × n` Toeplitz matrix is fixed by `n + ℓ − 1` seed bits. Entry `(j, i)`
//! (row `j < ℓ`, column `i < n`, both 0-based) is `seed[(i − j) + (ℓ − 1)]`, so every
//! diagonal is constant. Output bit `j` is the GF(2) inner product of row `j` with
//! the key. The family is universal₂: distinct keys collide with probability
//! exactly `2^−ℓ` over a uniform seed.

use alloc::vec::Vec;

use super::PostprocessError;
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashSeed {
    bits: Vec<bool>,
}

impl HashSeed {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Uniform seed for compressing `n` bits to `ell`.
    pub fn random(n: usize, ell: usize, coins: &mut SimRng) -> Self {
        Self::new(coins.bits(seed_len(n, ell)))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

pub fn seed_len(n: usize, ell: usize) -> usize {
    (n + ell).saturating_sub(1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    pub bits: Vec<bool>,
    /// Seed of the session that produced the key.
    pub provenance: u64,
}

impl SecretKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Compresses `key` to `ell` bits with the Toeplitz matrix given by `seed`.
pub fn privacy_amplify(
    key: &[bool],
    ell: usize,
    seed: &HashSeed,
    provenance: u64,
) -> Result<SecretKey, PostprocessError> {
    let n = key.len();
    if ell > n {
        return Err(PostprocessError::OutputTooLong { ell, n });
    }
    if ell == 0 {
        return Ok(SecretKey {
            bits: Vec::new(),
            provenance,
        });
    }
    let expected = seed_len(n, ell);
    if seed.len() != expected {
        return Err(PostprocessError::SeedLengthMismatch {
            expected,
            actual: seed.len(),
        });
    }
    let ones: Vec<usize> = key
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    let s = seed.bits();
    let bits = (0..ell)
        .map(|j| {
            let offset = ell - 1 - j;
            ones.iter().fold(false, |acc, &i| acc ^ s[i + offset])
        })
        .collect();
    Ok(SecretKey { bits, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    // Builds the matrix entry by entry and multiplies over GF(2).
    fn matrix_oracle(key: &[bool], ell: usize, seed: &[bool]) -> Vec<bool> {
        let n = key.len();
        let mut m = vec![vec![false; n]; ell];
        for (j, row) in m.iter_mut().enumerate() {
            for (i, entry) in row.iter_mut().enumerate() {
                *entry = seed[(i as isize - j as isize + ell as isize - 1) as usize];
            }
        }
        // Toeplitz: constant along diagonals.
        for j in 1..ell {
            for i in 1..n {
                assert_eq!(m[j][i], m[j - 1][i - 1]);
            }
        }
        m.iter()
            .map(|row| row.iter().zip(key).fold(false, |acc, (&a, &k)| acc ^ (a & k)))
            .collect()
    }

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn small_vector_matches_oracle() {
        let key = bits("101");
        let seed = bits("0110");
        let expected = matrix_oracle(&key, 2, &seed);
        // Rows are [1 1 0] and [0 1 1].
        assert_eq!(expected, bits("11"));
        let out = privacy_amplify(&key, 2, &HashSeed::new(seed), 0).unwrap();
        assert_eq!(out.bits, expected);
    }

    #[test]
    fn random_vectors_match_oracle() {
        let mut rng = SimRng::from_seed(77);
        for _ in 0..50 {
            let n = 1 + rng.below(40);
            let ell = rng.below(n + 1);
            let key = rng.bits(n);
            let seed = HashSeed::random(n, ell, &mut rng);
            let out = privacy_amplify(&key, ell, &seed, 0).unwrap();
            if ell > 0 {
                assert_eq!(out.bits, matrix_oracle(&key, ell, seed.bits()));
            } else {
                assert!(out.is_empty());
            }
        }
    }

    #[test]
    fn zero_length_output() {
        let out = privacy_amplify(&[true, false], 0, &HashSeed::new(vec![]), 9).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.provenance, 9);
    }

    #[test]
    fn seed_length_checked() {
        assert_eq!(
            privacy_amplify(&[true; 5], 2, &HashSeed::new(vec![true; 5]), 0),
            Err(PostprocessError::SeedLengthMismatch {
                expected: 6,
                actual: 5
            })
        );
        assert!(matches!(
            privacy_amplify(&[true; 2], 3, &HashSeed::new(vec![true; 4]), 0),
            Err(PostprocessError::OutputTooLong { .. })
        ));
    }
}
