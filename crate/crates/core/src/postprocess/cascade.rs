//! Cascade interactive reconciliation.
//!
//! Each pass shuffles the key with a public random permutation, splits it into
//! blocks and compares block parities. A block whose parities disagree holds an
//! odd number of errors; binary search on half-block parities finds one of them.
//! Correcting a bit changes the parity of the block holding it in every other
//! pass, so those blocks are re-examined until no disagreement remains.
//!
//! Only Alice's parities go on the public record; Bob answers with which half to
//! descend into, which the parity itself already implies.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use rand::RngCore;

use super::PostprocessError;
use crate::auth::poly_hash;
use crate::bits;
use crate::rng::SimRng;

pub(super) const MIN_KEY_BITS: usize = 16;

/// Bits of the final verification hash.
pub const VERIFICATION_BITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeParams {
    pub passes: usize,
    /// First-pass block size is `⌈first_block_factor / e⌉`.
    pub first_block_factor: f64,
    /// Floor on the error estimate used for block sizing.
    pub min_error_rate: f64,
    pub min_block: usize,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self {
            passes: 4,
            first_block_factor: 0.73,
            min_error_rate: 0.01,
            min_block: 4,
        }
    }
}

impl CascadeParams {
    pub fn first_block_size(&self, e_hat: f64, n: usize) -> usize {
        let e = e_hat.max(self.min_error_rate);
        let k = libm::ceil(self.first_block_factor / e) as usize;
        k.clamp(self.min_block.min(n), n)
    }
}

/// Everything reconciliation writes to the public channel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReconciliationTranscript {
    pub block_sizes: Vec<usize>,
    /// Alice's disclosed parities, in the order they were sent.
    pub parities: Vec<bool>,
    pub verification_key: u64,
    pub verification_hash: u64,
}

impl ReconciliationTranscript {
    /// Key-dependent bits on the record: parities plus the verification hash.
    pub fn disclosed_bits(&self) -> usize {
        self.parities.len() + VERIFICATION_BITS
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.block_sizes.len() as u32).to_be_bytes());
        for &b in &self.block_sizes {
            out.extend_from_slice(&(b as u32).to_be_bytes());
        }
        out.extend_from_slice(&(self.parities.len() as u32).to_be_bytes());
        out.extend_from_slice(&bits::pack(&self.parities));
        out.extend_from_slice(&self.verification_key.to_be_bytes());
        out.extend_from_slice(&self.verification_hash.to_be_bytes());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionResult {
    /// Bob's key after correction.
    pub corrected_key: Vec<bool>,
    pub leaked_bits: usize,
    pub passes: usize,
    pub verified: bool,
    /// Bits Bob flipped.
    pub flips: usize,
    pub transcript: ReconciliationTranscript,
}

impl CorrectionResult {
    pub fn require_verified(self) -> Result<Self, PostprocessError> {
        if self.verified {
            Ok(self)
        } else {
            Err(PostprocessError::ReconciliationFailure {
                leaked_bits: self.leaked_bits,
            })
        }
    }
}

struct Pass {
    // pass position -> key index
    order: Vec<usize>,
    // key index -> pass position
    position: Vec<usize>,
    block: usize,
    alice_parity: Vec<bool>,
}

impl Pass {
    fn range(&self, b: usize) -> (usize, usize) {
        let lo = b * self.block;
        (lo, (lo + self.block).min(self.order.len()))
    }

    fn parity(&self, key: &[bool], lo: usize, hi: usize) -> bool {
        bits::parity(self.order[lo..hi].iter().map(|&i| key[i]))
    }

    fn block_of(&self, key_index: usize) -> usize {
        self.position[key_index] / self.block
    }
}

struct Reconciler<'a> {
    alice: &'a [bool],
    bob: Vec<bool>,
    passes: Vec<Pass>,
    parities: Vec<bool>,
    flips: usize,
}

impl Reconciler<'_> {
    fn disclose(&mut self, pass: usize, lo: usize, hi: usize) -> bool {
        let p = self.passes[pass].parity(self.alice, lo, hi);
        self.parities.push(p);
        p
    }

    fn is_odd(&self, pass: usize, block: usize) -> bool {
        let pass_ref = &self.passes[pass];
        let (lo, hi) = pass_ref.range(block);
        pass_ref.alice_parity[block] != pass_ref.parity(&self.bob, lo, hi)
    }

    // Binary search inside a block whose parities disagree.
    fn bisect(&mut self, pass: usize, block: usize) -> usize {
        let (mut lo, mut hi) = self.passes[pass].range(block);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let alice = self.disclose(pass, lo, mid);
            if alice != self.passes[pass].parity(&self.bob, lo, mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        self.passes[pass].order[lo]
    }

    fn resolve(&mut self, mut queue: VecDeque<(usize, usize)>) {
        while let Some((pass, block)) = queue.pop_front() {
            if !self.is_odd(pass, block) {
                continue;
            }
            let index = self.bisect(pass, block);
            self.bob[index] = !self.bob[index];
            self.flips += 1;
            for other in 0..self.passes.len() {
                if other == pass {
                    continue;
                }
                let b = self.passes[other].block_of(index);
                if self.is_odd(other, b) {
                    queue.push_back((other, b));
                }
            }
        }
    }
}

/// Reconciles Bob's key against Alice's.
///
/// `coins` is the shared public randomness (permutations and the verification
/// hash key). The result is `verified` when the 64-bit hashes of both keys agree
/// after the last pass.
pub fn error_correct(
    alice_key: &[bool],
    bob_key: &[bool],
    e_hat: f64,
    params: &CascadeParams,
    coins: &mut SimRng,
) -> Result<CorrectionResult, PostprocessError> {
    if alice_key.len() != bob_key.len() {
        return Err(PostprocessError::LengthMismatch {
            alice: alice_key.len(),
            bob: bob_key.len(),
        });
    }
    let n = alice_key.len();
    if n < MIN_KEY_BITS {
        return Err(PostprocessError::KeyTooShort(n));
    }
    if !e_hat.is_finite() || !(0.0..=1.0).contains(&e_hat) {
        return Err(PostprocessError::Domain(e_hat));
    }

    let first = params.first_block_size(e_hat, n);
    let mut rec = Reconciler {
        alice: alice_key,
        bob: bob_key.to_vec(),
        passes: Vec::with_capacity(params.passes),
        parities: Vec::new(),
        flips: 0,
    };
    let mut block_sizes = Vec::with_capacity(params.passes);

    for pass in 0..params.passes {
        let block = first.saturating_mul(1usize << pass.min(63)).min(n);
        block_sizes.push(block);
        let order = coins.permutation(n);
        let mut position = alloc::vec![0; n];
        for (pos, &idx) in order.iter().enumerate() {
            position[idx] = pos;
        }
        let blocks = n.div_ceil(block);
        rec.passes.push(Pass {
            order,
            position,
            block,
            alice_parity: Vec::with_capacity(blocks),
        });
        for b in 0..blocks {
            let (lo, hi) = rec.passes[pass].range(b);
            let p = rec.disclose(pass, lo, hi);
            rec.passes[pass].alice_parity.push(p);
        }
        let queue = (0..blocks).filter(|&b| rec.is_odd(pass, b)).map(|b| (pass, b)).collect();
        rec.resolve(queue);
    }

    let verification_key = coins.next_u64();
    let alice_hash = poly_hash(&bits::pack(alice_key), verification_key);
    let bob_hash = poly_hash(&bits::pack(&rec.bob), verification_key);
    let transcript = ReconciliationTranscript {
        block_sizes,
        parities: rec.parities,
        verification_key,
        verification_hash: alice_hash,
    };
    Ok(CorrectionResult {
        corrected_key: rec.bob,
        leaked_bits: transcript.disclosed_bits(),
        passes: params.passes,
        verified: alice_hash == bob_hash,
        flips: rec.flips,
        transcript,
    })
}
