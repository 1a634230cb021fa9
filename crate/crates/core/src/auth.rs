//! Wegman-Carter authentication of the public channel.
//!
//! Tags are polynomial-evaluation hashes over GF(2^64) (reduction polynomial
//! `x^64 + x^4 + x^3 + x + 1`) encrypted with a fresh 64-bit one-time pad. The hash
//! key is drawn once per session; every tag after that costs 64 bits of pad.
//!
//! A message of `t` blocks is hashed as
//! `m_1·k^t + m_2·k^(t-1) + … + m_t·k + len`, where blocks are 8 bytes big-endian
//! (the last one zero-padded) and `len` is the byte length. Two distinct messages
//! collide for at most `t + 1` of the 2^64 keys.

use alloc::vec::Vec;

use crate::bits;

/// Low word of the reduction polynomial (`x^4 + x^3 + x + 1`).
pub const REDUCTION: u64 = 0x1B;

pub const TAG_BITS: usize = 64;

/// Multiplication in GF(2^64).
pub fn gf64_mul(mut a: u64, mut b: u64) -> u64 {
    let mut acc = 0u64;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        let carry = a >> 63;
        a <<= 1;
        a ^= REDUCTION & carry.wrapping_neg();
    }
    acc
}

fn blocks(message: &[u8]) -> impl Iterator<Item = u64> + '_ {
    message.chunks(8).map(|chunk| {
        let mut block = [0u8; 8];
        block[..chunk.len()].copy_from_slice(chunk);
        u64::from_be_bytes(block)
    })
}

/// Keyed polynomial hash with a trailing length block; no pad.
pub fn poly_hash(message: &[u8], key: u64) -> u64 {
    let acc = blocks(message).fold(0u64, |acc, m| gf64_mul(acc ^ m, key));
    acc ^ message.len() as u64
}

pub fn compute_tag(message: &[u8], hash_key: u64, otp: u64) -> u64 {
    poly_hash(message, hash_key) ^ otp
}

/// Upper bound on the probability that a forged message of `message_len` bytes
/// carries a valid tag.
pub fn forgery_bound(message_len: usize) -> f64 {
    let t = message_len.div_ceil(8);
    (t as f64 + 1.0) / 18_446_744_073_709_551_616.0
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthenticatedMessage {
    pub payload: Vec<u8>,
    pub tag: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("authentication key exhausted: requested {requested} bits, {remaining} remain")]
    KeyExhausted { requested: usize, remaining: usize },
    #[error("malformed authenticated frame")]
    MalformedFrame,
    #[error("authentication tag mismatch")]
    TagMismatch,
}

impl AuthenticatedMessage {
    pub fn new(payload: Vec<u8>, hash_key: u64, otp: u64) -> Self {
        let tag = compute_tag(&payload, hash_key, otp);
        Self { payload, tag }
    }

    /// Wire framing: 4-byte big-endian payload length, payload, 8-byte tag.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 12);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.tag.to_be_bytes());
        out
    }

    /// Parses one frame and returns it with the number of bytes consumed.
    pub fn decode(frame: &[u8]) -> Result<(Self, usize), AuthError> {
        let header: [u8; 4] = frame
            .get(..4)
            .and_then(|h| h.try_into().ok())
            .ok_or(AuthError::MalformedFrame)?;
        let len = u32::from_be_bytes(header) as usize;
        let end = 4 + len;
        let payload = frame.get(4..end).ok_or(AuthError::MalformedFrame)?.to_vec();
        let tag: [u8; 8] = frame
            .get(end..end + 8)
            .and_then(|t| t.try_into().ok())
            .ok_or(AuthError::MalformedFrame)?;
        Ok((
            Self {
                payload,
                tag: u64::from_be_bytes(tag),
            },
            end + 8,
        ))
    }
}

/// Checks a tag. The comparison touches every bit regardless of where the first
/// difference is.
pub fn verify_tag(msg: &AuthenticatedMessage, hash_key: u64, otp: u64) -> bool {
    let expected = compute_tag(&msg.payload, hash_key, otp).to_be_bytes();
    let received = msg.tag.to_be_bytes();
    let diff = expected
        .iter()
        .zip(received.iter())
        .fold(0u8, |acc, (a, b)| acc | (a ^ b));
    core::hint::black_box(diff) == 0
}

/// Key bits consumed for authentication versus secret bits produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KeyLedger {
    pub consumed_bits: u64,
    pub produced_bits: u64,
}

impl KeyLedger {
    /// Produced minus consumed; negative when a session spent more than it made.
    pub fn secret_growth(&self) -> i64 {
        self.produced_bits as i64 - self.consumed_bits as i64
    }
}

/// Shared secret reserved for authentication. Bits are handed out in order and
/// never twice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthKeyPool {
    bits: Vec<bool>,
    cursor: usize,
    ledger: KeyLedger,
}

impl AuthKeyPool {
    /// Pre-shared secret size used when nothing else is configured.
    pub const DEFAULT_BITS: usize = 300;

    pub fn new(bits: Vec<bool>) -> Self {
        Self {
            bits,
            cursor: 0,
            ledger: KeyLedger::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.cursor
    }

    pub fn ledger(&self) -> &KeyLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut KeyLedger {
        &mut self.ledger
    }

    /// Appends fresh secret bits, e.g. from a finished session.
    pub fn replenish(&mut self, bits: &[bool]) {
        self.bits.extend_from_slice(bits);
    }

    pub fn consume(&mut self, n_bits: usize) -> Result<Vec<bool>, AuthError> {
        if n_bits > self.remaining() {
            return Err(AuthError::KeyExhausted {
                requested: n_bits,
                remaining: self.remaining(),
            });
        }
        let out = self.bits[self.cursor..self.cursor + n_bits].to_vec();
        self.cursor += n_bits;
        self.ledger.consumed_bits += n_bits as u64;
        Ok(out)
    }
}

/// Pad and hash key used for one tag; kept so the receiver side can verify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TagKeys {
    pub hash_key: u64,
    pub otp: u64,
}

/// Tags outgoing messages from an [`AuthKeyPool`]: the first tag draws the session
/// hash key and a pad (128 bits), later tags draw only a pad (64 bits).
#[derive(Clone, Debug)]
pub struct Authenticator {
    pool: AuthKeyPool,
    hash_key: Option<u64>,
}

impl Authenticator {
    pub fn new(pool: AuthKeyPool) -> Self {
        Self {
            pool,
            hash_key: None,
        }
    }

    pub fn pool(&self) -> &AuthKeyPool {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut AuthKeyPool {
        &mut self.pool
    }

    pub fn into_pool(self) -> AuthKeyPool {
        self.pool
    }

    /// Bits the next tag will consume.
    pub fn next_cost(&self) -> usize {
        if self.hash_key.is_some() {
            TAG_BITS
        } else {
            2 * TAG_BITS
        }
    }

    pub fn next_keys(&mut self) -> Result<TagKeys, AuthError> {
        let needed = self.next_cost();
        if needed > self.pool.remaining() {
            return Err(AuthError::KeyExhausted {
                requested: needed,
                remaining: self.pool.remaining(),
            });
        }
        let hash_key = match self.hash_key {
            Some(k) => k,
            None => {
                let k = bits::to_u64(&self.pool.consume(TAG_BITS)?);
                self.hash_key = Some(k);
                k
            }
        };
        let otp = bits::to_u64(&self.pool.consume(TAG_BITS)?);
        Ok(TagKeys { hash_key, otp })
    }

    pub fn seal(&mut self, payload: Vec<u8>) -> Result<(AuthenticatedMessage, TagKeys), AuthError> {
        let keys = self.next_keys()?;
        Ok((AuthenticatedMessage::new(payload, keys.hash_key, keys.otp), keys))
    }
}
