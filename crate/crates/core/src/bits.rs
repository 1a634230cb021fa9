//! Bit-string helpers. Keys are `Vec<bool>`, one element per bit.

use alloc::vec::Vec;

/// Packs bits MSB-first into bytes; the last byte is zero-padded.
pub fn pack(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
        })
        .collect()
}

/// Inverse of [`pack`], keeping the first `len` bits.
pub fn unpack(bytes: &[u8], len: usize) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&byte| (0..8).map(move |i| byte & (0x80 >> i) != 0))
        .take(len)
        .collect()
}

/// Interprets up to 64 bits MSB-first as an integer.
pub fn to_u64(bits: &[bool]) -> u64 {
    debug_assert!(bits.len() <= 64);
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

pub fn xor(a: &[bool], b: &[bool]) -> Vec<bool> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

pub fn parity(bits: impl IntoIterator<Item = bool>) -> bool {
    bits.into_iter().fold(false, |acc, b| acc ^ b)
}

pub fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}
