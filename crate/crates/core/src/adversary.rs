//! Eavesdropping strategies acting on pulses in transit, and the ledger of what
//! Eve holds.
//!
//! Eve's knowledge only becomes bits once the bases are announced:
//! photons stored by a photon-number-splitting attack are then measured in the
//! right basis and always yield the key bit, while intercept-resend measurements
//! are useful exactly when Eve's basis guess was right.

use alloc::collections::BTreeMap;
use core::fmt;

use crate::photonics::{Basis, Pulse};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EveStrategy {
    NoAttack,
    /// Measure a `fraction` of the pulses in a random basis and resend a single
    /// photon carrying the result.
    InterceptResend { fraction: f64 },
    /// Keep one photon of every multi-photon pulse until the bases are public.
    PhotonNumberSplit,
}

impl EveStrategy {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        match *self {
            EveStrategy::InterceptResend { fraction }
                if !(fraction.is_finite() && (0.0..=1.0).contains(&fraction)) =>
            {
                Err(AdversaryError::InvalidFraction(fraction))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for EveStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EveStrategy::NoAttack => f.write_str("none"),
            EveStrategy::InterceptResend { fraction } => write!(f, "intercept:{fraction}"),
            EveStrategy::PhotonNumberSplit => f.write_str("pns"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum AdversaryError {
    #[error("intercept fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
}

/// What Eve kept from one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EveRecord {
    /// An untouched photon held in quantum memory.
    StoredPhoton { bit: bool, basis: Basis },
    /// The result of measuring in `basis_guess`.
    Measured { bit: bool, basis_guess: Basis },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EveLedger {
    stored: BTreeMap<usize, EveRecord>,
    known_bits: BTreeMap<usize, bool>,
}

impl EveLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stored(&self) -> &BTreeMap<usize, EveRecord> {
        &self.stored
    }

    pub fn known_bits(&self) -> &BTreeMap<usize, bool> {
        &self.known_bits
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    fn record(&mut self, index: usize, record: EveRecord) {
        let previous = self.stored.insert(index, record);
        debug_assert!(previous.is_none(), "ledger entries are append-only");
    }

    /// Converts stored material into known key bits once the bases are public.
    ///
    /// `announced_bases[i]` is the basis announced for pulse `i`; only indices in
    /// `sifted_indices` are kept. Calling this again with the same announcement
    /// gives the same map.
    pub fn finalize_knowledge(
        &mut self,
        announced_bases: &[Basis],
        sifted_indices: &[usize],
    ) -> &BTreeMap<usize, bool> {
        self.known_bits.clear();
        for &index in sifted_indices {
            let Some(record) = self.stored.get(&index) else {
                continue;
            };
            let announced = announced_bases[index];
            match *record {
                // Measuring the stored photon in the announced basis is deterministic.
                EveRecord::StoredPhoton { bit, basis } if basis == announced => {
                    self.known_bits.insert(index, bit);
                }
                EveRecord::StoredPhoton { .. } => {}
                EveRecord::Measured { bit, basis_guess } if basis_guess == announced => {
                    self.known_bits.insert(index, bit);
                }
                EveRecord::Measured { .. } => {}
            }
        }
        &self.known_bits
    }
}

/// Applies `strategy` to pulse number `index` on its way from Alice to the fiber.
pub fn intercept(
    index: usize,
    pulse: Pulse,
    strategy: &EveStrategy,
    ledger: &mut EveLedger,
    rng: &mut SimRng,
) -> Pulse {
    match *strategy {
        EveStrategy::NoAttack => pulse,
        EveStrategy::InterceptResend { fraction } => {
            if pulse.is_empty() || !rng.bernoulli(fraction) {
                return pulse;
            }
            let basis_guess = Basis::random(rng);
            let bit = if basis_guess == pulse.basis {
                pulse.bit
            } else {
                rng.bit()
            };
            ledger.record(index, EveRecord::Measured { bit, basis_guess });
            Pulse {
                photon_count: 1,
                bit,
                basis: basis_guess,
            }
        }
        EveStrategy::PhotonNumberSplit => {
            if pulse.photon_count < 2 {
                return pulse;
            }
            ledger.record(
                index,
                EveRecord::StoredPhoton {
                    bit: pulse.bit,
                    basis: pulse.basis,
                },
            );
            Pulse {
                photon_count: pulse.photon_count - 1,
                ..pulse
            }
        }
    }
}

/// Fraction of the sifted key Eve knows; zero for an empty key.
pub fn eve_information(known_bits: &BTreeMap<usize, bool>, sifted_indices: &[usize]) -> f64 {
    if sifted_indices.is_empty() {
        return 0.0;
    }
    let known = sifted_indices
        .iter()
        .filter(|i| known_bits.contains_key(i))
        .count();
    known as f64 / sifted_indices.len() as f64
}
