//! The BB84 session engine.
//!
//! A session runs the quantum phase pulse by pulse, sifts on the announced bases,
//! tests a random sample of the sifted key for errors, then reconciles and
//! amplifies what is left. Every classical message goes through a
//! [`PublicChannel`] whose segments are tagged from the pre-shared
//! authentication pool; the bits spent there are set against the key produced.

pub mod channel;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

pub use channel::{Party, PublicChannel, PublicMessage};

use crate::adversary::{self, AdversaryError, EveLedger, EveStrategy};
use crate::auth::{AuthError, AuthKeyPool, Authenticator, KeyLedger};
use crate::bits;
use crate::photonics::{
    self, Basis, ClickOutcome, DetectorPair, FiberChannel, PhotonicsError, Pulse, SourceModel,
};
use crate::postprocess::{
    self, privacy_amplify, AttackModel, CascadeParams, HashSeed, PostprocessError, SecretKey,
};
use crate::rng::SimRng;

/// What to do when both detectors fire in one gate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DoubleClickPolicy {
    /// Assign a uniformly random bit.
    #[default]
    RandomBit,
    /// Treat the gate as empty.
    Discard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub n_pulses: usize,
    pub source: SourceModel,
    pub channel: FiberChannel,
    pub detectors: DetectorPair,
    /// Fraction of the sifted key disclosed for the error-rate test.
    pub sample_fraction: f64,
    pub attack_model: AttackModel,
    pub security_margin_bits: usize,
    pub seed: u64,
    pub eve: EveStrategy,
    pub double_click: DoubleClickPolicy,
    pub cascade: CascadeParams,
    /// Size of the pre-shared authentication secret.
    pub auth_pool_bits: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n_pulses: 1_000_000,
            source: SourceModel::Poisson { mu: 0.1 },
            channel: FiberChannel {
                length_km: 10.0,
                attenuation_db_per_km: FiberChannel::DB_PER_KM_1550NM,
                excess_flip_prob: 0.01,
            },
            detectors: DetectorPair {
                efficiency: 0.1,
                dark_count_prob: 1e-5,
            },
            sample_fraction: 0.1,
            attack_model: AttackModel::Coherent,
            security_margin_bits: 30,
            seed: 0,
            eve: EveStrategy::NoAttack,
            double_click: DoubleClickPolicy::RandomBit,
            cascade: CascadeParams::default(),
            auth_pool_bits: AuthKeyPool::DEFAULT_BITS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Photonics(#[from] PhotonicsError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("n_pulses must be positive")]
    NoPulses,
    #[error("sample_fraction {0} must lie strictly between 0 and 1")]
    SampleFraction(f64),
    #[error("cascade needs at least one pass with a positive block factor")]
    Cascade,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_pulses == 0 {
            return Err(ConfigError::NoPulses);
        }
        let f = self.sample_fraction;
        if !(f.is_finite() && f > 0.0 && f < 1.0) {
            return Err(ConfigError::SampleFraction(f));
        }
        let c = &self.cascade;
        if c.passes == 0
            || !(c.first_block_factor.is_finite() && c.first_block_factor > 0.0)
            || !(c.min_error_rate.is_finite() && c.min_error_rate > 0.0)
            || c.min_block == 0
        {
            return Err(ConfigError::Cascade);
        }
        self.source.validate()?;
        self.channel.validate()?;
        self.detectors.validate()?;
        self.eve.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PulseRecord {
    pub index: usize,
    pub alice_bit: bool,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub outcome: ClickOutcome,
}

/// The public part of a pulse record: bases and whether Bob registered a bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisAnnouncement {
    pub index: usize,
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub clicked: bool,
}

impl PulseRecord {
    pub fn announcement(&self) -> BasisAnnouncement {
        BasisAnnouncement {
            index: self.index,
            alice_basis: self.alice_basis,
            bob_basis: self.bob_basis,
            clicked: matches!(self.outcome, ClickOutcome::Click(_)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumPhase {
    pub records: Vec<PulseRecord>,
    pub eve_ledger: EveLedger,
}

/// Emits, attacks, transmits and measures `config.n_pulses` pulses.
///
/// Alice, Bob, the fiber and Eve each draw from their own child stream of `rng`.
pub fn run_quantum_phase(config: &SessionConfig, rng: &SimRng) -> QuantumPhase {
    let mut alice = rng.split("alice");
    let mut bob = rng.split("bob");
    let mut fiber = rng.split("fiber");
    let mut eve = rng.split("eve");
    let mut ledger = EveLedger::new();
    let mut records = Vec::with_capacity(config.n_pulses);

    for index in 0..config.n_pulses {
        let alice_bit = alice.bit();
        let alice_basis = Basis::random(&mut alice);
        let pulse = Pulse {
            photon_count: photonics::sample_photon_count(&config.source, &mut alice),
            bit: alice_bit,
            basis: alice_basis,
        };
        let pulse = adversary::intercept(index, pulse, &config.eve, &mut ledger, &mut eve);
        let pulse = photonics::transmit(pulse, &config.channel, &mut fiber);
        let bob_basis = Basis::random(&mut bob);
        let mut outcome = photonics::measure(
            &pulse,
            bob_basis,
            &config.detectors,
            config.channel.excess_flip_prob,
            &mut bob,
        );
        if outcome == ClickOutcome::DoubleClick && config.double_click == DoubleClickPolicy::RandomBit {
            outcome = ClickOutcome::Click(bob.bit());
        }
        records.push(PulseRecord {
            index,
            alice_bit,
            alice_basis,
            bob_basis,
            outcome,
        });
    }
    QuantumPhase {
        records,
        eve_ledger: ledger,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiftedKeys {
    pub alice_bits: Vec<bool>,
    pub bob_bits: Vec<bool>,
    pub source_indices: Vec<usize>,
}

impl SiftedKeys {
    pub fn len(&self) -> usize {
        self.source_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_indices.is_empty()
    }

    pub fn errors(&self) -> usize {
        bits::hamming(&self.alice_bits, &self.bob_bits)
    }
}

/// Pulse indices kept by sifting. Sees only the public announcement.
pub fn sift_indices(announcements: impl IntoIterator<Item = BasisAnnouncement>) -> Vec<usize> {
    announcements
        .into_iter()
        .filter(|a| a.clicked && a.alice_basis == a.bob_basis)
        .map(|a| a.index)
        .collect()
}

/// Keeps the clicked pulses measured in Alice's basis.
pub fn sift(records: &[PulseRecord]) -> SiftedKeys {
    let source_indices = sift_indices(records.iter().map(PulseRecord::announcement));
    let mut alice_bits = Vec::with_capacity(source_indices.len());
    let mut bob_bits = Vec::with_capacity(source_indices.len());
    for &i in &source_indices {
        let r = &records[i];
        alice_bits.push(r.alice_bit);
        bob_bits.push(r.outcome.bit().expect("sifted records are clicks"));
    }
    SiftedKeys {
        alice_bits,
        bob_bits,
        source_indices,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QberEstimate {
    pub e_hat: f64,
    pub sample_size: usize,
    /// Disclosed positions within the sifted key, ascending.
    pub sample_positions: Vec<usize>,
    pub remaining: SiftedKeys,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("sifted key too short to sample for errors")]
    EmptySample,
    #[error("sample fraction {0} must lie strictly between 0 and 1")]
    SampleFraction(f64),
}

/// Discloses and removes a uniformly random `⌈fraction·len⌉` positions.
pub fn estimate_qber(
    sifted: &SiftedKeys,
    fraction: f64,
    coins: &mut SimRng,
) -> Result<QberEstimate, ProtocolError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ProtocolError::SampleFraction(fraction));
    }
    let len = sifted.len();
    let sample_size = libm::ceil(fraction * len as f64) as usize;
    if sample_size == 0 {
        return Err(ProtocolError::EmptySample);
    }
    // Partial Fisher-Yates: the first `sample_size` slots are a uniform subset.
    let mut order: Vec<usize> = (0..len).collect();
    for i in 0..sample_size {
        let j = i + coins.below(len - i);
        order.swap(i, j);
    }
    let mut sample_positions = order[..sample_size].to_vec();
    sample_positions.sort_unstable();

    let mut in_sample = alloc::vec![false; len];
    let mut mismatches = 0usize;
    for &p in &sample_positions {
        in_sample[p] = true;
        mismatches += usize::from(sifted.alice_bits[p] != sifted.bob_bits[p]);
    }
    let mut remaining = SiftedKeys::default();
    for p in (0..len).filter(|&p| !in_sample[p]) {
        remaining.alice_bits.push(sifted.alice_bits[p]);
        remaining.bob_bits.push(sifted.bob_bits[p]);
        remaining.source_indices.push(sifted.source_indices[p]);
    }
    Ok(QberEstimate {
        e_hat: mismatches as f64 / sample_size as f64,
        sample_size,
        sample_positions,
        remaining,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionOutcome {
    Success,
    AbortQber,
    AbortReconciliation,
    /// Too few sifted bits to run the error test or reconciliation.
    AbortTooShort,
}

impl fmt::Display for SessionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionOutcome::Success => "success",
            SessionOutcome::AbortQber => "abort_qber",
            SessionOutcome::AbortReconciliation => "abort_reconciliation",
            SessionOutcome::AbortTooShort => "abort_too_short",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionReport {
    pub seed: u64,
    pub pulses_sent: usize,
    /// Gates where at least one detector fired.
    pub clicks: usize,
    /// Gates that yielded a raw key bit.
    pub raw_len: usize,
    pub sifted_len: usize,
    pub sample_size: usize,
    pub e_hat: f64,
    pub leak_ec_bits: usize,
    pub final_len: usize,
    pub eve_info_fraction: f64,
    pub auth_bits_consumed: usize,
    pub key_ledger: KeyLedger,
    pub outcome: SessionOutcome,
}

impl SessionReport {
    pub fn secret_growth(&self) -> i64 {
        self.key_ledger.secret_growth()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot authenticate the public channel: {0}")]
    Auth(#[from] AuthError),
}

/// Everything a session leaves behind; [`run_session`] keeps only the report.
#[derive(Clone, Debug)]
pub struct SessionOutput {
    pub report: SessionReport,
    pub alice_key: Option<SecretKey>,
    pub bob_key: Option<SecretKey>,
    pub quantum: QuantumPhase,
    pub sifted: SiftedKeys,
    pub eve_known_bits: BTreeMap<usize, bool>,
    pub public_channel: PublicChannel,
    pub auth_pool: AuthKeyPool,
}

pub fn run_session(config: &SessionConfig) -> Result<SessionReport, SessionError> {
    run_session_with_key(config).map(|out| out.report)
}

fn encode_indices(indices: impl IntoIterator<Item = usize>) -> Vec<u8> {
    indices
        .into_iter()
        .flat_map(|i| (i as u32).to_be_bytes())
        .collect()
}

fn basis_byte(b: Basis) -> u8 {
    match b {
        Basis::Rectilinear => b'+',
        Basis::Diagonal => b'x',
    }
}

/// Runs a full session and returns the shared key along with the report.
pub fn run_session_with_key(config: &SessionConfig) -> Result<SessionOutput, SessionError> {
    config.validate()?;
    let root = SimRng::from_seed(config.seed);
    let mut coins = root.split("public");
    let preshared = root.split("preshared").bits(config.auth_pool_bits);
    let mut auth = Authenticator::new(AuthKeyPool::new(preshared));
    let mut public = PublicChannel::new();

    let mut quantum = run_quantum_phase(config, &root);
    let records = &quantum.records;
    let clicks = records
        .iter()
        .filter(|r| r.outcome != ClickOutcome::NoClick)
        .count();
    let raw: Vec<&PulseRecord> = records
        .iter()
        .filter(|r| matches!(r.outcome, ClickOutcome::Click(_)))
        .collect();

    // Sifting: Bob names his detections and bases, Alice answers which to keep.
    let mut announcement = Vec::with_capacity(raw.len() * 5);
    for r in &raw {
        announcement.extend_from_slice(&(r.index as u32).to_be_bytes());
        announcement.push(basis_byte(r.bob_basis));
    }
    public.send(Party::Bob, "detections", announcement);
    let keep: Vec<bool> = raw.iter().map(|r| r.alice_basis == r.bob_basis).collect();
    public.send(Party::Alice, "sift", bits::pack(&keep));
    let sifted = sift(records);
    public.seal(&mut auth)?;

    let alice_bases: Vec<Basis> = records.iter().map(|r| r.alice_basis).collect();
    let eve_known_bits = quantum
        .eve_ledger
        .finalize_knowledge(&alice_bases, &sifted.source_indices)
        .clone();
    let eve_info_fraction = adversary::eve_information(&eve_known_bits, &sifted.source_indices);

    let mut report = SessionReport {
        seed: config.seed,
        pulses_sent: config.n_pulses,
        clicks,
        raw_len: raw.len(),
        sifted_len: sifted.len(),
        sample_size: 0,
        e_hat: 0.0,
        leak_ec_bits: 0,
        final_len: 0,
        eve_info_fraction,
        auth_bits_consumed: 0,
        key_ledger: KeyLedger::default(),
        outcome: SessionOutcome::AbortTooShort,
    };
    let mut alice_key = None;
    let mut bob_key = None;

    match estimate_qber(&sifted, config.sample_fraction, &mut coins) {
        Err(_) => {}
        Ok(estimate) => {
            let sample_bits = |keys: &[bool]| -> Vec<bool> {
                estimate.sample_positions.iter().map(|&p| keys[p]).collect()
            };
            public.send(
                Party::Alice,
                "sample-positions",
                encode_indices(estimate.sample_positions.iter().copied()),
            );
            public.send(Party::Alice, "sample-bits", bits::pack(&sample_bits(&sifted.alice_bits)));
            public.send(Party::Bob, "sample-bits", bits::pack(&sample_bits(&sifted.bob_bits)));
            report.sample_size = estimate.sample_size;
            report.e_hat = estimate.e_hat;
            // The abort notice travels in the estimation segment.
            if estimate.e_hat >= config.attack_model.threshold() {
                public.send(Party::Alice, "abort", b"qber".to_vec());
                report.outcome = SessionOutcome::AbortQber;
            }
            public.seal(&mut auth)?;

            if report.outcome != SessionOutcome::AbortQber {
                if let Some((a, b)) = distill(config, &estimate, &mut coins, &mut public, &mut report)? {
                    alice_key = Some(a);
                    bob_key = Some(b);
                }
                public.seal(&mut auth)?;
            }
        }
    }

    let mut pool = auth.into_pool();
    pool.ledger_mut().produced_bits = report.final_len as u64;
    report.key_ledger = *pool.ledger();
    report.auth_bits_consumed = pool.cursor();

    Ok(SessionOutput {
        report,
        alice_key,
        bob_key,
        quantum,
        sifted,
        eve_known_bits,
        public_channel: public,
        auth_pool: pool,
    })
}

// Reconciliation and privacy amplification. Messages go to `public`; the caller
// seals them.
fn distill(
    config: &SessionConfig,
    estimate: &QberEstimate,
    coins: &mut SimRng,
    public: &mut PublicChannel,
    report: &mut SessionReport,
) -> Result<Option<(SecretKey, SecretKey)>, SessionError> {
    let remaining = &estimate.remaining;
    let correction = match postprocess::error_correct(
        &remaining.alice_bits,
        &remaining.bob_bits,
        estimate.e_hat,
        &config.cascade,
        coins,
    ) {
        Ok(c) => c,
        Err(PostprocessError::KeyTooShort(_)) => {
            public.send(Party::Alice, "abort", b"short".to_vec());
            report.outcome = SessionOutcome::AbortTooShort;
            return Ok(None);
        }
        Err(e) => unreachable!("reconciliation inputs are checked above: {e}"),
    };
    public.send(Party::Alice, "reconciliation", correction.transcript.encode());
    public.send(Party::Bob, "verification", alloc::vec![u8::from(correction.verified)]);
    report.leak_ec_bits = correction.leaked_bits;
    if !correction.verified {
        report.outcome = SessionOutcome::AbortReconciliation;
        return Ok(None);
    }

    let n = remaining.len();
    let ell = postprocess::final_key_length(
        n,
        estimate.e_hat,
        correction.leaked_bits,
        config.attack_model,
        config.security_margin_bits,
    );
    let seed = HashSeed::random(n, ell, coins);
    let mut body = (ell as u32).to_be_bytes().to_vec();
    body.extend_from_slice(&bits::pack(seed.bits()));
    public.send(Party::Alice, "amplification", body);

    let amplify = |key: &[bool]| privacy_amplify(key, ell, &seed, config.seed).expect("seed sized for key");
    let alice_key = amplify(&remaining.alice_bits);
    let bob_key = amplify(&correction.corrected_key);
    debug_assert_eq!(alice_key, bob_key);
    report.final_len = ell;
    report.outcome = SessionOutcome::Success;
    Ok(Some((alice_key, bob_key)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(n_pulses: usize, seed: u64) -> SessionConfig {
        SessionConfig {
            n_pulses,
            source: SourceModel::single_photon(),
            channel: FiberChannel::lossless(),
            detectors: DetectorPair::ideal(),
            seed,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn ideal_quantum_phase_all_clicks() {
        let cfg = ideal(2000, 1);
        let q = run_quantum_phase(&cfg, &SimRng::from_seed(1));
        assert_eq!(q.records.len(), 2000);
        assert!(q.records.iter().all(|r| matches!(r.outcome, ClickOutcome::Click(_))));
        assert!(q.records.iter().enumerate().all(|(i, r)| r.index == i));
    }

    #[test]
    fn sift_empty_and_single_basis() {
        assert!(sift(&[]).is_empty());
        let records: Vec<PulseRecord> = (0..50)
            .map(|i| PulseRecord {
                index: i,
                alice_bit: i % 3 == 0,
                alice_basis: Basis::Diagonal,
                bob_basis: Basis::Diagonal,
                outcome: if i % 5 == 0 {
                    ClickOutcome::NoClick
                } else {
                    ClickOutcome::Click(i % 3 == 0)
                },
            })
            .collect();
        let s = sift(&records);
        assert_eq!(s.len(), 40);
        assert_eq!(s.errors(), 0);
        assert!(s.source_indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn double_clicks_are_not_sifted_under_discard() {
        let records = [PulseRecord {
            index: 0,
            alice_bit: true,
            alice_basis: Basis::Rectilinear,
            bob_basis: Basis::Rectilinear,
            outcome: ClickOutcome::DoubleClick,
        }];
        assert!(sift(&records).is_empty());
    }

    #[test]
    fn qber_on_identical_keys() {
        let keys = SiftedKeys {
            alice_bits: alloc::vec![true; 100],
            bob_bits: alloc::vec![true; 100],
            source_indices: (0..100).collect(),
        };
        let est = estimate_qber(&keys, 0.1, &mut SimRng::from_seed(3)).unwrap();
        assert_eq!(est.e_hat, 0.0);
        assert_eq!(est.sample_size, 10);
        assert_eq!(est.remaining.len(), 90);
        for p in &est.sample_positions {
            assert!(!est.remaining.source_indices.contains(p));
        }
    }

    #[test]
    fn qber_errors() {
        let mut c = SimRng::from_seed(0);
        assert_eq!(
            estimate_qber(&SiftedKeys::default(), 0.1, &mut c),
            Err(ProtocolError::EmptySample)
        );
        assert_eq!(
            estimate_qber(&SiftedKeys::default(), 1.0, &mut c),
            Err(ProtocolError::SampleFraction(1.0))
        );
    }

    #[test]
    fn ideal_session_succeeds() {
        let cfg = ideal(4000, 5);
        let out = run_session_with_key(&cfg).unwrap();
        let r = out.report;
        assert_eq!(r.outcome, SessionOutcome::Success);
        assert_eq!(r.e_hat, 0.0);
        assert!(r.final_len > 0);
        assert_eq!(out.alice_key, out.bob_key);
        assert_eq!(out.alice_key.unwrap().len(), r.final_len);
        assert_eq!(r.auth_bits_consumed, 256);
        assert!(r.secret_growth() > 0);
        assert_eq!(out.public_channel.verify(), Ok(()));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = ideal(10, 0);
        cfg.sample_fraction = 0.0;
        assert!(matches!(run_session(&cfg), Err(SessionError::Config(_))));
        cfg.sample_fraction = 0.1;
        cfg.n_pulses = 0;
        assert!(matches!(run_session(&cfg), Err(SessionError::Config(ConfigError::NoPulses))));
    }

    #[test]
    fn exhausted_pool_halts_session() {
        let mut cfg = ideal(1000, 1);
        cfg.auth_pool_bits = 100;
        assert!(matches!(
            run_session(&cfg),
            Err(SessionError::Auth(AuthError::KeyExhausted { .. }))
        ));
    }

    #[test]
    fn tiny_session_is_too_short() {
        let cfg = SessionConfig {
            n_pulses: 10,
            seed: 2,
            ..SessionConfig::default()
        };
        let r = run_session(&cfg).unwrap();
        assert_eq!(r.outcome, SessionOutcome::AbortTooShort);
        assert_eq!(r.final_len, 0);
        assert!(r.secret_growth() < 0);
    }
}
