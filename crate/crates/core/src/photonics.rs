//! Physical-layer models: faint-pulse source, polarization encoding, lossy fiber
//! and a pair of imperfect gated detectors.
//!
//! Polarization is reduced to a `(bit, basis)` pair. Measuring in the preparation
//! basis reads the bit; measuring in the other basis gives a uniformly random
//! outcome. All photons of one pulse carry the same encoding.

use core::fmt;

use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Basis {
    /// Horizontal (0) / vertical (1).
    Rectilinear,
    /// −45° (0) / +45° (1).
    Diagonal,
}

impl Basis {
    pub fn random(rng: &mut SimRng) -> Basis {
        if rng.bit() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }

    /// Polarization angle in degrees used to encode `bit` in this basis.
    pub fn polarization_degrees(self, bit: bool) -> i16 {
        match (self, bit) {
            (Basis::Rectilinear, false) => 0,
            (Basis::Rectilinear, true) => 90,
            (Basis::Diagonal, false) => -45,
            (Basis::Diagonal, true) => 45,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pulse {
    pub photon_count: u32,
    pub bit: bool,
    pub basis: Basis,
}

impl Pulse {
    pub fn is_empty(&self) -> bool {
        self.photon_count == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum PhotonicsError {
    #[error("{name} = {value} is outside its valid range")]
    OutOfRange { name: &'static str, value: f64 },
}

fn check(name: &'static str, value: f64, ok: bool) -> Result<(), PhotonicsError> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(PhotonicsError::OutOfRange { name, value })
    }
}

/// Photon-number statistics of Alice's source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceModel {
    /// Attenuated laser: Poisson photon number with mean `mu`.
    Poisson { mu: f64 },
    /// Every pulse carries exactly this many photons. Used as an ideal test source.
    Fixed { photons: u32 },
}

impl SourceModel {
    pub fn poisson(mu: f64) -> Result<Self, PhotonicsError> {
        check("mu", mu, mu >= 0.0)?;
        Ok(SourceModel::Poisson { mu })
    }

    pub fn single_photon() -> Self {
        SourceModel::Fixed { photons: 1 }
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        match *self {
            SourceModel::Poisson { mu } => check("mu", mu, mu >= 0.0),
            SourceModel::Fixed { .. } => Ok(()),
        }
    }

    /// Mean photon number per pulse.
    pub fn mean(&self) -> f64 {
        match *self {
            SourceModel::Poisson { mu } => mu,
            SourceModel::Fixed { photons } => f64::from(photons),
        }
    }
}

impl fmt::Display for SourceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceModel::Poisson { mu } => write!(f, "poisson(mu={mu})"),
            SourceModel::Fixed { photons } => write!(f, "fixed({photons})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberChannel {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    /// Bit-flip probability at matched-basis measurement (misalignment and drift).
    pub excess_flip_prob: f64,
}

impl FiberChannel {
    /// Standard telecom fiber in the 1550 nm window.
    pub const DB_PER_KM_1550NM: f64 = 0.2;

    pub fn new(
        length_km: f64,
        attenuation_db_per_km: f64,
        excess_flip_prob: f64,
    ) -> Result<Self, PhotonicsError> {
        let channel = Self {
            length_km,
            attenuation_db_per_km,
            excess_flip_prob,
        };
        channel.validate()?;
        Ok(channel)
    }

    pub fn lossless() -> Self {
        Self {
            length_km: 0.0,
            attenuation_db_per_km: 0.0,
            excess_flip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        check("length_km", self.length_km, self.length_km >= 0.0)?;
        check(
            "attenuation_db_per_km",
            self.attenuation_db_per_km,
            self.attenuation_db_per_km >= 0.0,
        )?;
        check(
            "excess_flip_prob",
            self.excess_flip_prob,
            (0.0..=0.5).contains(&self.excess_flip_prob),
        )
    }

    /// Probability that one photon survives the fiber: `10^(−α·L/10)`.
    pub fn survival_probability(&self) -> f64 {
        libm::pow(10.0, -self.attenuation_db_per_km * self.length_km / 10.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorPair {
    pub efficiency: f64,
    /// Per detector, per gate.
    pub dark_count_prob: f64,
}

impl DetectorPair {
    pub fn new(efficiency: f64, dark_count_prob: f64) -> Result<Self, PhotonicsError> {
        let d = Self {
            efficiency,
            dark_count_prob,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        check(
            "efficiency",
            self.efficiency,
            (0.0..=1.0).contains(&self.efficiency),
        )?;
        check(
            "dark_count_prob",
            self.dark_count_prob,
            (0.0..1.0).contains(&self.dark_count_prob),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClickOutcome {
    NoClick,
    Click(bool),
    DoubleClick,
}

impl ClickOutcome {
    pub fn bit(self) -> Option<bool> {
        match self {
            ClickOutcome::Click(b) => Some(b),
            _ => None,
        }
    }
}

/// Poisson variates of mean at most this are drawn by a single inversion.
const POISSON_CHUNK: f64 = 64.0;

fn poisson_inversion(mu: f64, rng: &mut SimRng) -> u32 {
    let u = rng.uniform();
    let mut term = libm::exp(-mu);
    let mut cdf = term;
    let mut k = 0u32;
    while u >= cdf {
        k += 1;
        term *= mu / f64::from(k);
        if term == 0.0 && f64::from(k) > mu {
            // Remaining tail mass is below double precision.
            break;
        }
        cdf += term;
    }
    k
}

/// Draws the photon number of one pulse.
pub fn sample_photon_count(source: &SourceModel, rng: &mut SimRng) -> u32 {
    match *source {
        SourceModel::Fixed { photons } => photons,
        SourceModel::Poisson { mu } => {
            // Sum of independent Poisson variates is Poisson, so large means are
            // split into chunks that keep exp(-mu) well inside f64 range.
            let mut remaining = mu;
            let mut total = 0u32;
            while remaining > 0.0 {
                let part = remaining.min(POISSON_CHUNK);
                total = total.saturating_add(poisson_inversion(part, rng));
                remaining -= part;
            }
            total
        }
    }
}

/// Per-photon independent loss; bit and basis are untouched.
pub fn transmit(pulse: Pulse, channel: &FiberChannel, rng: &mut SimRng) -> Pulse {
    let survival = channel.survival_probability();
    let survivors = if survival >= 1.0 {
        pulse.photon_count
    } else {
        (0..pulse.photon_count)
            .filter(|_| rng.bernoulli(survival))
            .count() as u32
    };
    Pulse {
        photon_count: survivors,
        ..pulse
    }
}

/// Bob's gated measurement of one pulse in `bob_basis`.
///
/// Each photon is detected with probability `efficiency`. A detected photon goes to
/// the detector of the encoded bit (flipped with `flip_prob`) when the bases match
/// and to a uniformly random detector otherwise. Each detector also fires on its own
/// with `dark_count_prob`.
pub fn measure(
    pulse: &Pulse,
    bob_basis: Basis,
    detectors: &DetectorPair,
    flip_prob: f64,
    rng: &mut SimRng,
) -> ClickOutcome {
    let mut fired = [false; 2];
    for _ in 0..pulse.photon_count {
        if !rng.bernoulli(detectors.efficiency) {
            continue;
        }
        let bit = if bob_basis == pulse.basis {
            pulse.bit ^ rng.bernoulli(flip_prob)
        } else {
            rng.bit()
        };
        fired[usize::from(bit)] = true;
    }
    for slot in &mut fired {
        if rng.bernoulli(detectors.dark_count_prob) {
            *slot = true;
        }
    }
    match fired {
        [false, false] => ClickOutcome::NoClick,
        [true, false] => ClickOutcome::Click(false),
        [false, true] => ClickOutcome::Click(true),
        [true, true] => ClickOutcome::DoubleClick,
    }
}

/// A single photon at a 50/50 beamsplitter: which exit it leaves by is the bit.
pub fn beamsplitter_random_bit(rng: &mut SimRng) -> bool {
    let photon = Pulse {
        photon_count: 1,
        bit: false,
        basis: Basis::Diagonal,
    };
    match measure(&photon, Basis::Rectilinear, &DetectorPair::ideal(), 0.0, rng) {
        ClickOutcome::Click(b) => b,
        _ => unreachable!("ideal detectors always register a single photon"),
    }
}
