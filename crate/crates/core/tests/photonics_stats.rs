mod common;

use common::{binomial_sigma, passes_chi_square, poisson_pmf};
use qkd_core::photonics::{
    beamsplitter_random_bit, measure, sample_photon_count, transmit, Basis, ClickOutcome,
    DetectorPair, FiberChannel, Pulse, SourceModel,
};
use qkd_core::SimRng;

fn histogram(mu: f64, draws: usize, seed: u64) -> Vec<u64> {
    let src = SourceModel::poisson(mu).unwrap();
    let mut rng = SimRng::from_seed(seed);
    let mut hist = vec![0u64; 16];
    for _ in 0..draws {
        let n = sample_photon_count(&src, &mut rng) as usize;
        hist[n.min(15)] += 1;
    }
    hist
}

#[test]
fn poisson_at_mu_point_one_matches_reference_probabilities() {
    let draws = 1_000_000;
    let hist = histogram(0.1, draws, 1);
    let p0 = hist[0] as f64 / draws as f64;
    let p1 = hist[1] as f64 / draws as f64;
    let p2 = 1.0 - p0 - p1;
    assert!((p0 - 0.9048).abs() < 0.002, "P(0) = {p0}");
    assert!((p1 - 0.0905).abs() < 0.002, "P(1) = {p1}");
    assert!((p2 - 0.0047).abs() < 0.002, "P(>=2) = {p2}");
}

#[test]
fn poisson_pmf_within_five_sigma() {
    let draws = 1_000_000;
    for (i, mu) in [0.05, 0.1, 0.5].into_iter().enumerate() {
        let hist = histogram(mu, draws, 10 + i as u64);
        for n in 0..4u32 {
            let p = poisson_pmf(mu, n);
            let freq = hist[n as usize] as f64 / draws as f64;
            let sigma = binomial_sigma(p, draws).max(1.0 / draws as f64);
            assert!(
                (freq - p).abs() <= 5.0 * sigma,
                "mu={mu} n={n}: {freq} vs {p}"
            );
        }
    }
}

#[test]
fn poisson_moments_at_mu_one() {
    let draws = 1_000_000;
    let src = SourceModel::poisson(1.0).unwrap();
    let mut rng = SimRng::from_seed(3);
    let xs: Vec<f64> = (0..draws)
        .map(|_| f64::from(sample_photon_count(&src, &mut rng)))
        .collect();
    let mean = xs.iter().sum::<f64>() / draws as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws as f64;
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn single_photon_survival_is_binomial() {
    // 0.2 dB/km over 15.0515 km halves the power.
    let length = 10.0 * 2f64.log10() / 0.2;
    let ch = FiberChannel::new(length, 0.2, 0.0).unwrap();
    assert!((ch.survival_probability() - 0.5).abs() < 1e-12);
    let mut rng = SimRng::from_seed(4);
    let trials = 100_000;
    let pulse = Pulse {
        photon_count: 1,
        bit: false,
        basis: Basis::Rectilinear,
    };
    let survived = (0..trials)
        .filter(|_| transmit(pulse, &ch, &mut rng).photon_count == 1)
        .count();
    let freq = survived as f64 / trials as f64;
    assert!((freq - 0.5).abs() < 0.01, "{freq}");
}

#[test]
fn thinned_poisson_is_poisson() {
    let mu = 0.1;
    let ch = FiberChannel::new(15.0, 0.2, 0.0).unwrap();
    let p = ch.survival_probability();
    let thinned_mean = mu * p;
    let src = SourceModel::poisson(mu).unwrap();
    let mut rng = SimRng::from_seed(5);
    let mut fiber = SimRng::from_seed(6);
    let draws = 1_000_000;
    let mut hist = vec![0u64; 6];
    for _ in 0..draws {
        let pulse = Pulse {
            photon_count: sample_photon_count(&src, &mut rng),
            bit: true,
            basis: Basis::Diagonal,
        };
        let out = transmit(pulse, &ch, &mut fiber);
        hist[(out.photon_count as usize).min(5)] += 1;
    }
    let non_empty = 1.0 - hist[0] as f64 / draws as f64;
    // 1 - exp(-0.1 * 0.50119) = 0.048884
    assert!((non_empty - (1.0 - (-thinned_mean).exp())).abs() < 0.002);
    assert!((non_empty - 0.0489).abs() < 0.002);

    let mut expected: Vec<f64> = (0..5).map(|n| poisson_pmf(thinned_mean, n) * draws as f64).collect();
    expected.push(draws as f64 - expected.iter().sum::<f64>());
    assert!(passes_chi_square(&hist, &expected, 0.001), "{hist:?} vs {expected:?}");
}

#[test]
fn mismatched_basis_is_a_coin_flip() {
    let mut rng = SimRng::from_seed(7);
    let trials = 100_000;
    let mut zeros = 0;
    let mut agree = 0i64;
    for i in 0..trials {
        let bit = i % 2 == 0;
        let pulse = Pulse {
            photon_count: 1,
            bit,
            basis: Basis::Diagonal,
        };
        match measure(&pulse, Basis::Rectilinear, &DetectorPair::ideal(), 0.0, &mut rng) {
            ClickOutcome::Click(b) => {
                zeros += usize::from(!b);
                agree += if b == bit { 1 } else { -1 };
            }
            other => panic!("{other:?}"),
        }
    }
    let freq = zeros as f64 / trials as f64;
    assert!((freq - 0.5).abs() < 0.01, "{freq}");
    // Correlation between Alice's bit and Bob's result: 0 within 3σ (σ = 1/√N).
    let corr = agree as f64 / trials as f64;
    assert!(corr.abs() <= 3.0 / (trials as f64).sqrt(), "{corr}");
}

#[test]
fn matched_basis_flip_probability() {
    let mut rng = SimRng::from_seed(8);
    let trials = 100_000;
    let pulse = Pulse {
        photon_count: 1,
        bit: true,
        basis: Basis::Rectilinear,
    };
    let flips = (0..trials)
        .filter(|_| {
            measure(&pulse, Basis::Rectilinear, &DetectorPair::ideal(), 0.05, &mut rng)
                == ClickOutcome::Click(false)
        })
        .count();
    let freq = flips as f64 / trials as f64;
    assert!((freq - 0.05).abs() < 5.0 * binomial_sigma(0.05, trials));
}

#[test]
fn dark_counts_are_independent_bernoulli() {
    let d = 1e-3;
    let det = DetectorPair::new(1.0, d).unwrap();
    let empty = Pulse {
        photon_count: 0,
        bit: false,
        basis: Basis::Rectilinear,
    };
    let gates = 10_000_000;
    let mut rng = SimRng::from_seed(9);
    let (mut single, mut double) = (0usize, 0usize);
    for _ in 0..gates {
        match measure(&empty, Basis::Rectilinear, &det, 0.0, &mut rng) {
            ClickOutcome::Click(_) => single += 1,
            ClickOutcome::DoubleClick => double += 1,
            ClickOutcome::NoClick => {}
        }
    }
    let p_single = 2.0 * d * (1.0 - d);
    let p_double = d * d;
    let n = gates as f64;
    let s_single = (n * p_single * (1.0 - p_single)).sqrt();
    let s_double = (n * p_double * (1.0 - p_double)).sqrt();
    assert!((single as f64 - n * p_single).abs() <= 3.0 * s_single, "{single}");
    assert!((double as f64 - n * p_double).abs() <= 3.0 * s_double, "{double}");
}

#[test]
fn beamsplitter_bits_are_uniform_and_reproducible() {
    let draws = 1_000_000;
    let mut rng = SimRng::from_seed(10);
    let bits: Vec<bool> = (0..draws).map(|_| beamsplitter_random_bit(&mut rng)).collect();
    let mean = bits.iter().filter(|&&b| b).count() as f64 / draws as f64;
    assert!((mean - 0.5).abs() < 0.002, "{mean}");

    let mut again = SimRng::from_seed(10);
    assert!(bits.iter().take(10_000).all(|&b| b == beamsplitter_random_bit(&mut again)));

    let mut counts = vec![0u64; 256];
    for byte in bits.chunks_exact(8) {
        let v = byte.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b));
        counts[v] += 1;
    }
    let blocks = (draws / 8) as f64;
    let expected = vec![blocks / 256.0; 256];
    assert!(passes_chi_square(&counts, &expected, 0.001));
}

#[test]
fn identical_seeds_identical_outputs() {
    let run = |seed| {
        let mut rng = SimRng::from_seed(seed);
        let src = SourceModel::poisson(0.7).unwrap();
        let ch = FiberChannel::new(20.0, 0.2, 0.02).unwrap();
        let det = DetectorPair::new(0.3, 1e-3).unwrap();
        (0..5000)
            .map(|i| {
                let p = Pulse {
                    photon_count: sample_photon_count(&src, &mut rng),
                    bit: i % 3 == 0,
                    basis: Basis::random(&mut rng),
                };
                let p = transmit(p, &ch, &mut rng);
                measure(&p, Basis::random(&mut rng), &det, ch.excess_flip_prob, &mut rng)
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(99), run(99));
    assert_ne!(run(99), run(100));
}
