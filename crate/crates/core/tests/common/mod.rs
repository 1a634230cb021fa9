#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson statistic, merging trailing bins until every expected count is ≥ 5.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> (f64, usize) {
    assert_eq!(observed.len(), expected.len());
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0u64, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0 {
        *obs.last_mut().unwrap() += o_acc;
        *exp.last_mut().unwrap() += e_acc;
    }
    let stat = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    (stat, obs.len() - 1)
}

/// Upper critical value of the chi-square distribution.
pub fn chi_square_critical(dof: usize, significance: f64) -> f64 {
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(1.0 - significance)
}

pub fn passes_chi_square(observed: &[u64], expected: &[f64], significance: f64) -> bool {
    let (stat, dof) = chi_square(observed, expected);
    stat <= chi_square_critical(dof, significance)
}

pub fn poisson_pmf(mu: f64, n: u32) -> f64 {
    let mut p = (-mu).exp();
    for k in 1..=n {
        p *= mu / k as f64;
    }
    p
}

/// Binomial standard error of a frequency estimate.
pub fn binomial_sigma(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
