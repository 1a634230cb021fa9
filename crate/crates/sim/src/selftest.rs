//! Fast invariant checks, runnable from the command line.

use qkd_core::auth::{gf64_mul, AuthKeyPool, Authenticator};
use qkd_core::netsim::{combine_keys, KeySource, Link, Network};
use qkd_core::postprocess::{privacy_amplify, secret_fraction, HashSeed};
use qkd_core::protocol::{run_quantum_phase, run_session, run_session_with_key, sift};
use qkd_core::{
    AttackModel, DetectorPair, EveStrategy, FiberChannel, SessionConfig, SessionOutcome, SimRng, SourceModel,
};
use rand::RngCore;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

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

fn thresholds() -> Check {
    let mut found = Vec::new();
    let mut ok = true;
    for (model, expected) in [(AttackModel::Coherent, 0.1100), (AttackModel::Individual, 0.14645)] {
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if secret_fraction(mid, model).unwrap_or(0.0) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ok &= (lo - expected).abs() < 5e-4;
        found.push(format!("{model} {lo:.5}"));
    }
    check("secret-fraction roots", ok, found.join(", "))
}

fn toeplitz_universal() -> Check {
    let (n, ell) = (4usize, 2usize);
    let bits = |x: usize, w: usize| (0..w).map(|i| (x >> i) & 1 == 1).collect::<Vec<_>>();
    let seeds: Vec<HashSeed> = (0..1 << (n + ell - 1)).map(|s| HashSeed::new(bits(s, n + ell - 1))).collect();
    let mut worst = 0;
    for x in 0..1usize << n {
        for y in x + 1..1usize << n {
            let hits = seeds
                .iter()
                .filter(|s| {
                    privacy_amplify(&bits(x, n), ell, s, 0).map(|k| k.bits)
                        == privacy_amplify(&bits(y, n), ell, s, 0).map(|k| k.bits)
                })
                .count();
            worst = worst.max(hits);
        }
    }
    let bound = seeds.len() >> ell;
    check("toeplitz universality", worst <= bound, format!("max {worst} of {} seeds", seeds.len()))
}

fn field_axioms() -> Check {
    let mut rng = SimRng::from_seed(1);
    let ok = (0..1000).all(|_| {
        let (a, b, c) = (rng.next_u64(), rng.next_u64(), rng.next_u64());
        gf64_mul(a, b) == gf64_mul(b, a)
            && gf64_mul(a, b ^ c) == gf64_mul(a, b) ^ gf64_mul(a, c)
            && gf64_mul(gf64_mul(a, b), c) == gf64_mul(a, gf64_mul(b, c))
            && gf64_mul(a, 1) == a
    });
    check("GF(2^64) axioms", ok, "1000 random triples".into())
}

fn transcript_tamper() -> Check {
    let out = match run_session_with_key(&ideal(20_000, 2)) {
        Ok(out) => out,
        Err(e) => return check("transcript authentication", false, e.to_string()),
    };
    let clean = out.public_channel.verify().is_ok();
    let mut tampered = out.public_channel.clone();
    if let Some(m) = tampered.messages_mut().first_mut() {
        m.body.push(0);
    }
    let caught = tampered.verify().is_err();
    let mut auth = Authenticator::new(AuthKeyPool::new(SimRng::from_seed(3).bits(300)));
    let costs: Vec<usize> = (0..3)
        .map(|_| {
            let before = auth.pool().cursor();
            let _ = auth.seal(vec![0; 1000]);
            auth.pool().cursor() - before
        })
        .collect();
    check(
        "transcript authentication",
        clean && caught && costs == [128, 64, 64],
        format!("verifies {clean}, tamper caught {caught}, tag costs {costs:?}"),
    )
}

fn determinism() -> Check {
    let cfg = SessionConfig {
        n_pulses: 100_000,
        seed: 4,
        ..SessionConfig::default()
    };
    let same = run_session(&cfg).ok() == run_session(&cfg).ok();
    check("session determinism", same, String::new())
}

fn intercept_abort() -> Check {
    let mut cfg = ideal(40_000, 5);
    cfg.eve = EveStrategy::InterceptResend { fraction: 1.0 };
    match run_session(&cfg) {
        Ok(r) => check(
            "intercept-resend abort",
            r.outcome == SessionOutcome::AbortQber && (r.e_hat - 0.25).abs() < 0.03,
            format!("qber {:.4}, {}", r.e_hat, r.outcome),
        ),
        Err(e) => check("intercept-resend abort", false, e.to_string()),
    }
}

fn sifting() -> Check {
    let cfg = ideal(40_000, 6);
    let q = run_quantum_phase(&cfg, &SimRng::from_seed(6));
    let s = sift(&q.records);
    let ratio = s.len() as f64 / cfg.n_pulses as f64;
    check(
        "sifting ratio",
        (ratio - 0.5).abs() < 0.01 && s.errors() == 0,
        format!("{ratio:.4}"),
    )
}

fn relay() -> Check {
    let mut net = Network::new(7, 1000);
    for id in ["a", "b", "c", "d"] {
        let _ = net.add_node(id);
    }
    for (i, (x, y)) in [("a", "b"), ("b", "c"), ("c", "d")].into_iter().enumerate() {
        if let Ok(idx) = net.add_link(Link::new(x, y, KeySource::Stub { seed: i as u64, bits: 512 })) {
            let _ = net.provision_link(idx);
        }
    }
    let t = match net.relay_key(&["a", "b", "c", "d"], 256) {
        Ok(t) => t,
        Err(e) => return check("trusted-node relay", false, e.to_string()),
    };
    let exposed: Vec<&str> = net.nodes().filter(|n| n.knows(&t.source_key)).map(|n| n.id()).collect();
    let ok = t.end_key == t.source_key && exposed == ["b", "c"] && net.no_key_reuse();
    check("trusted-node relay", ok, format!("exposed {exposed:?}"))
}

fn combiner() -> Check {
    let mut rng = SimRng::from_seed(8);
    let (q, c) = (rng.bits(256), rng.bits(256));
    let ok = combine_keys(&q, &c)
        .and_then(|k| combine_keys(&k, &q))
        .map(|back| back == c)
        .unwrap_or(false)
        && combine_keys(&q, &q).map(|z| z.iter().all(|b| !b)).unwrap_or(false)
        && combine_keys(&q, &c[..255]).is_err();
    check("dual-key combiner", ok, String::new())
}

pub fn run() -> Vec<Check> {
    vec![
        thresholds(),
        toeplitz_universal(),
        field_axioms(),
        transcript_tamper(),
        determinism(),
        intercept_abort(),
        sifting(),
        relay(),
        combiner(),
    ]
}
