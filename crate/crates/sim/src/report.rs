//! Plain-text session report.

use std::fmt::Write as _;

use qkd_core::{SessionConfig, SessionReport};

use crate::table::sig6;

pub fn session_report(config: &SessionConfig, r: &SessionReport) -> String {
    let mut s = String::new();
    let rows: [(&str, String); 16] = [
        ("source", config.source.to_string()),
        (
            "fiber",
            format!(
                "{} km at {} dB/km, flip {}",
                sig6(config.channel.length_km),
                sig6(config.channel.attenuation_db_per_km),
                sig6(config.channel.excess_flip_prob)
            ),
        ),
        (
            "detectors",
            format!(
                "efficiency {}, dark {}",
                sig6(config.detectors.efficiency),
                sig6(config.detectors.dark_count_prob)
            ),
        ),
        ("eve", format!("{} (model {})", config.eve, config.attack_model)),
        ("seed", r.seed.to_string()),
        ("pulses", r.pulses_sent.to_string()),
        ("clicks", r.clicks.to_string()),
        ("raw_len", r.raw_len.to_string()),
        ("sifted_len", r.sifted_len.to_string()),
        ("sample", r.sample_size.to_string()),
        ("qber", sig6(r.e_hat)),
        ("leak_ec", r.leak_ec_bits.to_string()),
        ("final_len", r.final_len.to_string()),
        ("eve_info", sig6(r.eve_info_fraction)),
        (
            "auth",
            format!("{} consumed, secret growth {}", r.auth_bits_consumed, r.secret_growth()),
        ),
        ("outcome", r.outcome.to_string()),
    ];
    for (name, value) in rows {
        let _ = writeln!(s, "{name:<11} {value}");
    }
    s
}
