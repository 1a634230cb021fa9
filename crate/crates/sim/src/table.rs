//! CSV output: one row per session, fixed column set.

use std::io::Write;

use qkd_core::{SessionConfig, SessionReport};

pub const HEADER: [&str; 15] = [
    "seed",
    "distance_km",
    "mu",
    "eve",
    "pulses",
    "clicks",
    "raw_len",
    "sifted_len",
    "qber",
    "leak_ec",
    "final_len",
    "eve_info",
    "auth_consumed",
    "secret_growth",
    "outcome",
];

/// Formats with 6 significant digits, like C's `%.6g` but with Rust's exponent
/// notation (`1.5e-7`).
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub seed: u64,
    pub distance_km: f64,
    pub mu: f64,
    pub eve: String,
    pub pulses: usize,
    pub clicks: usize,
    pub raw_len: usize,
    pub sifted_len: usize,
    pub qber: f64,
    pub leak_ec: usize,
    pub final_len: usize,
    pub eve_info: f64,
    pub auth_consumed: usize,
    pub secret_growth: i64,
    pub outcome: String,
}

impl CsvRow {
    pub fn new(config: &SessionConfig, report: &SessionReport) -> Self {
        Self {
            seed: report.seed,
            distance_km: config.channel.length_km,
            mu: config.source.mean(),
            eve: config.eve.to_string(),
            pulses: report.pulses_sent,
            clicks: report.clicks,
            raw_len: report.raw_len,
            sifted_len: report.sifted_len,
            qber: report.e_hat,
            leak_ec: report.leak_ec_bits,
            final_len: report.final_len,
            eve_info: report.eve_info_fraction,
            auth_consumed: report.auth_bits_consumed,
            secret_growth: report.secret_growth(),
            outcome: report.outcome.to_string(),
        }
    }

    pub fn fields(&self) -> [String; 15] {
        [
            self.seed.to_string(),
            sig6(self.distance_km),
            sig6(self.mu),
            self.eve.clone(),
            self.pulses.to_string(),
            self.clicks.to_string(),
            self.raw_len.to_string(),
            self.sifted_len.to_string(),
            sig6(self.qber),
            self.leak_ec.to_string(),
            self.final_len.to_string(),
            sig6(self.eve_info),
            self.auth_consumed.to_string(),
            self.secret_growth.to_string(),
            self.outcome.clone(),
        ]
    }
}

/// Writes the header and then every row. The header is written even with no rows.
pub fn write_rows<W: Write>(out: W, rows: &[CsvRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_string(rows: &[CsvRow]) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}
