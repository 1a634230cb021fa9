use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qkd_core::netsim::NetError;
use qkd_core::protocol::run_session;
use qkd_core::SessionOutcome;
use qkd_sim::config::{resolve_config_path, LoadedConfig, Settings};
use qkd_sim::scenario::{self, Scenario};
use qkd_sim::table::{self, CsvRow};
use qkd_sim::{report, selftest, sweep};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_ABORT_QBER: u8 = 2;
const EXIT_ABORT_RECONCILIATION: u8 = 3;
const EXIT_LINK_KEY: u8 = 4;
const EXIT_ABORT_TOO_SHORT: u8 = 5;

/// BB84 quantum key distribution simulator.
#[derive(Parser)]
#[command(name = "qkdsim", version, after_help = concat!(
    "Relative config paths not found in the working directory are looked up in $QKDSIM_CONFIG_DIR",
    ".\n\nExit codes: 0 success, 1 usage or config error, 2 QBER abort, ",
    "3 reconciliation abort, 4 insufficient link key, 5 too few bits to distill."
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session and print its report.
    Run {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a parameter sweep from a config file's [sweep] table and write CSV.
    Sweep {
        #[command(flatten)]
        session: SessionArgs,
        /// Output file; standard output when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Overwrite an existing output file.
        #[arg(long)]
        force: bool,
        /// Worker threads (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Provision links and relay keys as described by a scenario file.
    Network {
        scenario: PathBuf,
        /// Write the per-relay CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

/// Session parameters. Flags override values from --config.
#[derive(Args)]
struct SessionArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_pulses: Option<usize>,
    /// Poisson mean photon number.
    #[arg(long, conflicts_with = "photons")]
    mu: Option<f64>,
    /// Fixed photons per pulse instead of a Poisson source.
    #[arg(long)]
    photons: Option<u32>,
    #[arg(long)]
    distance_km: Option<f64>,
    #[arg(long)]
    attenuation_db_per_km: Option<f64>,
    /// Matched-basis bit-flip probability.
    #[arg(long)]
    flip: Option<f64>,
    /// Detector efficiency.
    #[arg(long)]
    efficiency: Option<f64>,
    /// Dark-count probability per detector per gate.
    #[arg(long)]
    dark: Option<f64>,
    #[arg(long)]
    sample_fraction: Option<f64>,
    /// coherent or individual.
    #[arg(long)]
    attack_model: Option<String>,
    /// Security margin in bits.
    #[arg(long)]
    margin: Option<usize>,
    /// none, pns, intercept or intercept:<fraction>.
    #[arg(long)]
    eve: Option<String>,
    /// random or discard.
    #[arg(long)]
    double_click: Option<String>,
    #[arg(long)]
    auth_pool_bits: Option<usize>,
    #[arg(long)]
    cascade_passes: Option<usize>,
}

impl SessionArgs {
    fn settings(&self) -> Settings {
        Settings {
            seed: self.seed,
            n_pulses: self.n_pulses,
            mu: self.mu,
            photons: self.photons,
            distance_km: self.distance_km,
            attenuation_db_per_km: self.attenuation_db_per_km,
            flip: self.flip,
            efficiency: self.efficiency,
            dark: self.dark,
            sample_fraction: self.sample_fraction,
            attack_model: self.attack_model.clone(),
            margin: self.margin,
            eve: self.eve.clone(),
            double_click: self.double_click.clone(),
            auth_pool_bits: self.auth_pool_bits,
            cascade_passes: self.cascade_passes,
        }
    }

    fn load(&self) -> Result<LoadedConfig, String> {
        let base = match &self.config {
            Some(path) => LoadedConfig::load(path).map_err(|e| e.to_string())?,
            None => LoadedConfig::empty(),
        };
        Ok(base.with_overrides(&self.settings()))
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("qkdsim: {message}");
    ExitCode::from(code)
}

fn create_output(path: &Path, force: bool) -> Result<BufWriter<File>, String> {
    if path.exists() && !force {
        return Err(format!("{} already exists (use --force to overwrite)", path.display()));
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn cmd_run(session: &SessionArgs, format: Format) -> ExitCode {
    let config = match session.load().and_then(|l| l.session_config().map_err(|e| e.to_string())) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let report = match run_session(&config) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let text = match format {
        Format::Text => report::session_report(&config, &report),
        Format::Csv => table::to_string(&[CsvRow::new(&config, &report)]),
    };
    print!("{text}");
    ExitCode::from(match report.outcome {
        SessionOutcome::Success => EXIT_OK,
        SessionOutcome::AbortQber => EXIT_ABORT_QBER,
        SessionOutcome::AbortReconciliation => EXIT_ABORT_RECONCILIATION,
        SessionOutcome::AbortTooShort => EXIT_ABORT_TOO_SHORT,
    })
}

fn cmd_sweep(session: &SessionArgs, out: Option<&Path>, force: bool, jobs: Option<usize>) -> ExitCode {
    let loaded = match session.load() {
        Ok(l) => l,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let base = match loaded.session_config() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let axes = loaded.sweep.clone().unwrap_or_default();
    let plan = match sweep::plan(&base, &axes) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    // Refuse before spending time on the sessions.
    let sink: Box<dyn Write> = match out {
        Some(path) => match create_output(path, force) {
            Ok(f) => Box::new(f),
            Err(e) => return fail(EXIT_USAGE, e),
        },
        None => Box::new(io::stdout().lock()),
    };
    let rows = match sweep::run(&plan, jobs) {
        Ok(rows) => rows,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    match table::write_rows(sink, &rows) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn cmd_network(path: &Path, csv: Option<&Path>, force: bool) -> ExitCode {
    let resolved = resolve_config_path(path);
    let text = match std::fs::read_to_string(&resolved) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_USAGE, format!("cannot read {}: {e}", resolved.display())),
    };
    let scenario = match Scenario::parse(&text, &resolved.display().to_string()) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let csv_out = match csv.map(|p| create_output(p, force)).transpose() {
        Ok(w) => w,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let run = match scenario::run(&scenario) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    print!("{}", run.report());
    if let Some(w) = csv_out {
        if let Err(e) = run.write_relay_csv(w) {
            return fail(EXIT_USAGE, e);
        }
    }
    match &run.failure {
        None => ExitCode::from(EXIT_OK),
        Some(f) => match f.error() {
            NetError::InsufficientLinkKey { .. } => fail(EXIT_LINK_KEY, f.error()),
            other => fail(EXIT_USAGE, other),
        },
    }
}

fn cmd_selftest() -> ExitCode {
    let checks = selftest::run();
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        let mark = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{mark} {}", c.name);
        } else {
            println!("{mark} {} ({})", c.name, c.detail);
        }
    }
    ExitCode::from(if all { EXIT_OK } else { EXIT_USAGE })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Run { session, format } => cmd_run(session, *format),
        Command::Sweep {
            session,
            out,
            force,
            jobs,
        } => cmd_sweep(session, out.as_deref(), *force, *jobs),
        Command::Network { scenario, csv, force } => cmd_network(scenario, csv.as_deref(), *force),
        Command::Selftest => cmd_selftest(),
    }
}
