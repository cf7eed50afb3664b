use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

// A closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    };
}

use ris_pricing::harness::{
    audit_dir, emit_row, emit_trace, parse_seeds, parse_values, run_sweep, write_outputs, SweepRow, SweepSpec,
    SweepVariable,
};
use ris_pricing::leader::solve;
use ris_pricing::oracle::{build_fixtures, OracleBudget};
use ris_pricing::scenario::{apply_override, parse_config_table, scenario_from_table};
use ris_pricing::{realize, ChannelSet, Scenario, Scheme};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const AUDIT_TOLERANCE: f64 = 1e-12;

/// Stackelberg pricing of RIS reflection resources.
#[derive(Parser)]
#[command(name = "ris-pricing", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the power budget or the RIS location over several seeds.
    Run(RunArgs),
    /// Solve one scenario and report the equilibrium.
    Solve(SolveArgs),
    /// Run the brute-force oracles and write a fixture file.
    Oracle(OracleArgs),
    /// Re-evaluate every row of a finished sweep from its stored states.
    Audit(AuditArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML scenario file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set power_budget_dbm=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// power or location
    #[arg(long)]
    sweep: SweepVariable,
    /// Schemes to run (repeat or comma-separate); all four when omitted.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    /// Comma-separated sweep values; the figure defaults when omitted.
    #[arg(long)]
    values: Option<String>,
    /// Seeds as `a..b` (inclusive) or a list.
    #[arg(long, default_value = "0..9")]
    seeds: String,
    #[arg(long)]
    out: PathBuf,
    /// Exit with status 3 if any solve did not converge.
    #[arg(long)]
    strict: bool,
    /// Re-evaluate every CSV row from the stored final states after the run.
    #[arg(long)]
    audit: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "stackelberg-nonuniform")]
    scheme: Scheme,
    /// Overrides the config's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.json and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of the follower's passes at the final prices.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the channel realization used.
    #[arg(long)]
    dump_channels: Option<PathBuf>,
    /// Use a stored channel realization instead of drawing one.
    #[arg(long, conflicts_with = "dump_channels")]
    load_channels: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Fixture file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    leader_instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = OracleBudget::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = OracleBudget::default().ascent_steps)]
    steps: usize,
    #[arg(long, default_value_t = OracleBudget::default().price_grid)]
    price_grid: usize,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    dir: PathBuf,
}

enum Status {
    Done,
    NotConverged,
}

fn load_scenario(args: &ConfigArgs) -> Result<Scenario> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let mut table = parse_config_table(&text)?;
    for assignment in &args.set {
        apply_override(&mut table, assignment)?;
    }
    Ok(scenario_from_table(table)?)
}

fn run(args: RunArgs) -> Result<Status> {
    let base = load_scenario(&args.config)?;
    let mut spec = SweepSpec::new(args.sweep, 0);
    spec.seeds = parse_seeds(&args.seeds)?;
    if let Some(values) = &args.values {
        spec.values = parse_values(values)?;
    }
    if !args.scheme.is_empty() {
        spec.schemes = args.scheme.clone();
    }
    spec.validate()?;
    eprintln!(
        "{} sweep: {} values x {} seeds x {} schemes",
        spec.variable,
        spec.values.len(),
        spec.seeds.len(),
        spec.schemes.len()
    );
    let table = run_sweep(&spec, &base)?;
    for path in write_outputs(&table, &args.out)? {
        say!("{}", path.display());
    }
    if args.audit {
        let audit = audit_dir(&args.out, AUDIT_TOLERANCE)?;
        say!("audit: {} rows, max |error| {:e}", audit.rows, audit.max_abs_error);
        if !audit.passed() {
            bail!(
                "audit failed on {} rows, first {:?}",
                audit.mismatches.len(),
                audit.mismatches[0]
            );
        }
    }
    Ok(if table.all_converged() {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn solve_one(args: SolveArgs) -> Result<Status> {
    let mut scenario = load_scenario(&args.config)?;
    if let Some(seed) = args.seed {
        scenario.rng_seed = seed;
    }
    let channels = match &args.load_channels {
        Some(path) => ChannelSet::load(path)?,
        None => realize(&scenario).1,
    };
    channels.check(&scenario)?;
    if let Some(path) = &args.dump_channels {
        channels.save(path)?;
    }
    let report = solve(&channels, &scenario, args.scheme)?;
    say!("scheme      {}", report.scheme);
    say!("u_bs        {}", report.bs_utility);
    say!("prices      {:?}", report.prices.as_slice());
    say!("purchased   {:?}", report.follower.phase.purchased);
    say!("ris revenue {:?}", report.ris_utilities);
    say!("rounds      {} (converged: {})", report.rounds, report.converged);
    if let Some(v) = &report.verification {
        say!("se check    accepted: {}, max gain {:?}", v.accepted, v.max_gain);
    }
    if let Some(path) = &args.trace {
        emit_trace(&report.follower.records, path)?;
    }
    let converged = report.converged && report.follower.converged;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let json = dir.join("report.json");
        fs::write(&json, report.to_json()? + "\n").with_context(|| format!("writing {}", json.display()))?;
        let power = scenario.power_budget.dbm();
        let seed = scenario.rng_seed;
        let row = SweepRow::new(SweepVariable::Power, power, seed, scenario, report);
        emit_row(&row, &dir.join("summary.csv"))?;
    }
    Ok(if converged { Status::Done } else { Status::NotConverged })
}

fn oracle(args: OracleArgs) -> Result<Status> {
    let budget = OracleBudget {
        ascent_steps: args.steps,
        restarts: args.restarts,
        price_grid: args.price_grid,
        seed: args.seed,
        ..OracleBudget::default()
    };
    let fixtures = build_fixtures(&budget, args.instances, args.leader_instances)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fixtures.save(&args.out)?;
    say!("{}", args.out.display());
    Ok(Status::Done)
}

fn audit(dir: &Path) -> Result<Status> {
    let audit = audit_dir(dir, AUDIT_TOLERANCE)?;
    say!("audit: {} rows, max |error| {:e}", audit.rows, audit.max_abs_error);
    if !audit.passed() {
        bail!(
            "audit failed on {} rows, first {:?}",
            audit.mismatches.len(),
            audit.mismatches[0]
        );
    }
    Ok(Status::Done)
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<ris_pricing::Error>(),
            Some(
                ris_pricing::Error::Validation { .. }
                    | ris_pricing::Error::Parse { .. }
                    | ris_pricing::Error::Dimension(_)
            )
        )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, strict) = match cli.command {
        Command::Run(args) => {
            let strict = args.strict;
            (run(args), strict)
        }
        Command::Solve(args) => {
            let strict = args.strict;
            (solve_one(args), strict)
        }
        Command::Oracle(args) => (oracle(args), false),
        Command::Audit(args) => (audit(&args.dir), false),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) if strict => {
            eprintln!("error: solver did not converge");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Ok(Status::NotConverged) => {
            eprintln!("warning: solver did not converge");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_validation(&err) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
