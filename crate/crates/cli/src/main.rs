//! `obnox`: evaluate, verify and stress-test the two-facility mechanisms.
//!
//! Exit codes: 0 pass, 1 property violation, 2 usage or parse error,
//! 3 mechanism not applicable, 4 I/O failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use obnox_core::harness::{
    adversarial_search, exhaustive_search, generate_instance, sweep, write_sweep_csv, GeneratorConfig, LocationLaw,
    PreferenceMix, SearchConfig, SweepRecord, SweepSpec, DEFAULT_RESOLUTION,
};
use obnox_core::model::social_utility;
use obnox_core::opt::{brute_force_opt, optimal_placement, welfare_upper_bound};
use obnox_core::verification::{
    check_constant_outcome, probe_deterministic_lower_bound, probe_randomized_lower_bound, verify_instance,
    InstanceVerdict, ProbeReport, Ratio,
};
use obnox_core::{Error, Instance, Mechanism, Preference, Rational, Registry};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "obnox", version, about = "Strategyproof two-obnoxious-facility mechanisms, exactly")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one mechanism on an instance file and report its social utility.
    Eval {
        instance: PathBuf,
        #[arg(long)]
        mech: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal placement and welfare bound for an instance file.
    Opt {
        instance: PathBuf,
        /// Also run the grid oracle at this resolution.
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strategyproofness, ratio caps and welfare bounds over instance files
    /// or generated instances. Exits 1 on any violation.
    Verify {
        /// Instance files; when absent, instances are generated.
        instances: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "M1,M2,M3,M4")]
        mech: Vec<String>,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a lower-bound construction against a mechanism.
    Probe {
        kind: ProbeKind,
        #[arg(long)]
        mech: String,
        /// Treat a deterministic mechanism as a point-mass lottery.
        #[arg(long)]
        wrap: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for instances with a large approximation ratio.
    Search {
        #[arg(long)]
        mech: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value = "0")]
        d: Rational,
        /// Fixed preference profile, e.g. `10,01,11`; searched when absent.
        #[arg(long, value_delimiter = ',')]
        profile: Option<Vec<String>>,
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: u32,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Enumerate the whole breakpoint lattice instead (small n only).
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Batch ratios over mechanisms × d values × generators.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        mech: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        d: Vec<Rational>,
        #[arg(long, value_delimiter = ',', default_value = "5")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probabilities of preferences (1,0), (0,1), (1,1).
        #[arg(long, value_delimiter = ',', default_value = "1/3,1/3,1/3")]
        mix: Vec<Rational>,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: u32,
        #[arg(long)]
        breakpoints: bool,
        #[arg(long)]
        no_sp: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value = "0")]
    d: Rational,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "1/3,1/3,1/3")]
    mix: Vec<Rational>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProbeKind {
    Det,
    Rand,
}

/// A failed run and its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn io(path: &Path, err: io::Error) -> Self {
        Failure { code: 4, message: format!("{}: {err}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::NotApplicable { .. } => 3,
            Error::Infeasible { .. } => 1,
            _ => 2,
        };
        Failure { code, message: err.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> Outcome {
    let registry = Registry::with_controls();
    match command {
        Command::Eval { instance, mech, format, out } => cmd_eval(&registry, &instance, &mech, format, out.as_deref()),
        Command::Opt { instance, resolution, format, out } => cmd_opt(&instance, resolution, format, out.as_deref()),
        Command::Verify { instances, mech, gen, out } => cmd_verify(&registry, &instances, &mech, &gen, out.as_deref()),
        Command::Probe { kind, mech, wrap, format, out } => {
            cmd_probe(&registry, kind, &mech, wrap, format, out.as_deref())
        }
        Command::Search { mech, n, d, profile, budget, seed, resolution, workers, exhaustive, out } => {
            let profile = profile.map(|p| parse_profile(&p)).transpose()?;
            let mechanism = registry.get(&mech)?;
            let result = if exhaustive {
                exhaustive_search(mechanism.as_ref(), n, d, profile.as_deref(), resolution)?
            } else {
                let config = SearchConfig { budget, seed, resolution, workers };
                adversarial_search(mechanism.as_ref(), n, d, profile.as_deref(), &config)?
            };
            let body = json!({
                "mechanism": mechanism.id(),
                "n": n,
                "d": d,
                "exhaustive": exhaustive,
                "best_ratio_decimal": result.best_ratio.to_decimal(12),
                "result": result,
            });
            emit(out.as_deref(), &pretty(&body))?;
            Ok(if result.cap_breach_count > 0 { 1 } else { 0 })
        }
        Command::Sweep { mech, d, n, count, seed, mix, resolution, breakpoints, no_sp, format, out } => {
            if mech.iter().all(|m| m.trim().is_empty()) {
                return Err(Failure::usage("sweep needs at least one mechanism"));
            }
            let mechanisms = mech.iter().map(|m| registry.get(m)).collect::<Result<Vec<_>, _>>()?;
            let mix = parse_mix(&mix)?;
            let law = if breakpoints { LocationLaw::Breakpoints } else { LocationLaw::UniformGrid(resolution) };
            let configs = n.iter().map(|&n| GeneratorConfig::new(n, Rational::ZERO, mix, law, seed)).collect();
            let spec = SweepSpec { mechanisms, ds: d, configs, per_cell: count, check_sp: !no_sp };
            let records = sweep(&spec)?;
            let text = match format {
                Format::Json => pretty(&sweep_json(&records)),
                _ => {
                    let mut buf = Vec::new();
                    write_sweep_csv(&records, &mut buf).map_err(|e| Failure { code: 4, message: e.to_string() })?;
                    String::from_utf8(buf).expect("csv output is utf-8")
                }
            };
            emit(out.as_deref(), &text)?;
            let failed = records.iter().any(|r| r.sp_ok == Some(false) || r.cap_ok == Some(false));
            Ok(u8::from(failed))
        }
    }
}

fn read_instance(path: &Path) -> Result<Instance, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    Ok(Instance::from_json(&text)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(path, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure { code: 4, message: format!("stdout: {e}") }),
    }
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json values serialize")
}

fn parse_mix(parts: &[Rational]) -> Result<PreferenceMix, Failure> {
    match parts {
        [q10, q01, q11] => Ok(PreferenceMix::new(*q10, *q01, *q11)?),
        _ => Err(Failure::usage(format!("--mix takes three probabilities, got {}", parts.len()))),
    }
}

fn parse_profile(parts: &[String]) -> Result<Vec<Preference>, Failure> {
    parts
        .iter()
        .map(|p| match p.trim() {
            "10" => Ok(Preference::F1_ONLY),
            "01" => Ok(Preference::F2_ONLY),
            "11" => Ok(Preference::BOTH),
            other => Err(Failure::usage(format!("preference must be 10, 01 or 11, got {other:?}"))),
        })
        .collect()
}

fn cmd_eval(registry: &Registry, path: &Path, mech: &str, format: Format, out: Option<&Path>) -> Outcome {
    let instance = read_instance(path)?;
    let mechanism = registry.get(mech)?;
    let outcome = mechanism.evaluate(&instance)?;
    let su = social_utility(&instance, &outcome)?;
    let text = match format {
        Format::Json => pretty(&json!({
            "mechanism": mechanism.id(),
            "outcome": outcome,
            "social_utility": su,
            "social_utility_decimal": su.to_decimal(12),
        })),
        _ => format!("mechanism: {}\noutcome: {outcome}\nsocial_utility: {su}\n", mechanism.id()),
    };
    emit(out, &text)?;
    Ok(0)
}

fn cmd_opt(path: &Path, resolution: Option<u32>, format: Format, out: Option<&Path>) -> Outcome {
    let instance = read_instance(path)?;
    let opt = optimal_placement(&instance);
    let bound = welfare_upper_bound(&instance);
    let grid = resolution.map(|m| brute_force_opt(&instance, m)).transpose()?;
    let agrees = grid.is_none_or(|g| g.value == opt.value);
    let text = match format {
        Format::Json => pretty(&json!({ "opt": opt, "upper_bound": bound, "grid": grid, "grid_agrees": agrees })),
        _ => {
            let mut s = format!("placement: {}\nvalue: {}\nupper_bound: {bound}\n", opt.placement, opt.value);
            if let Some(g) = grid {
                s.push_str(&format!("grid_value: {}\ngrid_agrees: {agrees}\n", g.value));
            }
            s
        }
    };
    emit(out, &text)?;
    Ok(u8::from(!agrees || opt.value > bound))
}

fn cmd_verify(registry: &Registry, files: &[PathBuf], mechs: &[String], gen: &GenArgs, out: Option<&Path>) -> Outcome {
    let instances: Vec<Instance> = if files.is_empty() {
        let mix = parse_mix(&gen.mix)?;
        if gen.resolution == 0 {
            return Err(Failure::usage("--resolution must be at least 1"));
        }
        (0..gen.count)
            .map(|i| {
                let config = GeneratorConfig::new(
                    gen.n,
                    gen.d,
                    mix,
                    LocationLaw::UniformGrid(gen.resolution),
                    gen.seed.wrapping_add(i as u64),
                );
                generate_instance(&config)
            })
            .collect::<Result<_, _>>()?
    } else {
        files.iter().map(|p| read_instance(p)).collect::<Result<_, _>>()?
    };
    if mechs.is_empty() {
        return Err(Failure::usage("verify needs at least one mechanism"));
    }

    let mut all_passed = true;
    let mut summaries = Vec::new();
    for id in mechs {
        let mechanism = registry.get(id)?;
        let summary = verify_mechanism(mechanism.as_ref(), &instances)?;
        all_passed &= summary["passed"].as_bool().unwrap_or(false);
        summaries.push(summary);
    }
    let body = json!({ "passed": all_passed, "instances": instances.len(), "mechanisms": summaries });
    emit(out, &pretty(&body))?;
    Ok(if all_passed { 0 } else { 1 })
}

fn verify_mechanism(mechanism: &dyn Mechanism, instances: &[Instance]) -> Result<serde_json::Value, Failure> {
    let mut verdicts: Vec<InstanceVerdict> = Vec::new();
    let mut skipped = 0usize;
    for instance in instances {
        match verify_instance(mechanism, instance) {
            Ok(v) => verdicts.push(v),
            Err(Error::NotApplicable { .. }) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let sp_violations: usize = verdicts.iter().map(|v| v.violations.len()).sum();
    let cap_breaches = verdicts.iter().filter(|v| !v.cap_ok).count();
    let bound_breaches = verdicts.iter().filter(|v| !v.bound_ok).count();
    let max_ratio = verdicts.iter().map(|v| v.report.ratio).max();
    let applicable: Vec<Instance> = verdicts.iter().map(|v| v.instance.clone()).collect();
    let constant = if matches!(mechanism.id(), "M2" | "M4") && applicable.len() >= 2 {
        Some(check_constant_outcome(mechanism, &applicable)?)
    } else {
        None
    };
    let failures: Vec<&InstanceVerdict> = verdicts.iter().filter(|v| !v.passed()).take(5).collect();
    let passed = failures.is_empty() && constant != Some(false);
    Ok(json!({
        "mechanism": mechanism.id(),
        "passed": passed,
        "checked": verdicts.len(),
        "skipped": skipped,
        "sp_violations": sp_violations,
        "cap_breaches": cap_breaches,
        "bound_breaches": bound_breaches,
        "constant_outcome": constant,
        "max_ratio": max_ratio,
        "max_ratio_decimal": max_ratio.map(|r| r.to_decimal(12)),
        "failures": failures,
    }))
}

fn cmd_probe(registry: &Registry, kind: ProbeKind, mech: &str, wrap: bool, format: Format, out: Option<&Path>) -> Outcome {
    let mechanism = registry.get(mech)?;
    let report: ProbeReport = match kind {
        ProbeKind::Det => probe_deterministic_lower_bound(mechanism.as_ref())?,
        ProbeKind::Rand => probe_randomized_lower_bound(mechanism.as_ref(), wrap)?,
    };
    let text = match format {
        Format::Json => pretty(&serde_json::to_value(&report).expect("probe report serializes")),
        _ => format!(
            "mechanism: {}\nratio: {}\nmeets bound {}: {}\n",
            report.mechanism,
            report.ratio,
            report.bound,
            if report.meets_bound { "yes" } else { "no" }
        ),
    };
    emit(out, &text)?;
    Ok(0)
}

fn sweep_json(records: &[SweepRecord]) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = records
        .iter()
        .map(|r| {
            json!({
                "mechanism": r.mechanism,
                "d": r.d,
                "n": r.config.n,
                "q10": r.config.mix.q10,
                "q01": r.config.mix.q01,
                "q11": r.config.mix.q11,
                "seed": r.config.seed,
                "instances": r.instances,
                "max_ratio": r.max_ratio.map(|m: Ratio| m.to_string()),
                "max_ratio_decimal": r.max_ratio.map(|m| m.to_decimal(12)),
                "mean_ratio": r.mean_ratio.as_ref().map(|m| m.exact()),
                "mean_ratio_decimal": r.mean_ratio.as_ref().map(|m| m.to_decimal(12)),
                "sp_ok": r.sp_ok,
                "cap_ok": r.cap_ok,
                "status": if r.skipped() { "skipped" } else { "ok" },
            })
        })
        .collect();
    serde_json::Value::Array(rows)
}
