//! `shadows` — command-line harness for the joint-measurement shadow
//! estimation toolkit: self-verification suites, exact moment reports,
//! measurement sampling, the compound estimation pipeline, the sample-count
//! planner, and the distribution-approximation curve data.
//!
//! Exit codes: 0 success, 1 check failure, 2 invalid input.

mod config;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use config::{config_hash, ExperimentConfig, ProtocolSpec};
use serde_json::json;
use shadows_core::pipeline::{
    check_constraints, compound_estimate, estimate_eta, plan_no_average, plan_parameters,
    plan_single_copy, ConstantsProfile, ConsumptionMode, Plan,
};
use shadows_core::states::Observable;
use shadows_core::verify::CheckResult;
use shadows_core::{measurement, rng, typedist, verify, CMatrix, VERSION};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "shadows", version = shadows_core::VERSION, about = "joint-measurement shadow estimation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum NRule {
    /// n = ceil(1/eta)
    Inverse,
    /// fixed n from --n
    Fixed,
}

#[derive(Subcommand)]
enum Command {
    /// Run the named self-verification checks (quick: algebraic identities;
    /// full: adds Monte Carlo suites).
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact conditional moments (Z, M1, M2, E[Psi|success]) of the
    /// configured instance, via both computation paths.
    Moments {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw raw joint-measurement outcomes and report the single-shot
    /// estimator value for each.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run repetitions of the compound purify/measure/average pipeline and
    /// emit one result row per run plus a summary.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record real wall times (breaks byte-determinism of the output).
        #[arg(long)]
        timing: bool,
    },
    /// Choose (k, n, b) for a target (B, eps, eta) and optionally compare
    /// against the baseline planners and the dual lower-bound certificate.
    Plan {
        /// Observable norm B = Tr(O^2)
        #[arg(long = "b-norm")]
        b_norm: f64,
        #[arg(long)]
        eps: f64,
        /// Known deviation; omit together with --auto to estimate it.
        #[arg(long)]
        eta: Option<f64>,
        /// Estimate eta by sampling the configured instance.
        #[arg(long)]
        auto: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        compare: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the distribution-approximation bound Delta(eta, n) and the exact
    /// probability it bounds, over a grid of deviations.
    DeltaCurve {
        #[arg(long, default_value_t = 0.02)]
        eta_min: f64,
        #[arg(long, default_value_t = 0.4)]
        eta_max: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long = "n-rule", value_enum, default_value = "inverse")]
        n_rule: NRule,
        /// Measurement width when --n-rule fixed.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the main computational kernels.
    Bench {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Verify { level, seed, format, out } => cmd_verify(level, seed, format, out),
        Command::Moments { config, seed, out } => cmd_moments(&config, seed, out),
        Command::Sample { config, seed, format, out } => cmd_sample(&config, seed, format, out),
        Command::Pipeline { config, seed, out, timing } => {
            cmd_pipeline(&config, seed, out, timing)
        }
        Command::Plan { b_norm, eps, eta, auto, config, seed, compare, format, out } => {
            cmd_plan(b_norm, eps, eta, auto, config.as_deref(), seed, compare, format, out)
        }
        Command::DeltaCurve { eta_min, eta_max, points, n_rule, n, out } => {
            cmd_delta_curve(eta_min, eta_max, points, n_rule, n, out)
        }
        Command::Bench { seed } => cmd_bench(seed),
    }
}

// ---------------------------------------------------------------- output

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// The '#'-prefixed provenance header every CSV output starts with.
fn csv_header(profile: &ConstantsProfile, hash: &str, seed: u64) -> String {
    let profile_json = serde_json::to_string(profile).expect("profile serializes");
    format!(
        "# shadows v{VERSION}\n# constants_profile: {profile_json}\n# config_hash: {hash}\n# seed: {seed}\n"
    )
}

/// The provenance block embedded in every JSON output.
fn json_meta(profile: &ConstantsProfile, hash: &str, seed: u64) -> serde_json::Value {
    json!({
        "version": VERSION,
        "constants_profile": profile,
        "config_hash": hash,
        "seed": seed,
    })
}

fn matrix_json(m: &CMatrix) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect();
    json!(rows)
}

// ---------------------------------------------------------------- verify

fn cmd_verify(
    level: Level,
    seed: u64,
    format: Option<Format>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let results = match level {
        Level::Quick => verify::quick_suite(seed),
        Level::Full => verify::full_suite(seed),
    };
    let profile = ConstantsProfile::default();
    let content = match format {
        Some(Format::Json) => {
            let doc = json!({
                "meta": json_meta(&profile, "none", seed),
                "checks": results,
                "passed": results.iter().all(|r| r.passed),
            });
            format!("{}\n", serde_json::to_string_pretty(&doc)?)
        }
        Some(Format::Csv) => {
            let mut s = csv_header(&profile, "none", seed);
            s.push_str("check,passed,observed,tolerance,detail\n");
            for r in &results {
                writeln!(s, "{},{},{},{},\"{}\"", r.name, r.passed, r.observed, r.tolerance, r.detail)?;
            }
            s
        }
        None => {
            let mut s = String::new();
            for r in &results {
                writeln!(s, "{}", render_check(r))?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            writeln!(s, "{} checks, {} failed", results.len(), failed)?;
            s
        }
    };
    emit(out.as_deref(), &content)?;
    Ok(if results.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn render_check(r: &CheckResult) -> String {
    let status = if r.passed { "PASS" } else { "FAIL" };
    format!(
        "{status} {:<40} observed {:>12.3e}  tol {:>9.1e}  {}",
        r.name, r.observed, r.tolerance, r.detail
    )
}

// ---------------------------------------------------------------- moments

fn cmd_moments(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let (cfg, bytes) = ExperimentConfig::load(config_path)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let profile = cfg.constants();
    let n = cfg.width.unwrap_or(2);
    let rho = cfg.build_instance(&mut rng::stream(seed, 0))?;
    let o = cfg.build_observable(&rho, &mut rng::stream(seed, 1))?;

    let z_type = measurement::success_probability(&rho, n)?;
    let z_brute = measurement::z_brute_force(&rho, n)?;
    let m1 = measurement::m_k_exact(&rho, n, 1)?;
    let m1_brute = measurement::m_k_brute_force(&rho, n, 1)?;
    let m2 = measurement::m_k_exact(&rho, n, 2)?;
    let m2_brute = measurement::m_k_brute_force(&rho, n, 2)?;
    let psi_mean = measurement::psi_mean(&rho, n)?;
    let delta = typedist::delta_bound(rho.lambda1(), n)?;
    let var_bound =
        measurement::estimator_variance_bound(&rho, &o, n, measurement::C_DELTA_DEFAULT)?;
    let discrepancy = (z_type - z_brute)
        .abs()
        .max(shadows_core::linalg::max_abs_diff(&m1, &m1_brute))
        .max(shadows_core::linalg::max_abs_diff(&m2, &m2_brute));

    let doc = json!({
        "meta": json_meta(&profile, &config_hash(&bytes), seed),
        "d": rho.d(),
        "n": n,
        "eta": rho.eta(),
        "success_probability": { "type_sum": z_type, "brute_force": z_brute },
        "m1": matrix_json(&m1),
        "m2": matrix_json(&m2),
        "psi_mean_given_success": matrix_json(&psi_mean),
        "delta": delta,
        "variance_bound": var_bound,
        "path_max_discrepancy": discrepancy,
    });
    emit(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- sample

fn cmd_sample(
    config_path: &Path,
    seed: Option<u64>,
    format: Format,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let (cfg, bytes) = ExperimentConfig::load(config_path)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let profile = cfg.constants();
    let n = cfg.width.unwrap_or(2);
    let reps = cfg.repetitions.unwrap_or(1);
    let rho = cfg.build_instance(&mut rng::stream(seed, 0))?;
    let o = cfg.build_observable(&rho, &mut rng::stream(seed, 1))?;
    let sampler = measurement::Sampler::new(&rho, n)?;

    let mut rows = Vec::new();
    for run in 0..reps {
        let mut stream = rng::stream(seed, 3 + run);
        let outcome = sampler.sample(&mut stream)?;
        let estimate = if outcome.is_success() {
            let est = measurement::estimator(&outcome, rho.d(), n)?;
            Some(o.expectation(&est.matrix))
        } else {
            None
        };
        rows.push((run, outcome.is_success(), outcome.copies_consumed(), estimate));
    }

    let hash = config_hash(&bytes);
    let content = match format {
        Format::Csv => {
            let mut s = csv_header(&profile, &hash, seed);
            s.push_str("run,success,copies_consumed,estimate\n");
            for (run, success, copies, estimate) in &rows {
                let est = estimate.map(|e| e.to_string()).unwrap_or_default();
                writeln!(s, "{run},{success},{copies},{est}")?;
            }
            s
        }
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|(run, success, copies, estimate)| {
                    json!({"run": run, "success": success, "copies_consumed": copies, "estimate": estimate})
                })
                .collect();
            let doc = json!({ "meta": json_meta(&profile, &hash, seed), "rows": rows });
            format!("{}\n", serde_json::to_string_pretty(&doc)?)
        }
    };
    emit(out.as_deref(), &content)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- pipeline

fn resolve_plan(
    cfg: &ExperimentConfig,
    rho: &shadows_core::states::SpectralState,
    o: &Observable,
    seed: u64,
) -> Result<Plan> {
    let profile = cfg.constants();
    let Some(protocol) = &cfg.protocol else {
        bail!("config is missing the protocol section required by this subcommand");
    };
    match protocol {
        ProtocolSpec::Explicit { k, n, b } => {
            if *k == 0 || *n == 0 || *b == 0 {
                bail!("protocol k, n, b must all be >= 1");
            }
            Ok(Plan {
                k: *k,
                n: *n,
                b: *b,
                regime: 0,
                expected_samples: (k * n * b) as f64,
                constants_profile: profile,
            })
        }
        ProtocolSpec::Auto { eps, r, cutoff } => {
            let est = estimate_eta(rho, *r, *cutoff, &mut rng::stream(seed, 2))?;
            let eta_hat = if est.truncated { None } else { Some(est.eta_hat) };
            plan_parameters(o.frobenius_sq(), *eps, eta_hat, &profile).context("planner rejected the configured target")
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

fn cmd_pipeline(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    timing: bool,
) -> Result<ExitCode> {
    let (cfg, bytes) = ExperimentConfig::load(config_path)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let profile = cfg.constants();
    let reps = cfg.repetitions.unwrap_or(1);
    let mode = cfg.consumption.map(|c| c.mode()).unwrap_or(ConsumptionMode::Deterministic);
    let rho = cfg.build_instance(&mut rng::stream(seed, 0))?;
    let o = cfg.build_observable(&rho, &mut rng::stream(seed, 1))?;
    let truth = o.expectation(&rho.principal_projector());
    let plan = resolve_plan(&cfg, &rho, &o, seed)?;

    let mut s = csv_header(&profile, &config_hash(&bytes), seed);
    s.push_str("run,regime,k,n,b,samples_spent,estimate,truth,abs_error,success_rate,wall_time_ms\n");
    let mut errors = Vec::with_capacity(reps as usize);
    let mut total_samples: u128 = 0;
    for run in 0..reps {
        let mut stream = rng::stream(seed, 3 + run);
        let start = Instant::now();
        let est = compound_estimate(&rho, &plan, mode, &mut stream)?;
        let wall_ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        let estimate = o.expectation(&est.matrix);
        let abs_error = (estimate - truth).abs();
        let ideal = (plan.k * plan.n * plan.b) as f64;
        let success_rate = ideal / est.samples_spent as f64;
        writeln!(
            s,
            "{run},{},{},{},{},{},{estimate},{truth},{abs_error},{success_rate},{wall_ms}",
            plan.regime, plan.k, plan.n, plan.b, est.samples_spent
        )?;
        errors.push(abs_error);
        total_samples += est.samples_spent as u128;
    }
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean_error = if errors.is_empty() {
        f64::NAN
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    writeln!(
        s,
        "# summary: runs={reps} mean_abs_error={mean_error} q50={} q90={} total_samples={total_samples}",
        quantile(&errors, 0.5),
        quantile(&errors, 0.9)
    )?;
    emit(out.as_deref(), &s)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- plan

#[allow(clippy::too_many_arguments)]
fn cmd_plan(
    b_norm: f64,
    eps: f64,
    eta: Option<f64>,
    auto: bool,
    config_path: Option<&Path>,
    seed: Option<u64>,
    compare: bool,
    format: Format,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    if auto == eta.is_some() {
        bail!("provide exactly one of --eta VALUE or --auto (with --config)");
    }
    let (profile, hash, seed, eta_hat) = if auto {
        let Some(path) = config_path else {
            bail!("--auto needs --config to describe the instance to sample");
        };
        let (cfg, bytes) = ExperimentConfig::load(path)?;
        let seed = seed.or(cfg.seed).unwrap_or(0);
        let rho = cfg.build_instance(&mut rng::stream(seed, 0))?;
        let (r, cutoff) = match &cfg.protocol {
            Some(ProtocolSpec::Auto { r, cutoff, .. }) => (*r, *cutoff),
            _ => (50, None),
        };
        let est = estimate_eta(&rho, r, cutoff, &mut rng::stream(seed, 2))?;
        let eta_hat = if est.truncated { None } else { Some(est.eta_hat) };
        (cfg.constants(), config_hash(&bytes), seed, eta_hat)
    } else {
        (ConstantsProfile::default(), "none".to_string(), seed.unwrap_or(0), eta)
    };

    let plan = plan_parameters(b_norm, eps, eta_hat, &profile)?;
    let eta_for_checks = eta_hat.unwrap_or(0.0);
    let report = check_constraints(&plan, b_norm, eps, eta_for_checks);

    let content = match format {
        Format::Json => {
            let mut doc = json!({
                "meta": json_meta(&profile, &hash, seed),
                "target": { "b_norm": b_norm, "eps": eps, "eta": eta_hat },
                "plan": plan,
            });
            if compare {
                doc["constraints"] = serde_json::to_value(&report)?;
                doc["single_copy"] =
                    serde_json::to_value(plan_single_copy(b_norm, eps, eta_for_checks, &profile)?)?;
                doc["no_average"] =
                    serde_json::to_value(plan_no_average(b_norm, eps, eta_for_checks, &profile)?)?;
            }
            format!("{}\n", serde_json::to_string_pretty(&doc)?)
        }
        Format::Csv => {
            let mut s = csv_header(&profile, &hash, seed);
            s.push_str("planner,regime,k,n,b,expected_samples\n");
            writeln!(
                s,
                "compound,{},{},{},{},{}",
                plan.regime, plan.k, plan.n, plan.b, plan.expected_samples
            )?;
            if compare {
                for (name, p) in [
                    ("single_copy", plan_single_copy(b_norm, eps, eta_for_checks, &profile)?),
                    ("no_average", plan_no_average(b_norm, eps, eta_for_checks, &profile)?),
                ] {
                    writeln!(s, "{name},{},{},{},{},{}", p.regime, p.k, p.n, p.b, p.expected_samples)?;
                }
                for item in &report.items {
                    writeln!(
                        s,
                        "# constraint: {} lhs={} bound={} satisfied={}",
                        item.name, item.lhs, item.bound, item.satisfied
                    )?;
                }
                writeln!(
                    s,
                    "# dual_lower_bound={} certified={}",
                    report.dual_lower_bound, report.certified
                )?;
            }
            s
        }
    };
    emit(out.as_deref(), &content)?;
    let ok = !compare || (report.all_satisfied && report.certified);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

// ---------------------------------------------------------------- delta-curve

fn cmd_delta_curve(
    eta_min: f64,
    eta_max: f64,
    points: usize,
    n_rule: NRule,
    n_fixed: usize,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    if !(eta_min > 0.0 && eta_max < 0.5 && eta_min <= eta_max) {
        bail!("need 0 < eta_min <= eta_max < 0.5 (got [{eta_min}, {eta_max}])");
    }
    if points < 1 {
        bail!("need at least one grid point");
    }
    let profile = ConstantsProfile::default();
    let mut s = csv_header(&profile, "none", 0);
    s.push_str("eta,n,delta,pr_e1_negative\n");
    for i in 0..points {
        let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
        let eta = eta_min + t * (eta_max - eta_min);
        let n = match n_rule {
            NRule::Inverse => (1.0 / eta).ceil() as usize,
            NRule::Fixed => n_fixed,
        };
        let delta = typedist::delta_bound(1.0 - eta, n)?;
        let geom = typedist::geom_dist(&[1.0 - eta, eta], n)?;
        let pr = geom.pr_e1_negative().max(0.0);
        writeln!(s, "{eta},{n},{delta:e},{pr:e}")?;
    }
    emit(out.as_deref(), &s)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- bench

fn cmd_bench(seed: u64) -> Result<ExitCode> {
    let mut timings: Vec<(&str, f64)> = Vec::new();
    let mut time = |name: &'static str, f: &mut dyn FnMut() -> Result<()>| -> Result<()> {
        let start = Instant::now();
        f()?;
        timings.push((name, start.elapsed().as_secs_f64() * 1e3));
        Ok(())
    };

    time("sym_projector d=2 n=8", &mut || {
        shadows_core::linalg::sym_projector(2, 8).map(|_| ()).map_err(Into::into)
    })?;
    time("exact_dist d=3 n=12", &mut || {
        typedist::exact_dist(&[0.8, 0.15, 0.05], 12).map(|_| ()).map_err(Into::into)
    })?;
    time("m_k_exact d=3 n=6 k=2", &mut || {
        let rho = shadows_core::states::random_gapped_state(
            3,
            (0.6, 0.9),
            &mut rng::stream(seed, 0),
        );
        measurement::m_k_exact(&rho, 6, 2).map(|_| ()).map_err(Into::into)
    })?;
    time("sampler 10^4 draws d=2 n=10", &mut || {
        let rho = shadows_core::states::random_gapped_state(
            2,
            (0.85, 0.95),
            &mut rng::stream(seed, 1),
        );
        let sampler = measurement::Sampler::new(&rho, 10)?;
        let mut stream = rng::stream(seed, 2);
        for _ in 0..10_000 {
            sampler.sample(&mut stream)?;
        }
        Ok(())
    })?;
    time("mp_map two paths d=3 n=4 k=2", &mut || {
        let rho = shadows_core::states::random_gapped_state(
            3,
            (0.6, 0.9),
            &mut rng::stream(seed, 3),
        );
        let a = shadows_core::linalg::kron_power(&rho.density(), 4);
        measurement::mp_map(&a, 3, 4, 2).map(|_| ()).map_err(Into::into)
    })?;

    for (name, ms) in &timings {
        println!("{name:<32} {ms:>10.2} ms");
    }
    Ok(ExitCode::SUCCESS)
}
