//! One function per subcommand. All of them return `CliError` so the
//! binary can map infeasibility to exit 1 and everything else to exit 2.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use stokesfit::bench::{
    convergence_study, indistinguishability_demo, run_mse, sweep, write_convergence_csv,
    write_sweep_csv, MseReport, SweepAxis, TrialConfig,
};
use stokesfit::estimator::{
    estimate_gaussian_s02, estimate_thermal_reference, format_estimate, SignalEstimate,
};
use stokesfit::fockcheck::{calibrate_ordering, DEFAULT_DIM};
use stokesfit::moments::{moment_set, read_moment_csv, write_moment_csv, StokesMomentSet};
use stokesfit::sampler::{
    empirical_moments, equal_split_plan, read_shots_csv, sample_batch, sample_moments,
    write_shots_csv,
};
use stokesfit::states::parse_reference_record;

use crate::config::{
    load_config, parse_estimate_method, parse_f64_list, parse_u64_list, resolve_angles,
    resolve_mode, resolve_reference, resolve_seed, resolve_signal, CliError, EstimateMethod,
    FileConfig, OutputTarget,
};
use crate::{
    BenchArgs, Cli, ConvergeArgs, DemoArgs, EstimateArgs, OracleArgs, SampleArgs, SweepArgs,
    ValidateArgs,
};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.cmd {
        crate::Cmd::Oracle(a) => oracle(cli, a, &cfg),
        crate::Cmd::Sample(a) => sample(cli, a, &cfg),
        crate::Cmd::Estimate(a) => estimate(cli, a, &cfg),
        crate::Cmd::Bench(a) => bench(cli, a, &cfg),
        crate::Cmd::Sweep(a) => run_sweep(cli, a, &cfg),
        crate::Cmd::Converge(a) => converge(cli, a, &cfg),
        crate::Cmd::Validate(a) => validate(cli, a, &cfg),
        crate::Cmd::DemoIndistinguishable(a) => demo(cli, a, &cfg),
    }
}

fn output(cli: &Cli, flag: &Option<PathBuf>, cfg: &FileConfig) -> OutputTarget {
    OutputTarget::resolve(flag.clone(), cli.no_timestamp, cfg)
}

fn oracle(cli: &Cli, args: &OracleArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let signal = resolve_signal(args.state.signal.as_deref(), cfg)?;
    let reference = resolve_reference(args.state.reference.as_deref(), cfg)?;
    let angles = resolve_angles(args.state.angles.as_deref(), cfg)?;
    let ms = moment_set(&signal, &reference, &angles);
    let mut w = output(cli, &args.out.out, cfg).writer()?;
    write_moment_csv(&mut w, &ms)?;
    Ok(())
}

fn sample(cli: &Cli, args: &SampleArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let signal = resolve_signal(args.state.signal.as_deref(), cfg)?;
    let reference = resolve_reference(args.state.reference.as_deref(), cfg)?;
    let angles = resolve_angles(args.state.angles.as_deref(), cfg)?;
    let mode = resolve_mode(args.mode.as_deref(), cfg)?;
    let seed = resolve_seed(cli.seed, cfg)?;
    let shots = args
        .shots
        .or_else(|| cfg.sampling.as_ref().and_then(|s| s.shots))
        .unwrap_or(10_000);
    let plan = equal_split_plan(&angles, shots, 0);

    let out = output(cli, &args.out.out, cfg);
    let dump_path = args
        .dump_shots
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dump_shots.clone()));
    let ms = match dump_path {
        Some(path) => {
            // Materializing 10^8 shots would need gigabytes; moments-only
            // runs stream instead, so only dumps carry this cap.
            if shots > 10_000_000 {
                return Err(CliError::Config(format!(
                    "--dump-shots materializes every shot; {shots} exceeds the 10^7 cap"
                )));
            }
            let records = sample_batch(&signal, &reference, &plan, seed)?;
            let mut w = out.sibling(path).writer()?;
            write_shots_csv(&mut w, &records)?;
            empirical_moments(&records, mode)?
        }
        None => sample_moments(&signal, &reference, &plan, mode, seed)?,
    };
    let mut w = out.writer()?;
    write_moment_csv(&mut w, &ms)?;
    Ok(())
}

fn load_moments(args: &EstimateArgs, cfg: &FileConfig) -> Result<StokesMomentSet, CliError> {
    match (&args.moments, &args.shots_file) {
        (Some(p), None) => {
            let mut f = fs::File::open(p)
                .map_err(|e| CliError::Config(format!("cannot open {}: {e}", p.display())))?;
            Ok(read_moment_csv(&mut f)?)
        }
        (None, Some(p)) => {
            let f = fs::File::open(p)
                .map_err(|e| CliError::Config(format!("cannot open {}: {e}", p.display())))?;
            let shots = read_shots_csv(f)?;
            let mode = resolve_mode(args.mode.as_deref(), cfg)?;
            Ok(empirical_moments(&shots, mode)?)
        }
        _ => Err(CliError::Config(
            "exactly one of --moments or --shots-file is required".to_string(),
        )),
    }
}

fn estimate(cli: &Cli, args: &EstimateArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let ms = load_moments(args, cfg)?;
    let reference = match &args.ref_file {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_reference_record(&text)?
        }
        None => resolve_reference(args.reference.as_deref(), cfg)?,
    };
    let method = parse_estimate_method(args.path.as_deref().unwrap_or("general"))?;
    let est: SignalEstimate = match method {
        EstimateMethod::Path(path) => {
            path.check_feasible(&reference)?;
            path.run(&ms, &reference)?
        }
        EstimateMethod::Thermal => estimate_thermal_reference(&ms, &reference),
        EstimateMethod::S02(case) => estimate_gaussian_s02(&ms, &reference, case)?,
    };
    let mut w = output(cli, &args.out.out, cfg).writer()?;
    w.write_all(format_estimate(&est).as_bytes())?;
    if let Some(alt) = &est.alternate {
        writeln!(w, "--- alternate solution ---")?;
        w.write_all(format_estimate(alt).as_bytes())?;
    }
    Ok(())
}

/// Builds the shared trial configuration for bench, sweep and converge.
fn trial_config(cli: &Cli, args: &BenchArgs, cfg: &FileConfig) -> Result<TrialConfig, CliError> {
    let signal = resolve_signal(args.state.signal.as_deref(), cfg)?;
    let reference = resolve_reference(args.state.reference.as_deref(), cfg)?;
    let mut t = TrialConfig::new(signal, reference);
    t.angles = resolve_angles(args.state.angles.as_deref(), cfg)?;
    t.mode = resolve_mode(args.mode.as_deref(), cfg)?;
    t.seed = resolve_seed(cli.seed, cfg)?;
    let bench = cfg.bench.as_ref();
    if let Some(n) = args.shots.or_else(|| cfg.sampling.as_ref().and_then(|s| s.shots)) {
        t.shots = n;
    }
    if let Some(m) = args.trials.or_else(|| bench.and_then(|b| b.trials)) {
        t.trials = m;
    }
    if let Some(b) = args.bootstrap.or_else(|| bench.and_then(|b| b.bootstrap)) {
        t.bootstrap = b;
    }
    if let Some(p) = args.point.or_else(|| bench.and_then(|b| b.point)) {
        t.point = p;
    }
    let path = args
        .path
        .clone()
        .or_else(|| bench.and_then(|b| b.path.clone()))
        .unwrap_or_else(|| "general".to_string());
    t.path = crate::config::parse_bench_path(&path)?;
    Ok(t)
}

fn write_mse_report<W: Write>(w: &mut W, r: &MseReport) -> Result<(), CliError> {
    write!(
        w,
        "# path={} shots={} trials={} trials_failed={} seed={}",
        r.path.name(),
        r.shots,
        r.trials,
        r.trials_failed,
        r.seed
    )?;
    if let Some((axis, value)) = r.axis {
        write!(w, " {axis}={value}")?;
    }
    writeln!(w)?;
    writeln!(w, "param,mse,mse_err,n")?;
    for p in &r.params {
        writeln!(
            w,
            "{},{},{},{}",
            p.name,
            p.mse,
            p.se.map(|v| v.to_string()).unwrap_or_default(),
            p.n
        )?;
    }
    Ok(())
}

fn bench(cli: &Cli, args: &BenchArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let t = trial_config(cli, args, cfg)?;
    let report = run_mse(&t)?;
    let mut w = output(cli, &args.out.out, cfg).writer()?;
    write_mse_report(&mut w, &report)
}

fn run_sweep(cli: &Cli, args: &SweepArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let t = trial_config(cli, &args.bench, cfg)?;
    let sweep_cfg = cfg.sweep.as_ref();
    let axis: SweepAxis = args
        .axis
        .clone()
        .or_else(|| sweep_cfg.and_then(|s| s.axis.clone()))
        .ok_or_else(|| CliError::Config("sweep requires --axis".to_string()))?
        .parse()
        .map_err(CliError::Config)?;
    let values = match &args.values {
        Some(list) => parse_f64_list(list)?,
        None => sweep_cfg
            .and_then(|s| s.values.clone())
            .ok_or_else(|| CliError::Config("sweep requires --values".to_string()))?,
    };
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one axis value".to_string()));
    }
    let points = sweep(&t, axis, &values);
    let mut w = output(cli, &args.bench.out.out, cfg).writer()?;
    write_sweep_csv(&points, &mut w)?;
    Ok(())
}

fn converge(cli: &Cli, args: &ConvergeArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let t = trial_config(cli, &args.bench, cfg)?;
    let n_values = match &args.n_values {
        Some(list) => parse_u64_list(list)?,
        None => cfg
            .converge
            .as_ref()
            .and_then(|c| c.n_values.clone())
            .ok_or_else(|| CliError::Config("converge requires --n-values".to_string()))?,
    };
    if n_values.is_empty() {
        return Err(CliError::Config("converge needs at least one shot budget".to_string()));
    }
    let points = convergence_study(&t, &n_values)?;
    let mut w = output(cli, &args.bench.out.out, cfg).writer()?;
    write_convergence_csv(&points, &mut w)?;
    Ok(())
}

fn validate(cli: &Cli, args: &ValidateArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let dim = args.dim.unwrap_or(DEFAULT_DIM);
    let tol = args.tolerance.unwrap_or(1e-6);
    let report = calibrate_ordering(dim)?;
    let mut failures = Vec::new();
    for (name, residual) in [
        ("kappa2", report.kappa2_residual),
        ("s0", report.s0_residual),
        ("f", report.f_residual),
    ] {
        if !(residual < tol) {
            failures.push(format!("{name} residual {residual:.3e} >= {tol:.1e}"));
        }
    }
    if !report.matches_verified(tol) {
        failures.push(format!("constants drifted from their verified values by >= {tol:.1e}"));
    }
    let mut w = output(cli, &args.out.out, cfg).writer()?;
    writeln!(w, "{report}")?;
    writeln!(w, "verdict: {}", if failures.is_empty() { "PASS" } else { "FAIL" })?;
    drop(w);
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(failures.join("; ")))
    }
}

fn demo(cli: &Cli, args: &DemoArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let report = indistinguishability_demo();
    let mut w = output(cli, &args.out.out, cfg).writer()?;
    write!(w, "{report}")?;
    drop(w);
    let separated = report.resolved.iter().any(|p| p.rel_diff > 1e-2);
    if report.max_matched_rel_diff <= 1e-3 && separated {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "degeneracy check failed: max matched rel diff {:.3e}, displaced reference {} the pair",
            report.max_matched_rel_diff,
            if separated { "separates" } else { "does not separate" }
        )))
    }
}
