//! Command dispatch, artifact writing and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use acim_core::ergodics::{clt_probe, correlations, CorrelationMethod, OrbitOptions};
use acim_core::maps::{self, builtin, first_return_map, min_slope_certificate, validate, ClassReport, MapConfig};
use acim_core::sampler::{self, ks_distance, TargetDistribution, DEFAULT_BURN_IN};
use acim_core::step::fmt17;
use acim_core::transfer::{lower_function, ly_constants};
use acim_core::ulam::{self, build_ulam, invariant_density, spectral_gap_probe, spectral_report};
use acim_core::{ClosedForm, Execution, PiecewiseMap, StepFunction};
use serde::Serialize;

use crate::plot;
use crate::{Cli, Command};

/// Samples per branch for class validation.
const VALIDATE_GRID: usize = 64;
const DEFAULT_LAGS: usize = 50;
const DEFAULT_PROBE_HORIZON: usize = 200;
const DEFAULT_CLT_BLOCK: usize = 10_000;
const DEFAULT_CLT_SAMPLES: usize = 10_000;
const DEFAULT_SAMPLE_COUNT: usize = 100_000;
const DEFAULT_EPS: f64 = 0.1;
const LY_FAMILY: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("map is not in class T\n{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] acim_core::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct Knobs {
    bins: usize,
    tail_tol: f64,
    tol: f64,
    max_iter: usize,
    n_max: Option<usize>,
    seed: u64,
    k: Option<usize>,
    eps: Option<f64>,
    samples: Option<usize>,
    force: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: Command,
    map: &'a str,
    map_name: String,
    map_source: &'static str,
    class_membership: &'static str,
    knobs: Knobs,
    truncation_bounds: BTreeMap<&'static str, f64>,
    artifacts: Vec<String>,
    notes: Vec<String>,
}

struct Run<'a> {
    cli: &'a Cli,
    map: PiecewiseMap,
    source: &'static str,
    membership: &'static str,
    bounds: BTreeMap<&'static str, f64>,
    artifacts: Vec<String>,
    notes: Vec<String>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
        let path = self.cli.out.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn bound(&mut self, name: &'static str, value: f64) {
        self.bounds.insert(name, value);
    }

    fn ulam(&mut self) -> Result<ulam::UlamMatrix> {
        let m = build_ulam(&self.map, self.cli.bins, self.cli.tail_tol, Execution::default())?;
        let defect = m.row_defect().iter().copied().fold(0.0, f64::max);
        self.bound("ulam_max_row_defect", defect);
        Ok(m)
    }

    fn density(&mut self) -> Result<StepFunction> {
        let m = self.ulam()?;
        let d = invariant_density(&m, self.cli.tol, self.cli.max_iter, Execution::default())?;
        self.bound("power_iteration_residual", d.residual);
        if !d.converged {
            self.notes.push(format!("power iteration stopped after {} iterations", d.iterations));
        }
        Ok(d.density)
    }
}

fn check_knobs(cli: &Cli) -> Result<()> {
    let usage = |m: String| Err(CliError::Usage(m));
    if !(2..=1 << 20).contains(&cli.bins) {
        return usage(format!("--bins must lie in [2, 2^20], got {}", cli.bins));
    }
    if !(cli.tail_tol > 0.0 && cli.tail_tol <= 0.1) {
        return usage(format!("--tail-tol must lie in (0, 0.1], got {}", cli.tail_tol));
    }
    if !(cli.tol > 0.0) {
        return usage(format!("--tol must be positive, got {}", cli.tol));
    }
    if cli.max_iter == 0 {
        return usage("--max-iter must be at least 1".into());
    }
    if let Some(e) = cli.eps {
        if !(e > 0.0 && e < 1.0) {
            return usage(format!("--eps must lie in (0, 1), got {e}"));
        }
    }
    if cli.k.is_some_and(|k| k < 2) {
        return usage("--k must be at least 2".into());
    }
    Ok(())
}

fn violation_list(report: &ClassReport) -> String {
    report.violations.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n")
}

/// Resolve `--map` to a map, validating configuration files unless forced.
fn load_map(cli: &Cli) -> Result<(PiecewiseMap, &'static str, &'static str, Option<ClassReport>)> {
    if builtin::NAMES.contains(&cli.map.as_str()) {
        return Ok((builtin(&cli.map, cli.k)?, "builtin", "builtin", None));
    }
    let path = Path::new(&cli.map);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "--map {:?} is neither a built-in ({}) nor an existing file",
            cli.map,
            builtin::NAMES.join(", ")
        )));
    }
    let config = MapConfig::from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
    let map = config.build(cli.tail_tol)?;
    let report = validate(&map, VALIDATE_GRID, cli.tail_tol)?;
    let membership = match (report.in_t, cli.force) {
        (true, _) => "verified",
        (false, true) => "unverified class membership",
        (false, false) if cli.command == Command::Validate => "rejected",
        (false, false) => return Err(CliError::Validation(violation_list(&report))),
    };
    Ok((map, "file", membership, Some(report)))
}

pub fn dispatch(cli: &Cli) -> Result<String> {
    check_knobs(cli)?;
    let (map, source, membership, report) = load_map(cli)?;
    fs::create_dir_all(&cli.out).map_err(|source| CliError::Io {
        path: cli.out.clone(),
        source,
    })?;
    let mut run = Run {
        cli,
        map,
        source,
        membership,
        bounds: BTreeMap::new(),
        artifacts: Vec::new(),
        notes: Vec::new(),
    };
    if membership == "unverified class membership" {
        run.notes.push("results computed with --force on a map that failed validation".into());
    }
    let map_for_graph = run.map.clone();
    run.write("map_graph.csv", |w| plot::write_map_graph(&map_for_graph, plot::GRAPH_POINTS, w))?;

    let outcome = match cli.command {
        Command::Validate => cmd_validate(&mut run, report),
        Command::Density => cmd_density(&mut run),
        Command::Spectrum => cmd_spectrum(&mut run),
        Command::Correlations => cmd_correlations(&mut run),
        Command::Clt => cmd_clt(&mut run),
        Command::Sample => cmd_sample(&mut run),
        Command::LyCheck => cmd_ly_check(&mut run),
        Command::FirstReturn => cmd_first_return(&mut run),
    };
    // the manifest is written even when validation fails
    write_manifest(&mut run)?;
    outcome
}

fn write_manifest(run: &mut Run) -> Result<()> {
    let cli = run.cli;
    let mut artifacts = run.artifacts.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        tool: "acim",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command,
        map: &cli.map,
        map_name: run.map.name().to_string(),
        map_source: run.source,
        class_membership: run.membership,
        knobs: Knobs {
            bins: cli.bins,
            tail_tol: cli.tail_tol,
            tol: cli.tol,
            max_iter: cli.max_iter,
            n_max: cli.n_max,
            seed: cli.seed,
            k: cli.k,
            eps: cli.eps,
            samples: cli.samples,
            force: cli.force,
        },
        truncation_bounds: run.bounds.clone(),
        artifacts,
        notes: run.notes.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    run.write("manifest.json", |w| writeln!(w, "{text}"))
}

fn cmd_validate(run: &mut Run, report: Option<ClassReport>) -> Result<String> {
    let report = match report {
        Some(r) => r,
        None => validate(&run.map, VALIDATE_GRID, run.cli.tail_tol)?,
    };
    run.bound("validation_tail_bound", report.tail_bound);
    let r = report.clone();
    run.write("validation.csv", |w| {
        writeln!(w, "in_t,in_te,alpha,r,beta,slope_sum,branches_checked,tail_bound")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.in_t,
            r.in_te,
            fmt17(r.alpha),
            r.r.map_or_else(String::new, fmt17),
            fmt17(r.beta),
            fmt17(r.slope_sum),
            r.branches_checked,
            fmt17(r.tail_bound)
        )
    })?;
    run.write("violations.csv", |w| {
        writeln!(w, "condition,detail")?;
        for v in &r.violations {
            writeln!(w, "{},\"{}\"", v.condition(), v.to_string().replace('"', "'"))?;
        }
        Ok(())
    })?;
    if !report.in_t {
        return Err(CliError::Validation(violation_list(&report)));
    }
    Ok(format!(
        "{}: in T, in T_E = {}, alpha = {}, beta = {}",
        run.map.name(),
        report.in_te,
        report.alpha,
        report.beta
    ))
}

fn cmd_density(run: &mut Run) -> Result<String> {
    let d = run.density()?;
    run.write("density.csv", |w| d.write_csv(w))?;
    run.write("density_curve.csv", |w| plot::write_density_curve(&d, w))?;
    Ok(format!("{}: density on {} bins, mass {}", run.map.name(), run.cli.bins, d.integral()))
}

fn cmd_spectrum(run: &mut Run) -> Result<String> {
    let m = run.ulam()?;
    let horizon = run.cli.n_max.unwrap_or(DEFAULT_PROBE_HORIZON);
    let r = spectral_report(&m, run.cli.tol, run.cli.max_iter, horizon, Execution::default())?;
    run.bound("power_iteration_residual", r.residual);
    if r.gap_degenerate {
        run.notes.push("probe norms collapsed to zero; q_fit reported as 0".into());
    }
    let mass: Vec<f64> = r.density.values().iter().map(|v| v / run.cli.bins as f64).collect();
    let gap = spectral_gap_probe(&m, &mass, horizon, Execution::default())?;
    run.write("spectrum.csv", |w| r.write_summary(w))?;
    run.write("gap_norms.csv", |w| {
        writeln!(w, "n,norm")?;
        for (n, v) in gap.norms.iter().enumerate() {
            writeln!(w, "{n},{}", fmt17(*v))?;
        }
        Ok(())
    })?;
    run.write("density.csv", |w| r.density.write_csv(w))?;
    Ok(format!("{}: |lambda2| = {}, q_fit = {}", run.map.name(), r.lambda2_abs, r.q_fit))
}

fn cmd_correlations(run: &mut Run) -> Result<String> {
    let mu = run.density()?;
    let lags = run.cli.n_max.unwrap_or(DEFAULT_LAGS);
    let f = StepFunction::discretize(|x| x - 0.5, run.cli.bins)?;
    let opts = OrbitOptions {
        seed: run.cli.seed,
        ..OrbitOptions::default()
    };
    let exact = correlations(
        &run.map,
        &mu,
        &f,
        &f,
        lags,
        CorrelationMethod::ExactMatrix,
        run.cli.tail_tol,
        opts,
        Execution::default(),
    );
    let report = match exact {
        Ok(r) => r,
        Err(e @ (acim_core::Error::MethodUnavailable(_) | acim_core::Error::TruncationOverflow { .. })) => {
            run.notes.push(format!("exact correlations unavailable ({e}); used orbit averages"));
            correlations(
                &run.map,
                &mu,
                &f,
                &f,
                lags,
                CorrelationMethod::OrbitAverage,
                run.cli.tail_tol,
                opts,
                Execution::default(),
            )?
        }
        Err(e) => return Err(e.into()),
    };
    run.bound("correlation_truncation", report.truncation_bound);
    run.write("correlations.csv", |w| plot::write_correlations(&report.values, w))?;
    run.write("correlation_fit.csv", |w| {
        writeln!(w, "method,q,prefactor,flagged")?;
        let method = match report.method {
            CorrelationMethod::ExactMatrix => "exact-matrix",
            CorrelationMethod::OrbitAverage => "orbit-average",
        };
        writeln!(w, "{method},{},{},{}", fmt17(report.q), fmt17(report.c_prefactor), report.fit_flagged)
    })?;
    Ok(format!("{}: C_1 = {}, q = {}", run.map.name(), report.values.get(1).copied().unwrap_or(0.0), report.q))
}

fn cmd_clt(run: &mut Run) -> Result<String> {
    let mu = run.density()?;
    // center x against the computed density
    let mean: f64 = mu.pieces().map(|(l, r, v)| v * 0.5 * (r * r - l * l)).sum::<f64>() / mu.integral();
    let f = ClosedForm::new(move |x: f64| x - mean, mean.max(1.0 - mean)).with_lipschitz(1.0);
    let n = run.cli.n_max.unwrap_or(DEFAULT_CLT_BLOCK);
    let samples = run.cli.samples.unwrap_or(DEFAULT_CLT_SAMPLES);
    let r = clt_probe(&run.map, &mu, &f, n, samples, run.cli.seed, run.cli.tail_tol, Execution::default())?;
    if r.green_kubo.is_none() {
        run.notes.push("Green–Kubo variance unavailable for this map".into());
    }
    if r.degenerate {
        run.notes.push("all normalized sums coincide; variance is zero".into());
    }
    run.write("clt_sums.csv", |w| r.write_sums(w))?;
    run.write("clt_summary.csv", |w| r.write_summary(w))?;
    Ok(format!("{}: sigma2 = {}, normal distance = {}", run.map.name(), r.sigma2, r.normal_distance))
}

fn cmd_sample(run: &mut Run) -> Result<String> {
    let count = run.cli.n_max.unwrap_or(DEFAULT_SAMPLE_COUNT);
    let xs = sampler::sample(&run.map, 0.5, count, DEFAULT_BURN_IN, run.cli.seed)?;
    let ks = if run.map.name() == "conjugated_exp" {
        let target = TargetDistribution::exponential();
        ks_distance(&xs, |x| target.cdf(x))?
    } else {
        let mu = run.density()?;
        let mass = mu.integral();
        ks_distance(&xs, |x| mu.cumulative(x) / mass)?
    };
    run.write("samples.csv", |w| sampler::write_samples(w, &xs))?;
    run.write("sample_summary.csv", |w| {
        sampler::write_sample_summary(w, count, ks, DEFAULT_BURN_IN, run.cli.seed)
    })?;
    let lag1 = sampler::lag1_autocorrelation(&xs);
    Ok(format!("{}: {count} samples, KS = {ks}, lag-1 autocorrelation = {lag1}", run.map.name()))
}

fn cmd_ly_check(run: &mut Run) -> Result<String> {
    let c = ly_constants(&run.map, run.cli.tail_tol)?;
    run.bound("ly_truncation", c.truncation_bound);
    run.write("ly_constants.csv", |w| {
        writeln!(w, "alpha,D,K,r,truncation_bound")?;
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(c.alpha),
            fmt17(c.d),
            fmt17(c.k),
            c.r.map_or_else(String::new, fmt17),
            fmt17(c.truncation_bound)
        )
    })?;
    let h = lower_function(&c);
    run.write("lower_function.csv", |w| h.write_csv(w))?;

    let n = match min_slope_certificate(&run.map, 2.0, 16, run.cli.tail_tol) {
        Ok((n0, _)) => n0,
        Err(e) => {
            run.notes.push(format!("no expansion certificate: {e}"));
            1
        }
    };
    match ulam::ly_probe(&run.map, n, LY_FAMILY, run.cli.seed, run.cli.tail_tol) {
        Ok(p) => {
            run.write("ly_probe.csv", |w| {
                writeln!(w, "label,var_f,var_pnf,l1,b_needed")?;
                for x in &p.witnesses {
                    writeln!(w, "{},{},{},{},{}", x.label, fmt17(x.var_f), fmt17(x.var_pnf), fmt17(x.l1), fmt17(x.b_needed))?;
                }
                Ok(())
            })?;
            run.notes.push(format!("variation probe at n = {n}: B_n = {}", p.b_n_est));
        }
        Err(e @ (acim_core::Error::NonAffineBranch { .. } | acim_core::Error::TruncationOverflow { .. })) => {
            run.notes.push(format!("variation probe skipped: {e}"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(format!("{}: alpha = {}, D = {}, K = {}", run.map.name(), c.alpha, c.d, c.k))
}

fn cmd_first_return(run: &mut Run) -> Result<String> {
    let eps = run.cli.eps.unwrap_or(DEFAULT_EPS);
    let fr = first_return_map(&run.map, eps, maps::config::DEFAULT_MAX_RETURN_TIME, run.cli.tail_tol)?;
    run.bound("unreturned_mass", 1.0 - fr.captured_mass);
    run.write("first_return.csv", |w| {
        writeln!(w, "a,b,return_time,left_slope,image_left,image_right")?;
        for (b, t) in fr.original_branches.iter().zip(&fr.return_times) {
            writeln!(
                w,
                "{},{},{t},{},{},{}",
                fmt17(b.a()),
                fmt17(b.b()),
                fmt17(b.left_slope()),
                fmt17(b.image_left()),
                fmt17(b.image_right())
            )?;
        }
        Ok(())
    })?;
    let induced = fr.map.clone();
    run.write("first_return_graph.csv", |w| plot::write_map_graph(&induced, plot::GRAPH_POINTS, w))?;
    Ok(format!(
        "{}: {} branches, captured mass {}",
        run.map.name(),
        fr.original_branches.len(),
        fr.captured_mass
    ))
}
