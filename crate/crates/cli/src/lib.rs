//! `ginoe` command-line driver.
//!
//! Every subcommand prints its main JSON result on stdout. With `--out DIR`
//! the outputs are also written to `DIR` together with `manifest.json`.

pub mod config;
pub mod manifest;
pub mod selftest;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ginoe_core::cumulants::{self, CumulantReport};
use ginoe_core::ensemble::{self, EnsembleConfig, EnsembleSummary, KStatistics, NormalityTest, SampleFailure};
use ginoe_core::quadrature::{self, DiskProfile, GaussianProfile, QuadratureSpec, RadialProfile};
use ginoe_core::{kernel, reference_square, Complex64, Error, PolygonDomain};
use serde::Serialize;
use serde_json::{json, Value};

use config::Config;
use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ginoe", version, about = "Eigenvalue counting statistics of the real Ginibre ensemble")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GINOE_THREADS")]
    pub threads: Option<usize>,
    /// TOML or JSON file overriding tolerances and resolutions.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample matrices; write per-sample counts and spectra.
    Sample(EnsembleArgs),
    /// Ensemble CLT run: counts CSV and a summary against the prediction.
    Clt(EnsembleArgs),
    /// Variance of the count from kernel quadrature.
    Variance(VarianceArgs),
    /// First-intensity integral and its boundary defect.
    Intensity(IntensityArgs),
    /// Cyclic kernel integral R_m by Monte Carlo.
    Rk(RkArgs),
    /// Boundary-layer integral for a radial profile.
    LinLimit(LinLimitArgs),
    /// Kernel entries S, D, I at a pair of points.
    Kernel(KernelArgs),
    /// Empirical, quadrature and predicted cumulants side by side.
    Report(ReportArgs),
    /// Run the quick invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DomainArgs {
    /// Domain JSON file `{"vertices": [[re, im], ...]}`; repeatable. Defaults
    /// to the square [0.1, 0.5] x [0.3, 0.7].
    #[arg(long = "domain")]
    pub domains: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMethod {
    Boundary,
    Covariogram,
}

#[derive(Debug, Args, Serialize)]
pub struct VarianceArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = VarianceMethod::Boundary)]
    pub method: VarianceMethod,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct IntensityArgs {
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RkArgs {
    #[arg(long)]
    pub n: usize,
    /// Cycle length (1 to 3).
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Monte Carlo samples (default from the config).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// exp(-param r^2)
    Gaussian,
    /// indicator of r <= param
    Disk,
}

#[derive(Debug, Args, Serialize)]
pub struct LinLimitArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = ProfileKind::Gaussian)]
    pub profile: ProfileKind,
    /// Profile parameter: Gaussian rate or disk radius.
    #[arg(long, default_value_t = 1.0)]
    pub param: f64,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct KernelArgs {
    #[arg(long)]
    pub n: usize,
    /// First point as `re,im`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub z: Complex64,
    /// Second point as `re,im`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub w: Complex64,
    /// Interpret the points on the unit-disk scale (multiply by sqrt(N)).
    #[arg(long)]
    pub scaled: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub n: usize,
    /// Ensemble samples.
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo samples for the kernel integrals (default from the config).
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn parse_point(s: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `re,im`, got `{s}`"));
    }
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
    Ok(Complex64::new(p(parts[0])?, p(parts[1])?))
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Tolerance(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Tolerance(_) => EXIT_TOLERANCE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Tolerance(m) => write!(f, "tolerance failure: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Accuracy { .. } => CliError::Tolerance(msg),
            Error::Overflow { .. } | Error::Conditioning(_) | Error::Solver { .. } | Error::TooManyFailures { .. } => {
                CliError::Runtime(msg)
            }
            _ => CliError::Validation(msg),
        }
    }
}

/// Result of one subcommand: the stdout JSON, files for `--out`, and whether
/// the run met its tolerances.
struct Outcome {
    stdout: Value,
    files: Vec<(String, String)>,
    failure: Option<String>,
}

impl Outcome {
    fn json(v: Value) -> Self {
        let text = pretty(&v);
        Self { stdout: v, files: vec![("result.json".into(), text)], failure: None }
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_domains(args: &DomainArgs, cfg: &Config) -> Result<Vec<PolygonDomain>, CliError> {
    let domains = if args.domains.is_empty() {
        vec![reference_square()]
    } else {
        args.domains
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", p.display())))?;
                PolygonDomain::from_json(&text).map_err(CliError::from)
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    for d in &domains {
        d.check_admissible(cfg.delta_min)?;
    }
    Ok(domains)
}

fn single_domain(args: &DomainArgs, cfg: &Config) -> Result<PolygonDomain, CliError> {
    let mut d = load_domains(args, cfg)?;
    if d.len() != 1 {
        return Err(CliError::Validation("this subcommand takes exactly one --domain".into()));
    }
    Ok(d.remove(0))
}

fn positive(what: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Validation(format!("--{what} must be positive")));
    }
    Ok(())
}

fn with_target(spec: QuadratureSpec, cfg: &Config) -> QuadratureSpec {
    match cfg.error_target {
        Some(t) => spec.with_target(t),
        None => spec,
    }
}

fn ensemble_config(args: &EnsembleArgs, cfg: &Config, keep_spectra: bool) -> Result<EnsembleConfig, CliError> {
    positive("n", args.n)?;
    positive("samples", args.samples)?;
    let mut ec = EnsembleConfig::new(args.n, args.samples, args.seed, load_domains(&args.domain, cfg)?);
    ec.eig_residual_tol = cfg.eig_residual_tol;
    ec.delta_min = cfg.delta_min;
    ec.keep_spectra = keep_spectra;
    if let Some(v) = cfg.verification {
        ec.verification = v;
    }
    Ok(ec)
}

fn cmd_sample(args: &EnsembleArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let run = ensemble::count_statistics(&ensemble_config(args, cfg, true)?)?;
    let mut eig = String::from("sample_index,re,im\n");
    for r in &run.records {
        for z in r.eigenvalues.as_deref().unwrap_or(&[]) {
            eig.push_str(&format!("{},{:?},{:?}\n", r.sample_index, z.re, z.im));
        }
    }
    Ok(Outcome {
        stdout: serde_json::to_value(&run.summary).expect("summary"),
        files: vec![
            ("records.csv".into(), ensemble::records_csv(&run.records)),
            ("eigenvalues.csv".into(), eig),
            ("summary.json".into(), pretty(&run.summary)),
        ],
        failure: None,
    })
}

#[derive(Debug, Serialize)]
struct CltDomain {
    domain_id: usize,
    domain_hash: String,
    area: f64,
    perimeter: f64,
    mean: f64,
    mean_error: f64,
    leading_mean: f64,
    variance: f64,
    variance_error: f64,
    /// `perimeter sqrt(N) / (2 pi^{3/2})`.
    predicted_variance: f64,
    variance_scaled: f64,
    variance_scaled_error: f64,
    prediction_scaled: f64,
    relative_deviation: f64,
    skewness: f64,
    skewness_error: f64,
    excess_kurtosis: f64,
    excess_kurtosis_error: f64,
    normality: Option<NormalityTest>,
    within_tolerance: bool,
}

#[derive(Debug, Serialize)]
struct CltSummary {
    command: &'static str,
    #[serde(rename = "N")]
    n: usize,
    samples: usize,
    seed: u64,
    completed: usize,
    failures: Vec<SampleFailure>,
    mean_real_eigs: f64,
    domains: Vec<CltDomain>,
}

fn clt_summary(s: &EnsembleSummary, domains: &[PolygonDomain], cfg: &Config) -> CltSummary {
    let sqrt_n = (s.n as f64).sqrt();
    let rows = s
        .domains
        .iter()
        .zip(domains)
        .map(|(d, dom)| {
            let st: &KStatistics = &d.stats;
            let rel = d.variance_scaled / d.prediction - 1.0;
            let shape_ok = st.skewness.abs() <= cfg.max_abs_skewness && st.excess_kurtosis.abs() <= cfg.max_abs_excess_kurtosis;
            CltDomain {
                domain_id: d.domain_id,
                domain_hash: d.domain_hash.clone(),
                area: dom.area(),
                perimeter: dom.perimeter(),
                mean: d.mean,
                mean_error: st.k_errors[0],
                leading_mean: d.leading_mean,
                variance: d.variance,
                variance_error: st.k_errors[1],
                predicted_variance: d.prediction * sqrt_n,
                variance_scaled: d.variance_scaled,
                variance_scaled_error: d.variance_scaled_error,
                prediction_scaled: d.prediction,
                relative_deviation: rel,
                skewness: st.skewness,
                skewness_error: st.skewness_error,
                excess_kurtosis: st.excess_kurtosis,
                excess_kurtosis_error: st.excess_kurtosis_error,
                normality: d.normality.clone(),
                within_tolerance: rel.abs() <= cfg.clt_rel_tol && shape_ok && d.normality.as_ref().is_some_and(|t| t.passed),
            }
        })
        .collect();
    CltSummary {
        command: "clt",
        n: s.n,
        samples: s.m_samples,
        seed: s.master_seed,
        completed: s.completed,
        failures: s.failures.clone(),
        mean_real_eigs: s.mean_real_eigs,
        domains: rows,
    }
}

fn cmd_clt(args: &EnsembleArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let ec = ensemble_config(args, cfg, false)?;
    let run = ensemble::count_statistics(&ec)?;
    let summary = clt_summary(&run.summary, &ec.domains, cfg);
    Ok(Outcome {
        stdout: serde_json::to_value(&summary).expect("summary"),
        files: vec![("counts.csv".into(), ensemble::records_csv(&run.records)), ("summary.json".into(), pretty(&summary))],
        failure: None,
    })
}

fn cmd_variance(args: &VarianceArgs, cfg: &Config) -> Result<Outcome, CliError> {
    positive("n", args.n)?;
    let d = single_domain(&args.domain, cfg)?;
    let est = match args.method {
        VarianceMethod::Boundary => quadrature::variance_integral(&d, args.n, &with_target(QuadratureSpec::boundary(cfg.band_resolution), cfg))?,
        VarianceMethod::Covariogram => quadrature::variance_integral_covariogram(&d, args.n)?,
    };
    let sqrt_n = (args.n as f64).sqrt();
    let prediction = cumulants::clt_prediction(&d) * sqrt_n;
    Ok(Outcome::json(json!({
        "command": "variance",
        "value": est.value,
        "std_error": est.std_error,
        "N": args.n,
        "domain_hash": d.hash(),
        "seed": null,
        "method": args.method,
        "quadrature": est.value,
        "prediction": prediction,
        "scaled": est.value / sqrt_n,
        "relative_deviation": est.value / prediction - 1.0,
    })))
}

fn cmd_intensity(args: &IntensityArgs, cfg: &Config) -> Result<Outcome, CliError> {
    positive("n", args.n)?;
    let d = single_domain(&args.domain, cfg)?;
    let e = quadrature::intensity_integral(&d, args.n, &with_target(QuadratureSpec::grid(cfg.grid_resolution), cfg))?;
    Ok(Outcome::json(json!({
        "command": "intensity",
        "value": e.integral.value,
        "std_error": e.integral.std_error,
        "N": args.n,
        "domain_hash": d.hash(),
        "seed": null,
        "leading": e.leading,
        "defect": e.defect,
        "correction": e.correction,
    })))
}

fn cmd_rk(args: &RkArgs, cfg: &Config) -> Result<Outcome, CliError> {
    positive("n", args.n)?;
    let d = single_domain(&args.domain, cfg)?;
    let samples = args.samples.unwrap_or(cfg.mc_samples);
    let spec = with_target(QuadratureSpec::monte_carlo(samples, args.seed), cfg);
    let e = quadrature::r_m_integral(&d, args.m, args.n, &spec)?;
    let leading = args.n as f64 / PI * d.area();
    Ok(Outcome::json(json!({
        "command": "rk",
        "value": e.value.re,
        "std_error": e.std_error_re,
        "N": args.n,
        "domain_hash": d.hash(),
        "seed": args.seed,
        "m": args.m,
        "samples": samples,
        "imaginary": e.value.im,
        "imaginary_std_error": e.std_error_im,
        "leading": leading,
        "relative_defect": (e.value.re - leading) / args.n as f64,
    })))
}

fn cmd_lin_limit(args: &LinLimitArgs, cfg: &Config) -> Result<Outcome, CliError> {
    positive("n", args.n)?;
    let d = single_domain(&args.domain, cfg)?;
    let profile: Box<dyn RadialProfile> = match args.profile {
        ProfileKind::Gaussian => Box::new(GaussianProfile { alpha: args.param }),
        ProfileKind::Disk => Box::new(DiskProfile { radius: args.param }),
    };
    let e = quadrature::lin_limit(&d, profile.as_ref(), args.n, &with_target(QuadratureSpec::boundary(cfg.band_resolution), cfg))?;
    Ok(Outcome::json(json!({
        "command": "lin-limit",
        "value": e.value,
        "std_error": e.std_error,
        "N": args.n,
        "domain_hash": d.hash(),
        "seed": null,
        "profile": args.profile,
        "param": args.param,
        "perimeter": d.perimeter(),
        "per_length": e.value / d.perimeter(),
    })))
}

fn cmd_kernel(args: &KernelArgs) -> Result<Outcome, CliError> {
    positive("n", args.n)?;
    let b = kernel::kernel_block(args.z, args.w, args.n, args.scaled)?;
    let s = (args.n as f64).sqrt();
    let (zu, wu) = if args.scaled { (args.z, args.w) } else { (args.z / s, args.w / s) };
    let dist = |u: Complex64| u.im.min(1.0 - u.norm());
    let c = |v: Complex64| json!({"re": v.re, "im": v.im, "abs": v.norm()});
    Ok(Outcome::json(json!({
        "command": "kernel",
        "N": args.n,
        "scaled": args.scaled,
        "z": [args.z.re, args.z.im],
        "w": [args.w.re, args.w.im],
        "S": c(b.s_fwd),
        "S_rev": c(b.s_rev),
        "D": c(b.d),
        "I": c(b.i),
        "diagnostics": {
            "unit_scale_distance": dist(zu).min(dist(wu)),
            "pair_distance": (zu - wu).norm(),
            "gaussian_envelope": (-(args.n as f64) / 2.0 * (zu - wu).norm_sqr()).exp(),
            "log_abs_D_per_N": b.d.norm().ln() / args.n as f64,
            "log_abs_I_per_N": b.i.norm().ln() / args.n as f64,
        },
    })))
}

#[derive(Debug, Serialize)]
struct ReportRow {
    order: usize,
    empirical: f64,
    empirical_error: f64,
    quadrature: Option<f64>,
    quadrature_error: Option<f64>,
    prediction: f64,
    /// Largest pairwise gap between available sources.
    spread: f64,
    /// `sqrt` of the summed squared errors.
    combined_error: f64,
    consistent: bool,
}

#[derive(Debug, Serialize)]
struct Report {
    command: &'static str,
    #[serde(rename = "N")]
    n: usize,
    samples: usize,
    seed: u64,
    mc_samples: usize,
    domain_hash: String,
    reports: Vec<CumulantReport>,
    table: Vec<ReportRow>,
}

fn report_table(emp: &CumulantReport, quad: &CumulantReport, pred: &CumulantReport) -> Vec<ReportRow> {
    (0..emp.cumulants.len())
        .map(|i| {
            let q = quad.cumulants.get(i).copied();
            let qe = quad.cumulant_errors.get(i).copied();
            let mut vals = vec![emp.cumulants[i], pred.cumulants[i]];
            vals.extend(q);
            let spread = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let combined_error = (emp.cumulant_errors[i].powi(2) + qe.unwrap_or(0.0).powi(2) + pred.cumulant_errors[i].powi(2)).sqrt();
            ReportRow {
                order: i + 1,
                empirical: emp.cumulants[i],
                empirical_error: emp.cumulant_errors[i],
                quadrature: q,
                quadrature_error: qe,
                prediction: pred.cumulants[i],
                spread,
                combined_error,
                consistent: spread <= 3.0 * combined_error,
            }
        })
        .collect()
}

fn cmd_report(args: &ReportArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let ea = EnsembleArgs { n: args.n, samples: args.samples, seed: args.seed, domain: DomainArgs { domains: args.domain.domains.clone() } };
    let ec = ensemble_config(&ea, cfg, false)?;
    if ec.domains.len() != 1 {
        return Err(CliError::Validation("report takes exactly one --domain".into()));
    }
    let d = ec.domains[0].clone();
    let n_max = ensemble::MAX_CUMULANT_ORDER;
    let run = ensemble::count_statistics(&ec)?;
    let emp = ensemble::empirical_cumulant_report(&ensemble::counts_of(&run.records, 0), args.n, n_max, d.hash())?;
    let mc = args.mc_samples.unwrap_or(cfg.mc_samples);
    let quad = cumulants::quadrature_cumulant_report(&d, args.n, quadrature::R_MAX_M, &with_target(QuadratureSpec::monte_carlo(mc, args.seed), cfg))?;
    let pred = cumulants::prediction_report(&d, args.n, n_max)?;
    let table = report_table(&emp, &quad, &pred);
    let mut csv = String::from("order,empirical,empirical_error,quadrature,quadrature_error,prediction,spread,combined_error,consistent\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in &table {
        csv.push_str(&format!(
            "{},{:?},{:?},{},{},{:?},{:?},{:?},{}\n",
            r.order,
            r.empirical,
            r.empirical_error,
            opt(r.quadrature),
            opt(r.quadrature_error),
            r.prediction,
            r.spread,
            r.combined_error,
            r.consistent
        ));
    }
    let report = Report {
        command: "report",
        n: args.n,
        samples: args.samples,
        seed: args.seed,
        mc_samples: mc,
        domain_hash: d.hash(),
        reports: vec![emp, quad, pred],
        table,
    };
    Ok(Outcome {
        stdout: serde_json::to_value(&report).expect("report"),
        files: vec![("report.json".into(), pretty(&report)), ("report.csv".into(), csv)],
        failure: None,
    })
}

fn cmd_selftest(args: &SelftestArgs) -> Result<Outcome, CliError> {
    let r = selftest::run(args.seed);
    for c in &r.checks {
        eprintln!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let mut out = Outcome::json(json!({"command": "selftest", "passed": r.passed, "checks": r.checks}));
    if !failed.is_empty() {
        out.failure = Some(failed.join(", "));
    }
    Ok(out)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Sample(_) => "sample",
        Command::Clt(_) => "clt",
        Command::Variance(_) => "variance",
        Command::Intensity(_) => "intensity",
        Command::Rk(_) => "rk",
        Command::LinLimit(_) => "lin-limit",
        Command::Kernel(_) => "kernel",
        Command::Report(_) => "report",
        Command::Selftest(_) => "selftest",
    }
}

fn command_args(c: &Command) -> Value {
    let v = match c {
        Command::Sample(a) | Command::Clt(a) => serde_json::to_value(a),
        Command::Variance(a) => serde_json::to_value(a),
        Command::Intensity(a) => serde_json::to_value(a),
        Command::Rk(a) => serde_json::to_value(a),
        Command::LinLimit(a) => serde_json::to_value(a),
        Command::Kernel(a) => serde_json::to_value(a),
        Command::Report(a) => serde_json::to_value(a),
        Command::Selftest(a) => serde_json::to_value(a),
    };
    v.expect("arguments serialize")
}

fn dispatch(cli: &Cli, cfg: &Config) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Sample(a) => cmd_sample(a, cfg),
        Command::Clt(a) => cmd_clt(a, cfg),
        Command::Variance(a) => cmd_variance(a, cfg),
        Command::Intensity(a) => cmd_intensity(a, cfg),
        Command::Rk(a) => cmd_rk(a, cfg),
        Command::LinLimit(a) => cmd_lin_limit(a, cfg),
        Command::Kernel(a) => cmd_kernel(a),
        Command::Report(a) => cmd_report(a, cfg),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

fn write_outputs(dir: &Path, cli: &Cli, cfg: &Config, files: &[(String, String)]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("writing to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, text) in files {
        std::fs::write(dir.join(name), text).map_err(io)?;
    }
    let hashed = json!({
        "command": command_name(&cli.command),
        "args": command_args(&cli.command),
        "config": cfg,
    });
    let manifest = RunManifest::new(command_name(&cli.command), &hashed, files.iter().map(|(n, _)| n.clone()).collect());
    std::fs::write(dir.join("manifest.json"), pretty(&manifest)).map_err(io)?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<Option<String>, CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(CliError::Validation)?,
        None => Config::default(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let outcome = pool.install(|| dispatch(cli, &cfg))?;
    println!("{}", serde_json::to_string_pretty(&outcome.stdout).expect("json"));
    if let Some(dir) = &cli.out {
        write_outputs(dir, cli, &cfg, &outcome.files)?;
    }
    Ok(outcome.failure)
}

/// Parses `argv` (including the program name), runs the subcommand, and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(None) => EXIT_OK,
        Ok(Some(failed)) => {
            eprintln!("tolerance failure: {failed}");
            EXIT_TOLERANCE
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
