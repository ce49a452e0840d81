//! Command-line front end. Every run writes its artifacts plus a
//! `manifest.json` that echoes the resolved configuration, so a run can be
//! repeated with `rerun`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    param_name, parameter_count, parse_param_name, AgeBins, AgeCategory, ParameterFile,
    ParameterVector, RespondentRecord, Stratum,
};
use crate::error::{Error, Result};
use crate::estimation::{
    bootstrap_from_fit, fit_mle, format_interval, BootstrapOptions, BootstrapResult, FitOptions,
    FitResult, Interval, ReplicateDiagnostic, DEFAULT_INIT_CONTACT, DEFAULT_INIT_HOME,
    TOL_BOUNDARY,
};
use crate::ingest::{ingest_diary, read_records, write_records, DayFilter};
use crate::model_selection::{bonferroni, lrt};
use crate::network::{
    adjacency_text, distribution_csv, distribution_dot, distribution_intervals,
    enumerate_distribution, EnumerateOptions, NetworkDistribution, DEFAULT_STATE_BUDGET,
};
use crate::optim::BfgsOptions;
use crate::simulation::{
    recovery_study, simulate_dataset, validity_check, SimDesign, SimDesignFile, ValidityRow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_RESOURCE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hhcontact",
    version,
    about = "Household contact networks from egocentric diaries"
)]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "HHCONTACT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Aggregate a raw diary CSV into respondent records.
    Ingest(IngestArgs),
    /// Maximum-likelihood fit.
    Fit(FitArgs),
    /// Fit plus percentile bootstrap intervals.
    Bootstrap(BootstrapArgs),
    /// Likelihood-ratio test for a stratum effect.
    Lrt(LrtArgs),
    /// Exact network distribution for one household.
    Enumerate(EnumerateArgs),
    /// Simulate data or run a parameter-recovery study.
    Simulate(SimulateArgs),
    /// Compare at-home estimates with observed any-contact shares.
    Validate(ValidateArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower bounds of the age categories in years.
    #[arg(long, default_value = "0,6,12,19,36")]
    pub bins: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Which diary days to keep: all, first or second.
    #[arg(long, default_value = "all")]
    pub days: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Aggregated records CSV.
    #[arg(long)]
    pub records: PathBuf,
    /// Starting parameters (JSON parameter file); default is 0.9 home, 0.8 contact.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LrtArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// weekend, holiday or large_household.
    #[arg(long)]
    pub stratum: String,
    /// Parameters shared by both levels, e.g. contact.0-5x0-5,home.36+.
    #[arg(long, value_delimiter = ',')]
    pub tied: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of tests in the family, for the Bonferroni correction.
    #[arg(long, default_value_t = 1)]
    pub tests: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EnumerateArgs {
    /// Age-category labels of the household members, e.g. 0-5,0-5,19-35,19-35.
    #[arg(long, value_delimiter = ',', required = true)]
    pub members: Vec<String>,
    /// Parameter file, or `published` for the bundled published estimates.
    #[arg(
        long,
        required_unless_present = "bootstrap",
        conflicts_with = "bootstrap"
    )]
    pub params: Option<String>,
    /// Bootstrap report: its point estimate and replicates replace `--params`
    /// and add intervals.
    #[arg(long)]
    pub bootstrap: Option<PathBuf>,
    /// Merge networks that differ only by swapping same-age members.
    #[arg(long)]
    pub collapse: bool,
    #[arg(long, default_value_t = 0.02)]
    pub min_prob: f64,
    #[arg(long, default_value_t = DEFAULT_STATE_BUDGET as u64)]
    pub budget: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Design file (JSON or TOML).
    #[arg(long, conflicts_with = "preset")]
    pub design: Option<PathBuf>,
    /// varied-home, low-contact or published.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the design's replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Write one simulated records CSV instead of running a recovery study.
    #[arg(long)]
    pub dataset_only: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Bootstrap replicates for the at-home intervals (0 skips them).
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write artifacts here instead of the recorded output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub threads: Option<usize>,
    pub command: Command,
    pub artifacts: Vec<String>,
    pub exit_code: i32,
    pub elapsed_ms: u128,
}

struct Outcome {
    artifacts: Vec<String>,
    converged: bool,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::TooManyStates { .. } => EXIT_RESOURCE,
        _ => EXIT_INPUT,
    }
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        // fails only if a pool already exists, e.g. in-process reruns
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let command = match cli.command {
        Command::Rerun(args) => match load_manifest(&args) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return exit_code(&e);
            }
        },
        other => other,
    };
    let started = Instant::now();
    match execute(&command) {
        Ok(outcome) => {
            let code = if outcome.converged {
                EXIT_OK
            } else {
                eprintln!("warning: optimizer did not converge; results were written anyway");
                EXIT_NOT_CONVERGED
            };
            let manifest = Manifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                threads: cli.threads,
                artifacts: outcome.artifacts,
                exit_code: code,
                elapsed_ms: started.elapsed().as_millis(),
                command: command.clone(),
            };
            match write_json(&out_dir(&command).join("manifest.json"), &manifest) {
                Ok(()) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_manifest(args: &RerunArgs) -> Result<Command> {
    let manifest: Manifest = read_json(&args.manifest)?;
    let mut command = manifest.command;
    if let Some(out) = &args.out {
        set_out_dir(&mut command, out.clone());
    }
    if matches!(command, Command::Rerun(_)) {
        return Err(Error::input("manifest records a rerun"));
    }
    Ok(command)
}

fn out_dir(command: &Command) -> &Path {
    match command {
        Command::Ingest(a) => &a.common.out,
        Command::Fit(a) => &a.common.out,
        Command::Bootstrap(a) => &a.common.out,
        Command::Lrt(a) => &a.common.out,
        Command::Enumerate(a) => &a.out,
        Command::Simulate(a) => &a.common.out,
        Command::Validate(a) => &a.common.out,
        Command::Rerun(_) => Path::new("."),
    }
}

fn set_out_dir(command: &mut Command, out: PathBuf) {
    match command {
        Command::Ingest(a) => a.common.out = out,
        Command::Fit(a) => a.common.out = out,
        Command::Bootstrap(a) => a.common.out = out,
        Command::Lrt(a) => a.common.out = out,
        Command::Enumerate(a) => a.out = out,
        Command::Simulate(a) => a.common.out = out,
        Command::Validate(a) => a.common.out = out,
        Command::Rerun(_) => {}
    }
}

fn execute(command: &Command) -> Result<Outcome> {
    let dir = out_dir(command);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match command {
        Command::Ingest(a) => run_ingest(a),
        Command::Fit(a) => run_fit(a),
        Command::Bootstrap(a) => run_bootstrap(a),
        Command::Lrt(a) => run_lrt(a),
        Command::Enumerate(a) => run_enumerate(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Validate(a) => run_validate(a),
        Command::Rerun(_) => Err(Error::input("nested rerun")),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, err: Error) -> Error {
    match err {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_records(path: &Path, bins: &AgeBins) -> Result<Vec<RespondentRecord>> {
    read_records(open(path)?, bins.len()).map_err(|e| with_path(path, e))
}

fn load_params(source: &str) -> Result<(AgeBins, ParameterVector)> {
    if source == "published" {
        return Ok((AgeBins::default(), ParameterVector::published()));
    }
    let file: ParameterFile = read_json(Path::new(source))?;
    file.into_parameters()
}

fn named(bins: &AgeBins, theta: &ParameterVector) -> BTreeMap<String, f64> {
    theta.named(bins).into_iter().collect()
}

fn indices_to_names(bins: &AgeBins, indices: impl IntoIterator<Item = usize>) -> Vec<String> {
    indices.into_iter().map(|i| param_name(bins, i)).collect()
}

fn run_ingest(a: &IngestArgs) -> Result<Outcome> {
    let bins = AgeBins::parse(&a.common.bins)?;
    let filter: DayFilter = a.days.parse()?;
    let (records, report) =
        ingest_diary(open(&a.input)?, &bins, filter).map_err(|e| with_path(&a.input, e))?;
    let out = &a.common.out;
    let path = out.join("records.csv");
    write_records(create(&path)?, &records, bins.len())?;
    write_json(&out.join("ingest_report.json"), &report)?;
    Ok(Outcome {
        artifacts: vec!["records.csv".into(), "ingest_report.json".into()],
        converged: true,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitSettings {
    pub init: String,
    pub transform: String,
    pub tol_boundary: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub age_bins: AgeBins,
    pub records: usize,
    pub theta: BTreeMap<String, f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub boundary: Vec<String>,
    pub seed: u64,
    pub settings: FitSettings,
}

fn fit_report(
    bins: &AgeBins,
    records: usize,
    fit: &FitResult,
    init: String,
    bfgs: &BfgsOptions,
) -> FitReport {
    FitReport {
        age_bins: bins.clone(),
        records,
        theta: named(bins, fit.theta_hat()),
        loglik: fit.loglik,
        converged: fit.converged,
        iterations: fit.iterations,
        gradient_norm: fit.gradient_norm,
        boundary: indices_to_names(bins, fit.boundary_flags.iter().map(|f| f.index)),
        seed: fit.seed,
        settings: FitSettings {
            init,
            transform: "logistic".into(),
            tol_boundary: TOL_BOUNDARY,
            grad_tol: bfgs.grad_tol,
            step_tol: bfgs.step_tol,
            max_iter: bfgs.max_iter,
            fd_step: bfgs.fd_step,
        },
    }
}

fn default_init_label() -> String {
    format!("default (home {DEFAULT_INIT_HOME}, contact {DEFAULT_INIT_CONTACT})")
}

fn run_fit(a: &FitArgs) -> Result<Outcome> {
    let bins = AgeBins::parse(&a.common.bins)?;
    let data = load_records(&a.records, &bins)?;
    let (init, label) = match &a.init {
        Some(path) => {
            let (init_bins, theta) = load_params(&path.to_string_lossy())?;
            if init_bins != bins {
                return Err(Error::input("initial parameters use different age bins"));
            }
            (Some(theta), path.display().to_string())
        }
        None => (None, default_init_label()),
    };
    let bfgs = BfgsOptions {
        max_iter: a.max_iter,
        ..BfgsOptions::default()
    };
    let fit = fit_mle(
        &data,
        &FitOptions {
            init,
            mask: None,
            bfgs: bfgs.clone(),
            seed: a.common.seed,
        },
    )?;
    let report = fit_report(&bins, data.len(), &fit, label, &bfgs);
    write_json(&a.common.out.join("fit.json"), &report)?;
    write_json(
        &a.common.out.join("params.json"),
        &ParameterFile::from_parameters(&bins, fit.theta_hat()),
    )?;
    Ok(Outcome {
        artifacts: vec!["fit.json".into(), "params.json".into()],
        converged: fit.converged,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IntervalReport {
    pub lo: f64,
    pub hi: f64,
    pub degenerate: bool,
    pub display: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub fit: FitReport,
    pub method: String,
    pub level: f64,
    pub seed: u64,
    pub requested: usize,
    pub used: usize,
    pub excluded: usize,
    pub intervals: BTreeMap<String, IntervalReport>,
    pub diagnostics: Vec<ReplicateDiagnosticReport>,
    /// Parameter names in the column order of `replicate_estimates`.
    pub parameter_order: Vec<String>,
    pub replicate_estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplicateDiagnosticReport {
    pub index: usize,
    pub retried: bool,
    pub excluded: bool,
    pub message: String,
}

impl From<&ReplicateDiagnostic> for ReplicateDiagnosticReport {
    fn from(d: &ReplicateDiagnostic) -> Self {
        ReplicateDiagnosticReport {
            index: d.index,
            retried: d.retried,
            excluded: d.excluded,
            message: d.message.clone(),
        }
    }
}

impl BootstrapReport {
    fn new(bins: &AgeBins, fit: FitReport, boot: &BootstrapResult) -> Self {
        let p = parameter_count(bins.len());
        let intervals = (0..p)
            .map(|i| {
                let iv = boot.intervals[i];
                (
                    param_name(bins, i),
                    IntervalReport {
                        lo: iv.lo,
                        hi: iv.hi,
                        degenerate: boot.degenerate[i],
                        display: format_interval(iv, boot.degenerate[i]),
                    },
                )
            })
            .collect();
        BootstrapReport {
            fit,
            method: "percentile".into(),
            level: boot.level,
            seed: boot.seed,
            requested: boot.requested,
            used: boot.replicates.len(),
            excluded: boot.excluded(),
            intervals,
            diagnostics: boot.diagnostics.iter().map(Into::into).collect(),
            parameter_order: indices_to_names(bins, 0..p),
            replicate_estimates: boot
                .replicates
                .iter()
                .map(|t| t.values().to_vec())
                .collect(),
        }
    }

    /// Rebuilds the bootstrap result for network intervals.
    pub fn into_result(self) -> Result<(AgeBins, BootstrapResult)> {
        let bins = self.fit.age_bins.clone();
        let k = bins.len();
        let (_, estimate) = ParameterFile {
            age_bins: bins.clone(),
            theta: self.fit.theta,
            source: None,
        }
        .into_parameters()?;
        let order: Vec<usize> = self
            .parameter_order
            .iter()
            .map(|n| parse_param_name(&bins, n))
            .collect::<Result<_>>()?;
        let replicates = self
            .replicate_estimates
            .into_iter()
            .map(|row| {
                if row.len() != order.len() {
                    return Err(Error::input("replicate row has the wrong length"));
                }
                let mut values = vec![0.0; parameter_count(k)];
                for (&i, v) in order.iter().zip(row) {
                    values[i] = v;
                }
                ParameterVector::from_values(k, values)
            })
            .collect::<Result<Vec<_>>>()?;
        let p = parameter_count(k);
        let mut intervals = vec![Interval { lo: 0.0, hi: 0.0 }; p];
        let mut degenerate = vec![false; p];
        for (name, iv) in &self.intervals {
            let i = parse_param_name(&bins, name)?;
            intervals[i] = Interval {
                lo: iv.lo,
                hi: iv.hi,
            };
            degenerate[i] = iv.degenerate;
        }
        Ok((
            bins,
            BootstrapResult {
                estimate,
                replicates,
                intervals,
                degenerate,
                diagnostics: Vec::new(),
                requested: self.requested,
                seed: self.seed,
                level: self.level,
            },
        ))
    }
}

fn fit_and_bootstrap(
    data: &[RespondentRecord],
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<(FitResult, BootstrapResult)> {
    let fit = fit_mle(
        data,
        &FitOptions {
            seed,
            ..FitOptions::default()
        },
    )?;
    let boot = bootstrap_from_fit(
        data,
        &fit,
        &BootstrapOptions {
            replicates,
            seed,
            level,
            ..BootstrapOptions::default()
        },
    )?;
    Ok((fit, boot))
}

fn run_bootstrap(a: &BootstrapArgs) -> Result<Outcome> {
    let bins = AgeBins::parse(&a.common.bins)?;
    let data = load_records(&a.records, &bins)?;
    let (fit, boot) = fit_and_bootstrap(&data, a.replicates, a.level, a.common.seed)?;
    let fr = fit_report(
        &bins,
        data.len(),
        &fit,
        default_init_label(),
        &BfgsOptions::default(),
    );
    write_json(
        &a.common.out.join("bootstrap.json"),
        &BootstrapReport::new(&bins, fr, &boot),
    )?;
    Ok(Outcome {
        artifacts: vec!["bootstrap.json".into()],
        converged: fit.converged,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LrtReport {
    pub stratum: Stratum,
    pub tied: Vec<String>,
    pub stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub tests: usize,
    pub corrected_alpha: f64,
    pub reject: bool,
    pub records: usize,
    pub records_in_stratum: usize,
    pub loglik_null: f64,
    pub loglik_alt: f64,
    pub converged_null: bool,
    pub converged_alt: bool,
    pub null_theta: BTreeMap<String, f64>,
    /// Estimates for records outside, then inside, the stratum.
    pub alt_theta: [BTreeMap<String, f64>; 2],
    pub warnings: Vec<String>,
    pub seed: u64,
}

fn run_lrt(a: &LrtArgs) -> Result<Outcome> {
    let bins = AgeBins::parse(&a.common.bins)?;
    let data = load_records(&a.records, &bins)?;
    let stratum: Stratum = a.stratum.parse()?;
    let tied: BTreeSet<usize> = a
        .tied
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_param_name(&bins, s))
        .collect::<Result<_>>()?;
    let corrected = bonferroni(a.alpha, a.tests)?;
    let res = lrt(
        &data,
        stratum,
        &tied,
        &FitOptions {
            seed: a.common.seed,
            ..FitOptions::default()
        },
    )?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    let report = LrtReport {
        stratum,
        tied: indices_to_names(&bins, tied.iter().copied()),
        stat: res.stat,
        df: res.df,
        p_value: res.p_value,
        alpha: a.alpha,
        tests: a.tests,
        corrected_alpha: corrected,
        reject: res.p_value < corrected,
        records: data.len(),
        records_in_stratum: data.iter().filter(|r| r.stratum(stratum)).count(),
        loglik_null: res.loglik_null,
        loglik_alt: res.loglik_alt,
        converged_null: res.null.converged,
        converged_alt: res.alt.converged,
        null_theta: named(&bins, res.null.theta_hat()),
        alt_theta: [
            named(&bins, &res.alt.estimates[0]),
            named(&bins, &res.alt.estimates[1]),
        ],
        warnings: res.warnings.clone(),
        seed: a.common.seed,
    };
    write_json(&a.common.out.join("lrt.json"), &report)?;
    Ok(Outcome {
        artifacts: vec!["lrt.json".into()],
        converged: res.null.converged && res.alt.converged,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkEntryReport {
    pub rank: usize,
    pub probability: f64,
    pub interval: Option<Interval>,
    pub class_size: usize,
    pub home: Vec<bool>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DistributionReport {
    pub members: Vec<String>,
    pub mode: crate::network::Mode,
    pub min_prob: f64,
    pub params: String,
    pub entries: Vec<NetworkEntryReport>,
    pub remainder: Option<crate::network::Remainder>,
}

fn distribution_report(
    dist: &NetworkDistribution,
    bins: &AgeBins,
    params: &str,
) -> DistributionReport {
    DistributionReport {
        members: dist.members.iter().map(|&m| bins.label(m)).collect(),
        mode: dist.mode,
        min_prob: dist.min_prob,
        params: params.to_string(),
        entries: dist
            .entries
            .iter()
            .enumerate()
            .map(|(rank, e)| NetworkEntryReport {
                rank: rank + 1,
                probability: e.probability,
                interval: e.interval,
                class_size: e.class_size,
                home: e.state.home.clone(),
                edges: e.state.edges(),
            })
            .collect(),
        remainder: dist.remainder.clone(),
    }
}

fn parse_members(bins: &AgeBins, labels: &[String]) -> Result<Vec<AgeCategory>> {
    labels.iter().map(|l| bins.parse_label(l)).collect()
}

fn run_enumerate(a: &EnumerateArgs) -> Result<Outcome> {
    let options = EnumerateOptions {
        collapse: a.collapse,
        min_prob: a.min_prob,
        budget: u128::from(a.budget),
    };
    let (bins, dist, label) = match &a.bootstrap {
        Some(path) => {
            let report: BootstrapReport = read_json(path)?;
            let (bins, boot) = report.into_result()?;
            let members = parse_members(&bins, &a.members)?;
            let dist = distribution_intervals(&members, &boot, &options)?;
            (bins, dist, path.display().to_string())
        }
        None => {
            let source = a.params.as_deref().unwrap_or("published");
            let (bins, theta) = load_params(source)?;
            let members = parse_members(&bins, &a.members)?;
            let dist = enumerate_distribution(&members, &theta, &options)?;
            (bins, dist, source.to_string())
        }
    };
    write_json(
        &a.out.join("distribution.json"),
        &distribution_report(&dist, &bins, &label),
    )?;
    write_text(&a.out.join("distribution.csv"), &distribution_csv(&dist)?)?;
    write_text(&a.out.join("networks.dot"), &distribution_dot(&dist, &bins))?;
    let text: String = dist
        .entries
        .iter()
        .enumerate()
        .map(|(rank, e)| {
            format!(
                "# network {} p={} class_size={}\n{}",
                rank + 1,
                e.probability,
                e.class_size,
                adjacency_text(&e.state, &bins)
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    write_text(&a.out.join("networks.txt"), &text)?;
    Ok(Outcome {
        artifacts: vec![
            "distribution.json".into(),
            "distribution.csv".into(),
            "networks.dot".into(),
            "networks.txt".into(),
        ],
        converged: true,
    })
}

fn load_design(a: &SimulateArgs) -> Result<(AgeBins, SimDesign)> {
    let (bins, mut design) = match (&a.design, &a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: SimDesignFile = if path.extension().is_some_and(|e| e == "toml") {
                toml::from_str(&text)
                    .map_err(|e| Error::input(format!("{}: {e}", path.display())))?
            } else {
                serde_json::from_str(&text)?
            };
            file.into_design()?
        }
        (None, Some(name)) => (
            AgeBins::default(),
            SimDesign::preset(name, 1, a.common.seed)?,
        ),
        (None, None) => return Err(Error::input("give --design or --preset")),
    };
    // a design file carries its own seed
    if a.design.is_none() {
        design.seed = a.common.seed;
    }
    if let Some(r) = a.replicates {
        design.replicates = r;
    }
    design.validate()?;
    Ok((bins, design))
}

fn run_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let (bins, design) = load_design(a)?;
    let out = &a.common.out;
    write_json(
        &out.join("design.json"),
        &SimDesignFile::from_design(&design, &bins),
    )?;
    if a.dataset_only {
        let mut rng = crate::estimation::replicate_rng(design.seed, 0);
        let data = simulate_dataset(&design.compositions, &design.theta_true, &mut rng)?;
        write_records(create(&out.join("records.csv"))?, &data, bins.len())?;
        return Ok(Outcome {
            artifacts: vec!["design.json".into(), "records.csv".into()],
            converged: true,
        });
    }
    let report = recovery_study(&design, &bins)?;
    write_json(&out.join("recovery.json"), &report)?;
    write_text(&out.join("recovery.csv"), &report.to_csv()?)?;
    Ok(Outcome {
        artifacts: vec![
            "design.json".into(),
            "recovery.json".into(),
            "recovery.csv".into(),
        ],
        converged: report.not_converged == 0,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ValidityReport {
    pub share_interval_method: String,
    pub replicates: usize,
    pub seed: u64,
    pub rows: Vec<ValidityRow>,
}

fn run_validate(a: &ValidateArgs) -> Result<Outcome> {
    let bins = AgeBins::parse(&a.common.bins)?;
    let data = load_records(&a.records, &bins)?;
    let (fit, boot) = if a.replicates == 0 {
        let fit = fit_mle(
            &data,
            &FitOptions {
                seed: a.common.seed,
                ..FitOptions::default()
            },
        )?;
        (fit, None)
    } else {
        let (fit, boot) = fit_and_bootstrap(&data, a.replicates, 0.95, a.common.seed)?;
        (fit, Some(boot))
    };
    let rows = validity_check(&data, &fit, boot.as_ref(), &bins)?;
    let report = ValidityReport {
        share_interval_method: "normal approximation (Wald), 95%".into(),
        replicates: a.replicates,
        seed: a.common.seed,
        rows,
    };
    write_json(&a.common.out.join("validity.json"), &report)?;
    Ok(Outcome {
        artifacts: vec!["validity.json".into()],
        converged: fit.converged,
    })
}
