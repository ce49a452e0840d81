//! Maximum-likelihood fitting over the unit cube and the nonparametric bootstrap.
//!
//! Probabilities are optimized on the logit scale, so the box constraint is
//! implicit. Estimates that end within [`TOL_BOUNDARY`] of 0 or 1 are snapped
//! to the bound (when that does not lower the likelihood) and reported in
//! [`FitResult::boundary_flags`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{parameter_count, AgeCategory, ParameterVector, RespondentRecord};
use crate::error::{Error, Result};
use crate::likelihood::{kernel, ln_multiplicity};
use crate::model_selection::SharingMask;
use crate::optim::{central_gradient, minimize, BfgsOptions};

pub const TOL_BOUNDARY: f64 = 1e-4;
pub const DEFAULT_INIT_HOME: f64 = 0.9;
pub const DEFAULT_INIT_CONTACT: f64 = 0.8;
/// Optimizer starting points are pulled this far inside the unit interval.
pub const START_MARGIN: f64 = 1e-3;
/// Snapping to a bound may cost at most this much log-likelihood.
const SNAP_SLACK: f64 = 1e-8;

pub fn default_init(k: usize) -> ParameterVector {
    ParameterVector::uniform(k, DEFAULT_INIT_HOME, DEFAULT_INIT_CONTACT)
        .expect("defaults lie in the unit interval")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Starting point shared by every stratum level; defaults to [`default_init`].
    pub init: Option<ParameterVector>,
    /// Parameter tying across strata; defaults to the identity mask.
    pub mask: Option<SharingMask>,
    pub bfgs: BfgsOptions,
    /// Recorded in the result; the fit itself is deterministic.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFlag {
    pub level: usize,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// One estimate per stratum level (a single entry for unstratified fits).
    pub estimates: Vec<ParameterVector>,
    pub mask: SharingMask,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub boundary_flags: Vec<BoundaryFlag>,
    pub seed: u64,
}

impl FitResult {
    pub fn theta_hat(&self) -> &ParameterVector {
        &self.estimates[0]
    }

    pub fn is_flagged(&self, level: usize, index: usize) -> bool {
        self.boundary_flags
            .iter()
            .any(|f| f.level == level && f.index == index)
    }
}

/// Distinct `(level, j, n, w)` cells with their multiplicities.
type Cell = (usize, AgeCategory, Vec<u32>, Vec<u32>, f64);

struct Table {
    cells: Vec<Cell>,
    /// Parameter-free part of the log-likelihood.
    constant: f64,
}

impl Table {
    fn new(data: &[RespondentRecord], mask: &SharingMask) -> Self {
        let mut counts = BTreeMap::<(usize, AgeCategory, &[u32], &[u32]), u32>::new();
        for rec in data {
            let key = (
                mask.level_of(rec),
                rec.respondent,
                rec.household.counts(),
                rec.contacts.counts(),
            );
            *counts.entry(key).or_default() += 1;
        }
        let cells: Vec<_> = counts
            .into_iter()
            .map(|((l, j, n, w), c)| (l, j, n.to_vec(), w.to_vec(), f64::from(c)))
            .collect();
        let constant = cells
            .iter()
            .map(|(_, _, n, w, c)| c * ln_multiplicity(n, w))
            .sum();
        Table { cells, constant }
    }

    fn loglik(&self, thetas: &[ParameterVector]) -> f64 {
        self.kernel(thetas) + self.constant
    }

    /// Log-likelihood without the constant; what the optimizer sees.
    fn kernel(&self, thetas: &[ParameterVector]) -> f64 {
        self.cells
            .iter()
            .map(|(l, j, n, w, c)| c * kernel(*j, n, w, &thetas[*l]))
            .sum()
    }
}

/// Log-likelihood under a sharing mask, summed record by record in input order.
/// For the identity mask this is bit-identical to `dataset_loglik`.
pub fn masked_loglik(
    data: &[RespondentRecord],
    mask: &SharingMask,
    thetas: &[ParameterVector],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    let parts = data
        .par_iter()
        .map(|rec| {
            let theta = &thetas[mask.level_of(rec)];
            crate::likelihood::respondent_loglik(rec, theta)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.into_iter().sum())
}

fn check_data(data: &[RespondentRecord], mask: &SharingMask) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    for rec in data {
        rec.validate()?;
        if rec.k() != mask.k() {
            return Err(Error::input(format!(
                "record {} has {} categories, model has {}",
                rec.id,
                rec.k(),
                mask.k()
            )));
        }
    }
    Ok(())
}

/// Maximizes the log-likelihood over the free parameters of the mask.
pub fn fit_mle(data: &[RespondentRecord], options: &FitOptions) -> Result<FitResult> {
    let k = data
        .first()
        .ok_or_else(|| Error::input("dataset is empty"))?
        .k();
    let mask = options
        .mask
        .clone()
        .unwrap_or_else(|| SharingMask::identity(k));
    check_data(data, &mask)?;
    let init = match &options.init {
        Some(theta) => {
            theta.validate()?;
            if theta.k() != k {
                return Err(Error::input(
                    "initial parameters have the wrong number of categories",
                ));
            }
            theta.clone()
        }
        None => default_init(k),
    };
    let init_free = mask.free_from_shared(&init);

    let table = Table::new(data, &mask);
    let to_thetas = |eta: &[f64]| {
        let p: Vec<f64> = eta.iter().map(|&x| sigmoid(x)).collect();
        mask.expand(&p).expect("free vector has mask length")
    };
    let objective = |eta: &[f64]| -table.kernel(&to_thetas(eta));

    let start: Vec<f64> = init_free
        .iter()
        .map(|&p| logit(p.clamp(START_MARGIN, 1.0 - START_MARGIN)))
        .collect();
    if !objective(&start).is_finite() {
        return Err(Error::input(
            "log-likelihood is not finite at the initial parameters",
        ));
    }
    let outcome = minimize(objective, &start, &options.bfgs);

    let mut free: Vec<f64> = outcome.x.iter().map(|&x| sigmoid(x)).collect();
    let mut best = table.loglik(&mask.expand(&free)?);
    // snap one slot at a time so a bound contradicted by the data is skipped
    for slot in 0..free.len() {
        let p = free[slot];
        let target = if p < TOL_BOUNDARY {
            0.0
        } else if p > 1.0 - TOL_BOUNDARY {
            1.0
        } else {
            continue;
        };
        let mut trial = free.clone();
        trial[slot] = target;
        let ll = table.loglik(&mask.expand(&trial)?);
        if ll.is_finite() && ll >= best - SNAP_SLACK {
            free = trial;
            best = ll;
        }
    }

    let mut estimates = mask.expand(&free)?;
    let mut loglik = masked_loglik(data, &mask, &estimates)?;
    let init_estimates = mask.expand(&init_free)?;
    let init_loglik = masked_loglik(data, &mask, &init_estimates)?;
    if init_loglik > loglik || !loglik.is_finite() {
        estimates = init_estimates;
        loglik = init_loglik;
    }

    let mut boundary_flags = Vec::new();
    for (level, theta) in estimates.iter().enumerate() {
        for (index, &value) in theta.values().iter().enumerate() {
            if !(TOL_BOUNDARY..=1.0 - TOL_BOUNDARY).contains(&value) {
                boundary_flags.push(BoundaryFlag {
                    level,
                    index,
                    value,
                });
            }
        }
    }

    Ok(FitResult {
        estimates,
        mask,
        loglik,
        converged: outcome.converged(),
        iterations: outcome.iterations,
        gradient_norm: outcome.grad_norm,
        boundary_flags,
        seed: options.seed,
    })
}

/// The optimizer's internal gradient of the log-likelihood with respect to
/// the logit of each parameter (identity mask).
pub fn logit_gradient(
    data: &[RespondentRecord],
    theta: &ParameterVector,
    fd_step: f64,
) -> Result<Vec<f64>> {
    let mask = SharingMask::identity(theta.k());
    check_data(data, &mask)?;
    let table = Table::new(data, &mask);
    let f = |eta: &[f64]| {
        let p: Vec<f64> = eta.iter().map(|&x| sigmoid(x)).collect();
        table.loglik(&mask.expand(&p).expect("mask length"))
    };
    let eta: Vec<f64> = theta.values().iter().map(|&p| logit(p)).collect();
    Ok(central_gradient(&f, &eta, fd_step))
}

/// Linear-interpolation sample quantile (R's default, type 7).
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, prob)
}

pub(crate) fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Central percentile interval at `level` (e.g. 0.95).
pub fn percentile_interval(values: &[f64], level: f64) -> Interval {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        lo: quantile_sorted(&sorted, tail),
        hi: quantile_sorted(&sorted, 1.0 - tail),
    }
}

/// Independent random stream for replicate `index` of a seeded run.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub bfgs: BfgsOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 1000,
            seed: 0,
            level: 0.95,
            bfgs: BfgsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDiagnostic {
    pub index: usize,
    pub retried: bool,
    pub excluded: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Estimate on the full data the replicates were warm-started from.
    pub estimate: ParameterVector,
    /// Estimates of the replicates kept for the intervals, in replicate order.
    pub replicates: Vec<ParameterVector>,
    pub intervals: Vec<Interval>,
    /// True when every kept replicate gave the same value for the parameter.
    pub degenerate: Vec<bool>,
    pub diagnostics: Vec<ReplicateDiagnostic>,
    pub requested: usize,
    pub seed: u64,
    pub level: f64,
}

impl BootstrapResult {
    pub fn excluded(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.excluded).count()
    }

    /// Replicate values of parameter `index`.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.replicates.iter().map(|t| t.values()[index]).collect()
    }
}

/// Fits the full data with default settings and bootstraps around that fit.
pub fn bootstrap(
    data: &[RespondentRecord],
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let fit = fit_mle(
        data,
        &FitOptions {
            seed,
            ..FitOptions::default()
        },
    )?;
    bootstrap_from_fit(
        data,
        &fit,
        &BootstrapOptions {
            replicates,
            seed,
            ..BootstrapOptions::default()
        },
    )
}

/// Resamples respondent records with replacement and refits each resample.
pub fn bootstrap_from_fit(
    data: &[RespondentRecord],
    fit: &FitResult,
    options: &BootstrapOptions,
) -> Result<BootstrapResult> {
    if options.replicates < 2 {
        return Err(Error::input("bootstrap needs at least 2 replicates"));
    }
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    if fit.mask.levels() != 1 {
        return Err(Error::input("bootstrap supports unstratified fits only"));
    }
    let k = fit.theta_hat().k();
    let warm = FitOptions {
        init: Some(fit.theta_hat().clone()),
        bfgs: options.bfgs.clone(),
        ..FitOptions::default()
    };

    let outcomes = (0..options.replicates)
        .into_par_iter()
        .map(|index| {
            let mut rng = replicate_rng(options.seed, index);
            let sample: Vec<RespondentRecord> = (0..data.len())
                .map(|_| data[rng.random_range(0..data.len())].clone())
                .collect();
            let first = fit_mle(
                &sample,
                &FitOptions {
                    seed: options.seed,
                    ..warm.clone()
                },
            )?;
            if first.converged {
                return Ok((index, first.theta_hat().clone(), None));
            }
            let retry = fit_mle(
                &sample,
                &FitOptions {
                    init: Some(default_init(k)),
                    seed: options.seed,
                    ..warm.clone()
                },
            )?;
            let diag = ReplicateDiagnostic {
                index,
                retried: true,
                excluded: !retry.converged,
                message: if retry.converged {
                    "converged after restart from default start".into()
                } else {
                    format!(
                        "did not converge after restart (gradient norm {:.3e})",
                        retry.gradient_norm
                    )
                },
            };
            Ok((index, retry.theta_hat().clone(), Some(diag)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut replicates = Vec::new();
    let mut diagnostics = Vec::new();
    for (_, theta, diag) in outcomes {
        match diag {
            Some(d) if d.excluded => diagnostics.push(d),
            Some(d) => {
                diagnostics.push(d);
                replicates.push(theta);
            }
            None => replicates.push(theta),
        }
    }
    if replicates.is_empty() {
        return Err(Error::Internal("no bootstrap replicate converged".into()));
    }

    let p = parameter_count(k);
    let mut intervals = Vec::with_capacity(p);
    let mut degenerate = Vec::with_capacity(p);
    for i in 0..p {
        let column: Vec<f64> = replicates.iter().map(|t| t.values()[i]).collect();
        intervals.push(percentile_interval(&column, options.level));
        degenerate.push(column.iter().all(|&v| v == column[0]));
    }

    Ok(BootstrapResult {
        estimate: fit.theta_hat().clone(),
        replicates,
        intervals,
        degenerate,
        diagnostics,
        requested: options.replicates,
        seed: options.seed,
        level: options.level,
    })
}

/// Human-readable interval: the lower bound is omitted (`--`) when the
/// bootstrap distribution is degenerate.
pub fn format_interval(interval: Interval, degenerate: bool) -> String {
    if degenerate {
        format!("[--, {:.2}]", interval.hi)
    } else {
        format!("[{:.2}, {:.2}]", interval.lo, interval.hi)
    }
}
