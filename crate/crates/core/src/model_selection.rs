//! Likelihood-ratio tests for stratum effects with parameter tying.

use std::collections::BTreeSet;

use statrs::function::gamma::gamma_ur;

use crate::data_model::{parameter_count, ParameterVector, RespondentRecord, Stratum};
use crate::error::{Error, Result};
use crate::estimation::{fit_mle, FitOptions, FitResult};

/// Maps every `(stratum level, parameter index)` to a free-parameter slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingMask {
    k: usize,
    stratum: Option<Stratum>,
    slots: Vec<Vec<usize>>,
    free: usize,
}

impl SharingMask {
    /// One shared parameter vector for every record.
    pub fn identity(k: usize) -> Self {
        let p = parameter_count(k);
        SharingMask {
            k,
            stratum: None,
            slots: vec![(0..p).collect()],
            free: p,
        }
    }

    /// Separate parameters for the two levels of `stratum`, except the `tied`
    /// indices, which both levels share.
    pub fn split(k: usize, stratum: Stratum, tied: &BTreeSet<usize>) -> Result<Self> {
        let p = parameter_count(k);
        if let Some(&bad) = tied.iter().find(|&&i| i >= p) {
            return Err(Error::input(format!(
                "tied parameter index {bad} out of range (k = {k} has {p} parameters)"
            )));
        }
        let mut next = p;
        let second = (0..p)
            .map(|i| {
                if tied.contains(&i) {
                    i
                } else {
                    next += 1;
                    next - 1
                }
            })
            .collect();
        Ok(SharingMask {
            k,
            stratum: Some(stratum),
            slots: vec![(0..p).collect(), second],
            free: next,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stratum(&self) -> Option<Stratum> {
        self.stratum
    }

    pub fn free_count(&self) -> usize {
        self.free
    }

    pub fn levels(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, level: usize, index: usize) -> usize {
        self.slots[level][index]
    }

    pub fn level_of(&self, rec: &RespondentRecord) -> usize {
        match self.stratum {
            None => 0,
            Some(st) => usize::from(rec.stratum(st)),
        }
    }

    /// Per-level parameter vectors from free-slot values.
    pub fn expand(&self, free: &[f64]) -> Result<Vec<ParameterVector>> {
        if free.len() != self.free {
            return Err(Error::input(format!(
                "expected {} free values, got {}",
                self.free,
                free.len()
            )));
        }
        self.slots
            .iter()
            .map(|slots| {
                ParameterVector::from_values(self.k, slots.iter().map(|&s| free[s]).collect())
            })
            .collect()
    }

    /// Free-slot values taken from one vector applied to every level.
    pub fn free_from_shared(&self, theta: &ParameterVector) -> Vec<f64> {
        let mut free = vec![0.0; self.free];
        for slots in &self.slots {
            for (i, &s) in slots.iter().enumerate() {
                free[s] = theta.values()[i];
            }
        }
        free
    }
}

/// Upper-tail probability of a chi-square variable with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::input(
            "chi-square needs at least one degree of freedom",
        ));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::input(format!(
            "chi-square statistic {x} must be >= 0"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(f64::from(df) / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// Per-test significance level for `m` simultaneous tests.
pub fn bonferroni(alpha: f64, m: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha {alpha} must lie in (0, 1)")));
    }
    if m == 0 {
        return Err(Error::input("number of tests must be at least 1"));
    }
    Ok(alpha / m as f64)
}

/// Likelihood ratios below zero by more than this signal a failed fit.
pub const NESTING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LrtResult {
    pub stratum: Stratum,
    pub tied: BTreeSet<usize>,
    pub stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub loglik_null: f64,
    pub loglik_alt: f64,
    pub null: FitResult,
    pub alt: FitResult,
    pub warnings: Vec<String>,
}

/// Tests whether the non-tied parameters differ between the two levels of
/// `stratum`. The alternative fit is warm-started at the null estimate, so it
/// can only improve on it.
pub fn lrt(
    data: &[RespondentRecord],
    stratum: Stratum,
    tied: &BTreeSet<usize>,
    options: &FitOptions,
) -> Result<LrtResult> {
    let k = data
        .first()
        .ok_or_else(|| Error::input("dataset is empty"))?
        .k();
    let null_mask = SharingMask::identity(k);
    let alt_mask = SharingMask::split(k, stratum, tied)?;

    let null = fit_mle(
        data,
        &FitOptions {
            mask: Some(null_mask.clone()),
            ..options.clone()
        },
    )?;
    let alt = fit_mle(
        data,
        &FitOptions {
            mask: Some(alt_mask.clone()),
            init: Some(null.theta_hat().clone()),
            ..options.clone()
        },
    )?;

    let mut stat = 2.0 * (alt.loglik - null.loglik);
    if stat < -NESTING_TOLERANCE {
        return Err(Error::Internal(format!(
            "alternative log-likelihood {} below null {}",
            alt.loglik, null.loglik
        )));
    }
    stat = stat.max(0.0);
    let df = alt_mask.free_count() - null_mask.free_count();
    let p_value = if df == 0 {
        1.0
    } else {
        chi2_sf(stat, df as u32)?
    };

    let mut warnings = Vec::new();
    for (name, fit) in [("null", &null), ("alternative", &alt)] {
        if !fit.converged {
            warnings.push(format!("{name} fit did not converge"));
        }
        if !fit.boundary_flags.is_empty() {
            warnings.push(format!(
                "{name} fit has {} parameter(s) on the boundary; the chi-square reference may not hold",
                fit.boundary_flags.len()
            ));
        }
    }

    Ok(LrtResult {
        stratum,
        tied: tied.clone(),
        stat,
        df,
        p_value,
        loglik_null: null.loglik,
        loglik_alt: alt.loglik,
        null,
        alt,
        warnings,
    })
}
