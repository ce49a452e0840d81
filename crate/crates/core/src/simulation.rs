//! Synthetic egocentric data from the at-home model, parameter-recovery
//! studies and the at-home versus any-contact validity check.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Bernoulli, Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    param_name, AgeBins, AgeCategory, ContactCounts, DiaryDay, HouseholdComposition, ParameterFile,
    ParameterVector, RespondentRecord,
};
use crate::error::{Error, Result};
use crate::estimation::{
    fit_mle, percentile_interval, replicate_rng, BootstrapResult, FitOptions, FitResult, Interval,
};

/// Draws one respondent's contact counts.
pub fn simulate_record<R: Rng + ?Sized>(
    j: AgeCategory,
    n: &HouseholdComposition,
    theta: &ParameterVector,
    rng: &mut R,
) -> Result<RespondentRecord> {
    theta.validate()?;
    let k = theta.k();
    if n.counts().len() != k || j.0 >= k {
        return Err(Error::input(
            "household does not match the parameter categories",
        ));
    }
    let mut w = vec![0u32; k];
    let home = Bernoulli::new(theta.home(j)).map_err(|e| Error::Internal(e.to_string()))?;
    if home.sample(rng) {
        for (s, &members) in n.counts().iter().enumerate() {
            let s_cat = AgeCategory(s);
            let present = binomial(members, theta.home(s_cat), rng)?;
            w[s] = binomial(present, theta.contact(j, s_cat), rng)?;
        }
    }
    RespondentRecord::new("sim", j, n.clone(), ContactCounts(w), DiaryDay::default())
}

fn binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> Result<u32> {
    if n == 0 {
        return Ok(0);
    }
    let d = Binomial::new(u64::from(n), p).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(d.sample(rng) as u32)
}

/// A household type in a simulation design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignRow {
    pub respondent: AgeCategory,
    /// Non-respondent members per category.
    pub household: HouseholdComposition,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub compositions: Vec<DesignRow>,
    pub theta_true: ParameterVector,
    pub replicates: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        self.theta_true.validate()?;
        if self.replicates == 0 {
            return Err(Error::input("replicates must be at least 1"));
        }
        if self.compositions.is_empty() {
            return Err(Error::input("design has no household compositions"));
        }
        let k = self.theta_true.k();
        for row in &self.compositions {
            if row.count == 0 {
                return Err(Error::input("composition counts must be positive"));
            }
            if row.household.counts().len() != k || row.respondent.0 >= k {
                return Err(Error::input(
                    "composition does not match the parameter categories",
                ));
            }
            if row.household.members() == 0 {
                return Err(Error::input("households need at least one other member"));
            }
        }
        Ok(())
    }

    pub fn records(&self) -> usize {
        self.compositions.iter().map(|r| r.count as usize).sum()
    }

    /// Named preset: `varied-home` (varied at-home truth with the published
    /// contact values), `low-contact` (home 0.6, contact 0.5 throughout) or
    /// `published` (the published estimates), all on the Belgian-like design.
    pub fn preset(name: &str, replicates: usize, seed: u64) -> Result<Self> {
        let theta_true = match name {
            "varied-home" => varied_home_truth(),
            "low-contact" => low_contact_truth(),
            "published" => ParameterVector::published(),
            other => return Err(Error::input(format!("unknown preset {other:?}"))),
        };
        Ok(SimDesign {
            compositions: belgian_like_design(),
            theta_true,
            replicates,
            seed,
        })
    }
}

/// Published contact estimates with at-home truth 1.0, 0.9, 0.8, 0.7, 0.6.
pub fn varied_home_truth() -> ParameterVector {
    let mut theta = ParameterVector::published();
    for (v, p) in [1.0, 0.9, 0.8, 0.7, 0.6].into_iter().enumerate() {
        theta.set(v, p).expect("valid probability");
    }
    theta
}

/// Illustrative weakly identified regime: rare contact, frequent absence.
pub fn low_contact_truth() -> ParameterVector {
    ParameterVector::uniform(5, 0.6, 0.5).expect("valid probabilities")
}

/// Whole-household compositions (respondent included) with respondent counts.
/// Size-4 rows are the published Belgian ones; other sizes are invented so the
/// size distribution matches the published one after removing single-person
/// households (676 respondents).
const BELGIAN_LIKE: &[([u32; 5], u32)] = &[
    // size 2
    ([0, 0, 0, 0, 2], 70),
    ([0, 0, 0, 2, 0], 40),
    ([0, 0, 0, 1, 1], 30),
    ([0, 0, 1, 0, 1], 10),
    ([1, 0, 0, 1, 0], 4),
    ([0, 1, 0, 0, 1], 3),
    // size 3
    ([0, 0, 0, 0, 3], 15),
    ([0, 0, 1, 0, 2], 45),
    ([0, 1, 0, 0, 2], 35),
    ([1, 0, 0, 0, 2], 25),
    ([1, 0, 0, 2, 0], 30),
    ([0, 0, 0, 1, 2], 25),
    ([0, 0, 1, 1, 1], 10),
    ([0, 0, 0, 2, 1], 10),
    // size 4
    ([0, 0, 0, 0, 4], 1),
    ([0, 0, 0, 1, 3], 1),
    ([0, 0, 0, 2, 2], 35),
    ([0, 0, 0, 3, 1], 1),
    ([0, 0, 0, 4, 0], 1),
    ([0, 0, 1, 1, 2], 23),
    ([0, 0, 1, 2, 1], 1),
    ([0, 0, 2, 0, 2], 40),
    ([0, 0, 3, 0, 1], 2),
    ([0, 1, 0, 0, 3], 1),
    ([0, 1, 0, 1, 2], 1),
    ([0, 1, 1, 1, 1], 2),
    ([0, 1, 2, 0, 1], 2),
    ([0, 1, 1, 0, 2], 17),
    ([0, 2, 0, 0, 2], 16),
    ([0, 2, 0, 1, 1], 8),
    ([0, 2, 0, 2, 0], 4),
    ([1, 0, 1, 0, 2], 1),
    ([1, 1, 0, 0, 2], 6),
    ([1, 1, 0, 1, 1], 8),
    ([1, 1, 0, 2, 0], 12),
    ([2, 0, 0, 0, 2], 2),
    ([2, 0, 0, 1, 1], 12),
    ([2, 0, 0, 2, 0], 16),
    // size 5
    ([0, 0, 3, 0, 2], 20),
    ([0, 1, 2, 0, 2], 20),
    ([0, 2, 1, 0, 2], 15),
    ([1, 1, 1, 0, 2], 8),
    ([2, 1, 0, 2, 0], 10),
    ([0, 0, 1, 2, 2], 10),
    // size 6
    ([0, 1, 3, 0, 2], 8),
    ([1, 2, 1, 0, 2], 8),
    ([0, 0, 2, 2, 2], 7),
    // sizes 7, 9, 12
    ([0, 2, 3, 0, 2], 2),
    ([1, 2, 2, 2, 2], 2),
    ([2, 2, 2, 3, 3], 1),
];

/// Respondent-level design: for each whole-household composition the
/// respondents cycle through the members in age order.
pub fn belgian_like_design() -> Vec<DesignRow> {
    let mut rows: BTreeMap<(AgeCategory, Vec<u32>), u32> = BTreeMap::new();
    for (composition, count) in BELGIAN_LIKE {
        let members: Vec<usize> = composition
            .iter()
            .enumerate()
            .flat_map(|(v, &c)| std::iter::repeat_n(v, c as usize))
            .collect();
        for i in 0..*count as usize {
            let j = members[i % members.len()];
            let mut n = composition.to_vec();
            n[j] -= 1;
            *rows.entry((AgeCategory(j), n)).or_default() += 1;
        }
    }
    rows.into_iter()
        .map(|((respondent, n), count)| DesignRow {
            respondent,
            household: HouseholdComposition(n),
            count,
        })
        .collect()
}

/// Share of simulated diary days that fall on a weekend.
pub const WEEKEND_SHARE: f64 = 2.0 / 7.0;
/// Share of simulated diary days that fall in a holiday period.
pub const HOLIDAY_SHARE: f64 = 0.1;

/// One synthetic dataset, records in design order. Each diary day is drawn
/// independently of the contacts, so stratified tests hold under the truth.
pub fn simulate_dataset<R: Rng + ?Sized>(
    rows: &[DesignRow],
    theta: &ParameterVector,
    rng: &mut R,
) -> Result<Vec<RespondentRecord>> {
    let mut out = Vec::new();
    for row in rows {
        for _ in 0..row.count {
            let mut rec = simulate_record(row.respondent, &row.household, theta, rng)?;
            rec.id = format!("sim-{}", out.len() + 1);
            rec.day = DiaryDay {
                weekend: rng.random_bool(WEEKEND_SHARE),
                holiday: rng.random_bool(HOLIDAY_SHARE),
            };
            out.push(rec);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    /// Standard deviation of the replicate estimates.
    pub sd: f64,
    /// 2.5% and 97.5% quantiles of the replicate estimates.
    pub quantiles: Interval,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
    pub replicates: usize,
    pub records_per_replicate: usize,
    /// Replicates whose fit hit the iteration cap or stalled; still averaged.
    pub not_converged: usize,
    pub seed: u64,
}

impl RecoveryReport {
    pub fn row(&self, name: &str) -> Option<&RecoveryRow> {
        self.rows.iter().find(|r| r.parameter == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Internal(e.to_string());
        w.write_record([
            "parameter",
            "truth",
            "mean",
            "sd",
            "q025",
            "q975",
            "min",
            "max",
        ])
        .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.parameter.clone(),
                r.truth.to_string(),
                r.mean.to_string(),
                r.sd.to_string(),
                r.quantiles.lo.to_string(),
                r.quantiles.hi.to_string(),
                r.min.to_string(),
                r.max.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Simulates and refits `design.replicates` datasets in parallel.
pub fn recovery_study(design: &SimDesign, bins: &AgeBins) -> Result<RecoveryReport> {
    design.validate()?;
    let fits: Vec<FitResult> = (0..design.replicates)
        .into_par_iter()
        .map(|index| {
            let mut rng = replicate_rng(design.seed, index);
            let data = simulate_dataset(&design.compositions, &design.theta_true, &mut rng)?;
            fit_mle(
                &data,
                &FitOptions {
                    seed: design.seed,
                    ..FitOptions::default()
                },
            )
        })
        .collect::<Result<_>>()?;

    let count = fits.len() as f64;
    let rows = (0..design.theta_true.len())
        .map(|i| {
            let column: Vec<f64> = fits.iter().map(|f| f.theta_hat().values()[i]).collect();
            let mean = column.iter().sum::<f64>() / count;
            let var =
                column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
            RecoveryRow {
                parameter: param_name(bins, i),
                truth: design.theta_true.values()[i],
                mean,
                sd: var.sqrt(),
                quantiles: percentile_interval(&column, 0.95),
                min: column.iter().copied().fold(f64::INFINITY, f64::min),
                max: column.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(RecoveryReport {
        rows,
        replicates: design.replicates,
        records_per_replicate: design.records(),
        not_converged: fits.iter().filter(|f| !f.converged).count(),
        seed: design.seed,
    })
}

/// z value of the two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityRow {
    pub category: String,
    pub respondents: usize,
    pub home_estimate: f64,
    pub home_interval: Option<Interval>,
    /// Share of respondents in the category reporting any household contact.
    pub observed_share: Option<f64>,
    /// Normal-approximation binomial interval, clipped to [0, 1].
    pub share_interval: Option<Interval>,
    /// The two intervals are disjoint.
    pub significant: bool,
}

/// Compares each at-home estimate with the observed share of respondents who
/// reported contact with anyone at home; the latter event implies the former.
pub fn validity_check(
    data: &[RespondentRecord],
    fit: &FitResult,
    bootstrap: Option<&BootstrapResult>,
    bins: &AgeBins,
) -> Result<Vec<ValidityRow>> {
    let theta = fit.theta_hat();
    if bins.len() != theta.k() {
        return Err(Error::input("age bins do not match the fitted parameters"));
    }
    let mut totals = vec![(0usize, 0usize); theta.k()];
    for rec in data {
        let t = totals
            .get_mut(rec.respondent.0)
            .ok_or_else(|| Error::input(format!("record {} has an unknown category", rec.id)))?;
        t.0 += 1;
        if !rec.contacts.is_zero() {
            t.1 += 1;
        }
    }
    Ok(bins
        .categories()
        .map(|v| {
            let (n, any) = totals[v.0];
            let home_interval = bootstrap.map(|b| b.intervals[v.0]);
            let (observed_share, share_interval) = if n == 0 {
                (None, None)
            } else {
                let share = any as f64 / n as f64;
                let half = Z95 * (share * (1.0 - share) / n as f64).sqrt();
                (
                    Some(share),
                    Some(Interval {
                        lo: (share - half).max(0.0),
                        hi: (share + half).min(1.0),
                    }),
                )
            };
            let significant = match (home_interval, share_interval) {
                (Some(a), Some(b)) => a.hi < b.lo || b.hi < a.lo,
                _ => false,
            };
            ValidityRow {
                category: bins.label(v),
                respondents: n,
                home_estimate: theta.home(v),
                home_interval,
                observed_share,
                share_interval,
                significant,
            }
        })
        .collect())
}

/// On-disk simulation design (JSON or TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimDesignFile {
    #[serde(default)]
    pub age_bins: AgeBins,
    pub compositions: Vec<DesignRowFile>,
    pub theta: BTreeMap<String, f64>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignRowFile {
    /// Category label such as `19-35`.
    pub respondent: String,
    pub household: Vec<u32>,
    pub count: u32,
}

impl SimDesignFile {
    pub fn from_design(design: &SimDesign, bins: &AgeBins) -> Self {
        SimDesignFile {
            age_bins: bins.clone(),
            compositions: design
                .compositions
                .iter()
                .map(|r| DesignRowFile {
                    respondent: bins.label(r.respondent),
                    household: r.household.counts().to_vec(),
                    count: r.count,
                })
                .collect(),
            theta: ParameterFile::from_parameters(bins, &design.theta_true).theta,
            replicates: design.replicates,
            seed: design.seed,
        }
    }

    pub fn into_design(self) -> Result<(AgeBins, SimDesign)> {
        let (bins, theta_true) = ParameterFile {
            age_bins: self.age_bins,
            theta: self.theta,
            source: None,
        }
        .into_parameters()?;
        let compositions = self
            .compositions
            .into_iter()
            .map(|r| {
                Ok(DesignRow {
                    respondent: bins.parse_label(&r.respondent)?,
                    household: HouseholdComposition::new(r.household)?,
                    count: r.count,
                })
            })
            .collect::<Result<_>>()?;
        let design = SimDesign {
            compositions,
            theta_true,
            replicates: self.replicates,
            seed: self.seed,
        };
        design.validate()?;
        Ok((bins, design))
    }
}
