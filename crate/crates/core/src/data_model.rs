//! Domain types shared by every stage: age categories, household rosters,
//! respondent records and the parameter vector of the at-home model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bounds (in years) of the default age categories 0-5, 6-11, 12-18, 19-35, 36+.
pub const DEFAULT_AGE_BINS: [u32; 5] = [0, 6, 12, 19, 36];

/// Zero-based index of an age category.
///
/// Categories are numbered `1..=K` in files and reports; [`AgeCategory::number`]
/// gives that form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgeCategory(pub usize);

impl AgeCategory {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn number(self) -> usize {
        self.0 + 1
    }

    pub fn from_number(number: usize) -> Result<Self> {
        if number == 0 {
            return Err(Error::input("age category numbers start at 1"));
        }
        Ok(AgeCategory(number - 1))
    }
}

/// Half-open age intervals `[lower[i], lower[i + 1])`, the last one unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct AgeBins {
    lower: Vec<u32>,
}

impl Default for AgeBins {
    fn default() -> Self {
        AgeBins {
            lower: DEFAULT_AGE_BINS.to_vec(),
        }
    }
}

impl TryFrom<Vec<u32>> for AgeBins {
    type Error = Error;

    fn try_from(lower: Vec<u32>) -> Result<Self> {
        AgeBins::new(lower)
    }
}

impl From<AgeBins> for Vec<u32> {
    fn from(bins: AgeBins) -> Self {
        bins.lower
    }
}

impl AgeBins {
    pub fn new(lower: Vec<u32>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::input("age bins must not be empty"));
        }
        if lower[0] != 0 {
            return Err(Error::input("first age bin must start at 0"));
        }
        if lower.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input(format!(
                "age bin boundaries must be strictly increasing: {lower:?}"
            )));
        }
        Ok(AgeBins { lower })
    }

    /// Parses a comma-separated list of lower bounds, e.g. `0,6,12,19,36`.
    pub fn parse(text: &str) -> Result<Self> {
        let lower = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::input(format!("bad age bin boundary {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        AgeBins::new(lower)
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower_bounds(&self) -> &[u32] {
        &self.lower
    }

    pub fn categories(&self) -> impl Iterator<Item = AgeCategory> {
        (0..self.len()).map(AgeCategory)
    }

    pub fn bin(&self, age_years: i64) -> Result<AgeCategory> {
        bin_age(age_years, self)
    }

    /// Label such as `0-5` or `36+`.
    pub fn label(&self, category: AgeCategory) -> String {
        let lo = self.lower[category.0];
        match self.lower.get(category.0 + 1) {
            Some(&next) => format!("{}-{}", lo, next - 1),
            None => format!("{lo}+"),
        }
    }

    /// Inverse of [`AgeBins::label`].
    pub fn parse_label(&self, label: &str) -> Result<AgeCategory> {
        let label = label.trim();
        self.categories()
            .find(|&c| self.label(c) == label)
            .ok_or_else(|| Error::input(format!("unknown age category label {label:?}")))
    }
}

/// Maps an age in years to the category whose half-open interval contains it.
pub fn bin_age(age_years: i64, bins: &AgeBins) -> Result<AgeCategory> {
    if age_years < 0 {
        return Err(Error::input(format!("negative age {age_years}")));
    }
    let idx = bins
        .lower
        .iter()
        .rposition(|&lo| i64::from(lo) <= age_years)
        .expect("first bin starts at 0");
    Ok(AgeCategory(idx))
}

/// Counts of non-respondent household members per age category.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HouseholdComposition(pub Vec<u32>);

impl HouseholdComposition {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.iter().sum::<u32>() == 0 {
            return Err(Error::input(
                "household needs at least one non-respondent member",
            ));
        }
        Ok(HouseholdComposition(counts))
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn members(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Household size including the respondent.
    pub fn household_size(&self) -> u32 {
        self.members() + 1
    }
}

/// Matched household contacts of the respondent per age category.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContactCounts(pub Vec<u32>);

impl ContactCounts {
    pub fn zeros(k: usize) -> Self {
        ContactCounts(vec![0; k])
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }
}

/// Binary covariates a dataset can be split on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Weekend,
    Holiday,
    /// Four or more members including the respondent.
    LargeHousehold,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Weekend, Stratum::Holiday, Stratum::LargeHousehold];

    pub fn name(self) -> &'static str {
        match self {
            Stratum::Weekend => "weekend",
            Stratum::Holiday => "holiday",
            Stratum::LargeHousehold => "large_household",
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stratum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stratum::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::input(format!("unknown stratum {s:?}")))
    }
}

/// Smallest household (respondent included) counted as large.
pub const LARGE_HOUSEHOLD_SIZE: u32 = 4;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct DiaryDay {
    pub weekend: bool,
    pub holiday: bool,
}

/// One respondent-day: the sufficient statistics the likelihood consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RespondentRecord {
    pub id: String,
    pub respondent: AgeCategory,
    pub household: HouseholdComposition,
    pub contacts: ContactCounts,
    pub day: DiaryDay,
}

impl RespondentRecord {
    pub fn new(
        id: impl Into<String>,
        respondent: AgeCategory,
        household: HouseholdComposition,
        contacts: ContactCounts,
        day: DiaryDay,
    ) -> Result<Self> {
        let rec = RespondentRecord {
            id: id.into(),
            respondent,
            household,
            contacts,
            day,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn k(&self) -> usize {
        self.household.0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::input(format!(
                "record {}: no age categories",
                self.id
            )));
        }
        if self.contacts.0.len() != k {
            return Err(Error::input(format!(
                "record {}: {} contact counts for {} categories",
                self.id,
                self.contacts.0.len(),
                k
            )));
        }
        if self.respondent.0 >= k {
            return Err(Error::input(format!(
                "record {}: respondent category {} out of range",
                self.id,
                self.respondent.number()
            )));
        }
        if self.household.members() == 0 {
            return Err(Error::input(format!(
                "record {}: household has no other members",
                self.id
            )));
        }
        for (s, (&w, &n)) in self.contacts.0.iter().zip(&self.household.0).enumerate() {
            if w > n {
                return Err(Error::input(format!(
                    "record {}: {w} contacts but {n} members in category {}",
                    self.id,
                    s + 1
                )));
            }
        }
        Ok(())
    }

    pub fn stratum(&self, stratum: Stratum) -> bool {
        match stratum {
            Stratum::Weekend => self.day.weekend,
            Stratum::Holiday => self.day.holiday,
            Stratum::LargeHousehold => self.household.household_size() >= LARGE_HOUSEHOLD_SIZE,
        }
    }
}

/// Which probability a flat parameter index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKind {
    Home(AgeCategory),
    /// Upper-triangle pair, `r <= s`.
    Contact(AgeCategory, AgeCategory),
}

/// At-home probabilities followed by the upper triangle (row-major) of the
/// symmetric conditional contact matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    k: usize,
    values: Vec<f64>,
}

/// Number of free parameters for `k` categories: `k + k(k+1)/2`.
pub fn parameter_count(k: usize) -> usize {
    k + k * (k + 1) / 2
}

impl ParameterVector {
    pub fn from_values(k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != parameter_count(k) {
            return Err(Error::input(format!(
                "expected {} parameters for {k} categories, got {}",
                parameter_count(k),
                values.len()
            )));
        }
        let theta = ParameterVector { k, values };
        theta.validate()?;
        Ok(theta)
    }

    pub fn uniform(k: usize, home: f64, contact: f64) -> Result<Self> {
        let mut values = vec![home; k];
        values.resize(parameter_count(k), contact);
        ParameterVector::from_values(k, values)
    }

    /// Builds the vector from `home[v]` and a full (symmetric) contact matrix.
    pub fn from_parts(home: &[f64], contact: &[Vec<f64>]) -> Result<Self> {
        let k = home.len();
        if contact.len() != k || contact.iter().any(|row| row.len() != k) {
            return Err(Error::input("contact matrix must be k x k"));
        }
        let mut values = home.to_vec();
        for r in 0..k {
            for s in r..k {
                if contact[r][s] != contact[s][r] {
                    return Err(Error::input(format!(
                        "contact matrix not symmetric at ({}, {})",
                        r + 1,
                        s + 1
                    )));
                }
                values.push(contact[r][s]);
            }
        }
        ParameterVector::from_values(k, values)
    }

    /// Point estimates transcribed from the published contact and at-home tables
    /// (default five age categories).
    pub fn published() -> Self {
        let file: ParameterFile =
            serde_json::from_str(PUBLISHED_JSON).expect("bundled published.json parses");
        file.into_parameters()
            .expect("bundled published.json is valid")
            .1
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &p) in self.values.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!("parameter {i} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn home(&self, v: AgeCategory) -> f64 {
        self.values[v.0]
    }

    pub fn contact(&self, r: AgeCategory, s: AgeCategory) -> f64 {
        self.values[contact_index(self.k, r, s)]
    }

    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::input(format!(
                "parameter value {value} outside [0, 1]"
            )));
        }
        self.values[index] = value;
        Ok(())
    }

    pub fn kind(&self, index: usize) -> ParamKind {
        param_kind(self.k, index)
    }

    /// Named entries such as `home.0-5` and `contact.12-18x19-35`, in index order.
    pub fn named(&self, bins: &AgeBins) -> Vec<(String, f64)> {
        (0..self.len())
            .map(|i| (param_name(bins, i), self.values[i]))
            .collect()
    }
}

pub fn home_index(v: AgeCategory) -> usize {
    v.0
}

pub fn contact_index(k: usize, r: AgeCategory, s: AgeCategory) -> usize {
    let (r, s) = if r <= s { (r.0, s.0) } else { (s.0, r.0) };
    // rows 0..r of the upper triangle hold k, k-1, ... entries
    k + r * k - r * r.saturating_sub(1) / 2 + (s - r)
}

pub fn param_kind(k: usize, index: usize) -> ParamKind {
    if index < k {
        return ParamKind::Home(AgeCategory(index));
    }
    let mut offset = index - k;
    for r in 0..k {
        let row = k - r;
        if offset < row {
            return ParamKind::Contact(AgeCategory(r), AgeCategory(r + offset));
        }
        offset -= row;
    }
    panic!("parameter index {index} out of range for k = {k}");
}

pub fn param_name(bins: &AgeBins, index: usize) -> String {
    match param_kind(bins.len(), index) {
        ParamKind::Home(v) => format!("home.{}", bins.label(v)),
        ParamKind::Contact(r, s) => format!("contact.{}x{}", bins.label(r), bins.label(s)),
    }
}

/// Inverse of [`param_name`]; contact pairs may be given in either order.
pub fn parse_param_name(bins: &AgeBins, name: &str) -> Result<usize> {
    let name = name.trim();
    if let Some(label) = name.strip_prefix("home.") {
        return Ok(home_index(bins.parse_label(label)?));
    }
    if let Some(pair) = name.strip_prefix("contact.") {
        let (a, b) = pair
            .split_once('x')
            .ok_or_else(|| Error::input(format!("bad contact parameter name {name:?}")))?;
        let r = bins.parse_label(a)?;
        let s = bins.parse_label(b)?;
        return Ok(contact_index(bins.len(), r, s));
    }
    Err(Error::input(format!("unknown parameter name {name:?}")))
}

pub(crate) const PUBLISHED_JSON: &str = include_str!("../data/published.json");

/// On-disk form of a parameter vector: the age bins plus named values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterFile {
    #[serde(default)]
    pub age_bins: AgeBins,
    pub theta: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl ParameterFile {
    pub fn from_parameters(bins: &AgeBins, theta: &ParameterVector) -> Self {
        ParameterFile {
            age_bins: bins.clone(),
            theta: theta.named(bins).into_iter().collect(),
            source: None,
        }
    }

    pub fn into_parameters(self) -> Result<(AgeBins, ParameterVector)> {
        let k = self.age_bins.len();
        let mut values = vec![f64::NAN; parameter_count(k)];
        for (name, value) in &self.theta {
            let idx = parse_param_name(&self.age_bins, name)?;
            values[idx] = *value;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::input(format!(
                "parameter {} missing",
                param_name(&self.age_bins, i)
            )));
        }
        let theta = ParameterVector::from_values(k, values)?;
        Ok((self.age_bins, theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_match_published_categories() {
        let bins = AgeBins::default();
        assert_eq!(bin_age(3, &bins).unwrap().number(), 1);
        assert_eq!(bin_age(6, &bins).unwrap().number(), 2);
        assert_eq!(bin_age(5, &bins).unwrap().number(), 1);
        assert_eq!(bin_age(18, &bins).unwrap().number(), 3);
        assert_eq!(bin_age(19, &bins).unwrap().number(), 4);
        assert_eq!(bin_age(36, &bins).unwrap().number(), 5);
        assert_eq!(bin_age(104, &bins).unwrap().number(), 5);
        assert!(bin_age(-1, &bins).is_err());
    }

    #[test]
    fn bin_age_is_surjective_on_default_bins() {
        let bins = AgeBins::default();
        let mut seen = [false; 5];
        for age in 0..120 {
            seen[bin_age(age, &bins).unwrap().0] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn bins_reject_non_increasing() {
        assert!(AgeBins::new(vec![0, 6, 6]).is_err());
        assert!(AgeBins::new(vec![1, 6]).is_err());
        assert!(AgeBins::new(vec![]).is_err());
        assert_eq!(AgeBins::parse("0,6,12,19,36").unwrap(), AgeBins::default());
    }

    #[test]
    fn labels_round_trip() {
        let bins = AgeBins::default();
        let labels: Vec<_> = bins.categories().map(|c| bins.label(c)).collect();
        assert_eq!(labels, ["0-5", "6-11", "12-18", "19-35", "36+"]);
        for c in bins.categories() {
            assert_eq!(bins.parse_label(&bins.label(c)).unwrap(), c);
        }
    }

    #[test]
    fn contact_index_layout() {
        let k = 5;
        assert_eq!(parameter_count(k), 20);
        let mut expected = k;
        for r in 0..k {
            for s in r..k {
                let (a, b) = (AgeCategory(r), AgeCategory(s));
                assert_eq!(contact_index(k, a, b), expected);
                assert_eq!(contact_index(k, b, a), expected);
                assert_eq!(param_kind(k, expected), ParamKind::Contact(a, b));
                expected += 1;
            }
        }
        assert_eq!(expected, 20);
    }

    #[test]
    fn param_names_parse_back() {
        let bins = AgeBins::default();
        for i in 0..20 {
            assert_eq!(parse_param_name(&bins, &param_name(&bins, i)).unwrap(), i);
        }
        assert_eq!(
            parse_param_name(&bins, "contact.19-35x12-18").unwrap(),
            parse_param_name(&bins, "contact.12-18x19-35").unwrap()
        );
        assert!(parse_param_name(&bins, "contact.0-5").is_err());
    }

    #[test]
    fn published_parameters_load() {
        let theta = ParameterVector::published();
        assert_eq!(theta.len(), 20);
        let c = |a, b| theta.contact(AgeCategory(a), AgeCategory(b));
        assert_eq!(c(0, 0), 1.0);
        assert_eq!(c(2, 3), 0.65);
        assert_eq!(c(3, 2), 0.65);
        assert_eq!(theta.home(AgeCategory(4)), 0.92);
    }

    #[test]
    fn record_rejects_excess_contacts() {
        let n = HouseholdComposition(vec![0, 1, 0, 0, 0]);
        let w = ContactCounts(vec![0, 2, 0, 0, 0]);
        assert!(RespondentRecord::new("a", AgeCategory(0), n, w, DiaryDay::default()).is_err());
        assert!(HouseholdComposition::new(vec![0; 5]).is_err());
    }

    #[test]
    fn large_household_stratum_uses_total_size() {
        let rec = |n: Vec<u32>| {
            RespondentRecord::new(
                "r",
                AgeCategory(3),
                HouseholdComposition(n),
                ContactCounts::zeros(5),
                DiaryDay::default(),
            )
            .unwrap()
        };
        assert!(!rec(vec![0, 0, 0, 1, 1]).stratum(Stratum::LargeHousehold));
        assert!(rec(vec![1, 0, 0, 1, 1]).stratum(Stratum::LargeHousehold));
    }
}
