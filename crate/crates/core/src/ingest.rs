//! Diary CSV ingestion and the aggregated records format.
//!
//! Raw diaries have one row per reported contact. A household contact is one
//! that happened at home, daily or almost daily, with someone whose age equals
//! a roster age. Roster members are matched at most once, greedily in roster
//! order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_model::{
    AgeBins, AgeCategory, ContactCounts, DiaryDay, HouseholdComposition, RespondentRecord,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Often,
    Rare,
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" | "daily or almost daily" | "1" => Ok(Frequency::Daily),
            "often" | "weekly" | "about once or twice a week" | "2" => Ok(Frequency::Often),
            "rare" | "monthly" | "less often" | "first time" | "never" | "3" | "4" | "5" => {
                Ok(Frequency::Rare)
            }
            other => Err(Error::input(format!("unknown contact frequency {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Home,
    Work,
    School,
    Transport,
    Leisure,
    Other,
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "home" => Location::Home,
            "work" => Location::Work,
            "school" => Location::School,
            "transport" => Location::Transport,
            "leisure" => Location::Leisure,
            "other" => Location::Other,
            other => return Err(Error::input(format!("unknown location {other:?}"))),
        })
    }
}

/// One reported contact, or a roster-only row when `contact_age` is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct DiaryRow {
    pub line: u64,
    pub respondent_id: String,
    pub respondent_age: i64,
    pub household_ages: Vec<i64>,
    pub contact_age: Option<i64>,
    pub frequency: Option<Frequency>,
    pub locations: Vec<Location>,
    pub diary_date: String,
    pub day: DiaryDay,
}

impl DiaryRow {
    fn is_household_candidate(&self) -> bool {
        self.frequency == Some(Frequency::Daily) && self.locations.contains(&Location::Home)
    }
}

/// Which diary days of each respondent to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayFilter {
    #[default]
    All,
    First,
    Second,
}

impl FromStr for DayFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(DayFilter::All),
            "first" => Ok(DayFilter::First),
            "second" => Ok(DayFilter::Second),
            other => Err(Error::input(format!("unknown day filter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Line in the input file (header is line 1), when tied to one row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    pub respondent: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_skipped: usize,
    pub records_written: usize,
    pub records_rejected: usize,
    pub days_filtered: usize,
    pub household_contacts: usize,
    /// Matching-age contacts beyond the number of roster members of that age.
    pub contacts_clipped: usize,
    /// Home and daily, but no roster member has that age.
    pub contacts_unmatched: usize,
    /// Not at home or not daily.
    pub contacts_other: usize,
    pub skipped: Vec<Diagnostic>,
    pub rejected: Vec<Diagnostic>,
    pub clips: Vec<Diagnostic>,
}

const DIARY_COLUMNS: [&str; 10] = [
    "respondent_id",
    "respondent_age",
    "household_ages",
    "contact_age",
    "contact_gender",
    "frequency",
    "locations",
    "diary_date",
    "weekend",
    "holiday",
];

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Ok(true),
        "0" | "false" | "no" | "n" => Ok(false),
        other => Err(Error::input(format!("expected a boolean, got {other:?}"))),
    }
}

fn parse_age(s: &str) -> Result<i64> {
    let age: i64 = s
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("unparseable age {s:?}")))?;
    if age < 0 {
        return Err(Error::input(format!("negative age {age}")));
    }
    Ok(age)
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(';')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(item)
        .collect()
}

fn header_index(headers: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("missing column {name:?}"),
                })
        })
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Reads diary rows. Structural CSV problems are errors; rows with bad values
/// are skipped and reported.
pub fn read_diary<R: Read>(input: R, report: &mut IngestReport) -> Result<Vec<DiaryRow>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let idx = header_index(&headers, &DIARY_COLUMNS)?;
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim();
        let parsed = (|| -> Result<DiaryRow> {
            let contact_age = match field(3) {
                "" => None,
                s => Some(parse_age(s)?),
            };
            Ok(DiaryRow {
                line,
                respondent_id: field(0).to_string(),
                respondent_age: parse_age(field(1))?,
                household_ages: parse_list(field(2), parse_age)?,
                contact_age,
                frequency: match (contact_age, field(5)) {
                    (None, _) | (_, "") => None,
                    (Some(_), s) => Some(s.parse()?),
                },
                locations: parse_list(field(6), |s| s.parse())?,
                diary_date: field(7).to_string(),
                day: DiaryDay {
                    weekend: parse_bool(field(8))?,
                    holiday: parse_bool(field(9))?,
                },
            })
        })();
        match parsed {
            Ok(row) if row.respondent_id.is_empty() => {
                report.rows_skipped += 1;
                report.skipped.push(Diagnostic {
                    line: Some(line),
                    respondent: String::new(),
                    message: "empty respondent id".into(),
                });
            }
            Ok(row) => rows.push(row),
            Err(e) => {
                report.rows_skipped += 1;
                report.skipped.push(Diagnostic {
                    line: Some(line),
                    respondent: field(0).to_string(),
                    message: match e {
                        Error::Input(m) => m,
                        other => other.to_string(),
                    },
                });
            }
        }
    }
    Ok(rows)
}

/// Turns the rows of one respondent-day into a record.
pub fn match_household_contacts(
    rows: &[DiaryRow],
    bins: &AgeBins,
    report: &mut IngestReport,
) -> Result<RespondentRecord> {
    let first = rows
        .first()
        .ok_or_else(|| Error::input("no diary rows for respondent"))?;
    if rows.iter().any(|r| r.respondent_id != first.respondent_id) {
        return Err(Error::input("rows belong to different respondents"));
    }
    let id = if first.diary_date.is_empty() {
        first.respondent_id.clone()
    } else {
        format!("{}@{}", first.respondent_id, first.diary_date)
    };
    if first.household_ages.is_empty() {
        return Err(Error::input(format!(
            "respondent {}: empty household roster",
            first.respondent_id
        )));
    }
    let k = bins.len();
    let j = bins.bin(first.respondent_age)?;
    let roster: Vec<(i64, AgeCategory)> = first
        .household_ages
        .iter()
        .map(|&a| Ok((a, bins.bin(a)?)))
        .collect::<Result<_>>()?;
    let mut n = vec![0u32; k];
    for &(_, c) in &roster {
        n[c.0] += 1;
    }

    let mut matched = vec![false; roster.len()];
    let mut w = vec![0u32; k];
    for row in rows {
        let Some(age) = row.contact_age else { continue };
        if !row.is_household_candidate() {
            report.contacts_other += 1;
            continue;
        }
        match roster
            .iter()
            .enumerate()
            .position(|(i, &(a, _))| a == age && !matched[i])
        {
            Some(i) => {
                matched[i] = true;
                w[roster[i].1 .0] += 1;
                report.household_contacts += 1;
            }
            None if roster.iter().any(|&(a, _)| a == age) => {
                report.contacts_clipped += 1;
                report.clips.push(Diagnostic {
                    line: Some(row.line),
                    respondent: row.respondent_id.clone(),
                    message: format!("more household contacts aged {age} than roster members"),
                });
            }
            None => report.contacts_unmatched += 1,
        }
    }
    RespondentRecord::new(
        id,
        j,
        HouseholdComposition::new(n)?,
        ContactCounts(w),
        first.day,
    )
}

/// Groups rows by respondent and diary date (in order of first appearance),
/// applies the day filter and matches contacts.
pub fn aggregate(
    rows: &[DiaryRow],
    bins: &AgeBins,
    filter: DayFilter,
    report: &mut IngestReport,
) -> Vec<RespondentRecord> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<DiaryRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.respondent_id.clone(), row.diary_date.clone());
        let group = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        group.push(row.clone());
    }
    let mut day_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut records = Vec::new();
    for key in order {
        let day = day_index.entry(key.0.clone()).or_insert(0);
        *day += 1;
        let keep = match filter {
            DayFilter::All => true,
            DayFilter::First => *day == 1,
            DayFilter::Second => *day == 2,
        };
        if !keep {
            report.days_filtered += 1;
            continue;
        }
        match match_household_contacts(&groups[&key], bins, report) {
            Ok(rec) => records.push(rec),
            Err(e) => {
                report.records_rejected += 1;
                report.rejected.push(Diagnostic {
                    line: groups[&key].first().map(|r| r.line),
                    respondent: key.0.clone(),
                    message: match e {
                        Error::Input(m) => m,
                        other => other.to_string(),
                    },
                });
            }
        }
    }
    report.records_written = records.len();
    records
}

/// Reads a raw diary file into records plus an ingestion report.
pub fn ingest_diary<R: Read>(
    input: R,
    bins: &AgeBins,
    filter: DayFilter,
) -> Result<(Vec<RespondentRecord>, IngestReport)> {
    let mut report = IngestReport::default();
    let rows = read_diary(input, &mut report)?;
    let records = aggregate(&rows, bins, filter, &mut report);
    Ok((records, report))
}

fn records_header(k: usize) -> Vec<String> {
    let mut h = vec!["id".to_string(), "j".to_string()];
    h.extend((1..=k).map(|s| format!("n_{s}")));
    h.extend((1..=k).map(|s| format!("w_{s}")));
    h.push("weekend".into());
    h.push("holiday".into());
    h
}

/// Writes the aggregated-records CSV (`j` and column suffixes are 1-based).
pub fn write_records<W: Write>(out: W, records: &[RespondentRecord], k: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(records_header(k)).map_err(err)?;
    for rec in records {
        if rec.k() != k {
            return Err(Error::input(format!(
                "record {} has {} categories",
                rec.id,
                rec.k()
            )));
        }
        let mut row = vec![rec.id.clone(), rec.respondent.number().to_string()];
        row.extend(rec.household.counts().iter().map(u32::to_string));
        row.extend(rec.contacts.counts().iter().map(u32::to_string));
        row.push(u8::from(rec.day.weekend).to_string());
        row.push(u8::from(rec.day.holiday).to_string());
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(())
}

/// Reads the aggregated-records CSV; any invalid row is an error naming its line.
pub fn read_records<R: Read>(input: R, k: usize) -> Result<Vec<RespondentRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let expected = records_header(k);
    let names: Vec<&str> = expected.iter().map(String::as_str).collect();
    let idx = header_index(&headers, &names)?;
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |e: Error| Error::Parse {
            line,
            message: match e {
                Error::Input(m) => m,
                other => other.to_string(),
            },
        };
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim();
        let count = |i: usize| -> Result<u32> {
            field(i).parse().map_err(|_| {
                Error::input(format!(
                    "column {}: expected a count, got {:?}",
                    names[i],
                    field(i)
                ))
            })
        };
        let j: usize = field(1).parse().map_err(|_| {
            at(Error::input(format!(
                "column j: bad category {:?}",
                field(1)
            )))
        })?;
        let n = (0..k)
            .map(|s| count(2 + s))
            .collect::<Result<Vec<_>>>()
            .map_err(at)?;
        let w = (0..k)
            .map(|s| count(2 + k + s))
            .collect::<Result<Vec<_>>>()
            .map_err(at)?;
        let day = DiaryDay {
            weekend: parse_bool(field(2 + 2 * k)).map_err(at)?,
            holiday: parse_bool(field(3 + 2 * k)).map_err(at)?,
        };
        let j = AgeCategory::from_number(j).map_err(at)?;
        if j.0 >= k {
            return Err(at(Error::input(format!(
                "category {} exceeds {k}",
                j.number()
            ))));
        }
        let rec = HouseholdComposition::new(n)
            .and_then(|n| RespondentRecord::new(field(0), j, n, ContactCounts(w), day))
            .map_err(at)?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no records".into(),
        });
    }
    Ok(out)
}
