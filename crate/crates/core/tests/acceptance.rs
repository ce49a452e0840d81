//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hhcontact::likelihood::{brute_force_loglik, respondent_loglik};
use hhcontact::model_selection::chi2_sf;
use hhcontact::network::{
    enumerate_distribution, network_probability, EnumerateOptions, NetworkState,
};
use hhcontact::simulation::{belgian_like_design, recovery_study, SimDesign};
use hhcontact::{
    AgeBins, AgeCategory, ContactCounts, DiaryDay, HouseholdComposition, ParameterVector,
    RespondentRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 5;

type Criterion = (&'static str, fn() -> Outcome);
/// Edge counts per age pair, as a sortable key.
type EdgeSignature = Vec<((AgeCategory, AgeCategory), usize)>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cat(v: usize) -> AgeCategory {
    AgeCategory(v)
}

fn record(j: usize, n: Vec<u32>, w: Vec<u32>) -> RespondentRecord {
    RespondentRecord::new(
        "t",
        cat(j),
        HouseholdComposition(n),
        ContactCounts(w),
        DiaryDay::default(),
    )
    .expect("valid record")
}

fn random_theta(rng: &mut impl Rng, boundary_share: f64) -> ParameterVector {
    let values = (0..hhcontact::data_model::parameter_count(K))
        .map(|_| {
            if rng.random_bool(boundary_share) {
                if rng.random_bool(0.5) {
                    0.0
                } else {
                    1.0
                }
            } else {
                rng.random_range(0.001..0.999)
            }
        })
        .collect();
    ParameterVector::from_values(K, values).unwrap()
}

/// Every contact vector with `w[s] <= n[s]`.
fn contact_box(n: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &c in n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=c).map(move |x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum())
        || (a - b).abs() <= tol * a.abs().max(1.0)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let size = rng.random_range(2..=6u32);
        let j = rng.random_range(0..K);
        let mut n = vec![0u32; K];
        for _ in 1..size {
            n[rng.random_range(0..K)] += 1;
        }
        let w: Vec<u32> = n.iter().map(|&c| rng.random_range(0..=c)).collect();
        let theta = random_theta(&mut rng, 0.1);
        let rec = record(j, n, w);
        let fast = respondent_loglik(&rec, &theta).unwrap();
        let slow = brute_force_loglik(&rec, &theta).unwrap();
        if !close(fast, slow, 1e-12) {
            mismatches += 1;
        } else if fast.is_finite() {
            worst = worst.max((fast - slow).abs() / fast.abs().max(1.0));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!(
            "1000 pairs, {mismatches} mismatches, worst relative gap {worst:.2e}, {elapsed:.2?}"
        ),
    )
}

/// Age compositions of the surveyed four-person households, as tabulated
/// (one composition appears twice).
const SIZE_FOUR: [[u32; K]; 25] = [
    [0, 0, 0, 0, 4],
    [0, 0, 0, 1, 3],
    [0, 0, 0, 2, 2],
    [0, 0, 0, 3, 1],
    [0, 0, 0, 4, 0],
    [0, 0, 1, 1, 2],
    [0, 0, 1, 2, 1],
    [0, 0, 2, 0, 2],
    [0, 0, 3, 0, 1],
    [0, 1, 0, 0, 3],
    [0, 1, 0, 1, 2],
    [0, 1, 1, 1, 1],
    [0, 1, 2, 0, 1],
    [0, 1, 1, 0, 2],
    [0, 1, 2, 0, 1],
    [0, 2, 0, 0, 2],
    [0, 2, 0, 1, 1],
    [0, 2, 0, 2, 0],
    [1, 0, 1, 0, 2],
    [1, 1, 0, 0, 2],
    [1, 1, 0, 1, 1],
    [1, 1, 0, 2, 0],
    [2, 0, 0, 0, 2],
    [2, 0, 0, 1, 1],
    [2, 0, 0, 2, 0],
];

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for composition in SIZE_FOUR {
        for j in (0..K).filter(|&v| composition[v] > 0) {
            let mut n = composition.to_vec();
            n[j] -= 1;
            for _ in 0..20 {
                let theta = random_theta(&mut rng, 0.0);
                let total: f64 = contact_box(&n)
                    .into_iter()
                    .map(|w| {
                        respondent_loglik(&record(j, n.clone(), w), &theta)
                            .unwrap()
                            .exp()
                    })
                    .sum();
                worst = worst.max((total - 1.0).abs());
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(30),
        format!("{cases} (household, respondent, theta) cases, max |sum - 1| = {worst:.2e}, {elapsed:.2?}"),
    )
}

/// Children at 0 and 1, adults at 2 and 3.
fn young_family() -> Vec<AgeCategory> {
    vec![cat(0), cat(0), cat(3), cat(3)]
}

fn criterion_3() -> Outcome {
    let theta = ParameterVector::published();
    let members = young_family();
    let complete = network_probability(&NetworkState::complete(members.clone()), &theta).unwrap();
    let all_pairs: Vec<(usize, usize)> = (0..4)
        .flat_map(|a| (a + 1..4).map(move |b| (a, b)))
        .filter(|&e| e != (2, 3))
        .collect();
    let no_adult_tie = NetworkState::from_edges(members, vec![true; 4], &all_pairs).unwrap();
    let apart = network_probability(&no_adult_tie, &theta).unwrap();
    outcome(
        (complete - 0.49).abs() <= 0.02 && (apart - 0.12).abs() <= 0.02,
        format!("complete {complete:.4} (0.49 +/- 0.02), adults not in contact {apart:.4} (0.12 +/- 0.02)"),
    )
}

fn criterion_4() -> Outcome {
    let theta = ParameterVector::published();
    let p = network_probability(
        &NetworkState::complete(vec![cat(2), cat(2), cat(4), cat(4)]),
        &theta,
    )
    .unwrap();
    outcome(
        (p - 0.36).abs() <= 0.02,
        format!("complete teen/adult network {p:.4} (0.36 +/- 0.02)"),
    )
}

/// Looks for two networks of the young family with identical edge counts per
/// age pair, one near 0.15 and one with probability exactly zero.
fn criterion_5() -> Outcome {
    let theta = ParameterVector::published();
    let members = young_family();
    let mut notes = Vec::new();
    let mut found = false;
    for collapse in [false, true] {
        let dist = enumerate_distribution(
            &members,
            &theta,
            &EnumerateOptions {
                collapse,
                min_prob: 0.0,
                ..EnumerateOptions::default()
            },
        )
        .unwrap();
        let mut groups: BTreeMap<EdgeSignature, Vec<f64>> = BTreeMap::new();
        for e in &dist.entries {
            groups
                .entry(e.state.edge_counts().into_iter().collect())
                .or_default()
                .push(e.probability);
        }
        let zeros = dist.entries.iter().filter(|e| e.probability == 0.0).count();
        let mut nearest_zero = f64::INFINITY;
        for probs in groups.values() {
            if probs.iter().any(|p| (p - 0.15).abs() <= 0.02) {
                found |= probs.contains(&0.0);
                let smallest = probs.iter().copied().fold(f64::INFINITY, f64::min);
                nearest_zero = nearest_zero.min(smallest);
            }
        }
        notes.push(format!(
            "{}: {} states, {zeros} exactly zero, smallest partner of a ~0.15 state {nearest_zero:.3e}",
            if collapse { "collapsed" } else { "labeled" },
            dist.entries.len()
        ));
    }
    outcome(found, notes.join("; "))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for size in 2..=4usize {
        let mut others = vec![vec![]];
        for _ in 1..size {
            others = others
                .into_iter()
                .flat_map(|prefix: Vec<usize>| {
                    let from = prefix.last().copied().unwrap_or(0);
                    (from..K).map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        for j in 0..K {
            for rest in &others {
                let theta = random_theta(&mut rng, 0.0);
                let members: Vec<AgeCategory> = std::iter::once(j)
                    .chain(rest.iter().copied())
                    .map(cat)
                    .collect();
                let dist = enumerate_distribution(
                    &members,
                    &theta,
                    &EnumerateOptions {
                        min_prob: 0.0,
                        ..EnumerateOptions::default()
                    },
                )
                .unwrap();
                let mut n = vec![0u32; K];
                rest.iter().for_each(|&v| n[v] += 1);
                let mut marginal: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
                for e in &dist.entries {
                    let mut w = vec![0u32; K];
                    if e.state.home[0] {
                        for &(a, b) in &e.state.edges() {
                            match (a, b) {
                                (0, other) | (other, 0) => w[members[other].0] += 1,
                                _ => {}
                            }
                        }
                    }
                    *marginal.entry(w).or_default() += e.probability;
                }
                for w in contact_box(&n) {
                    let expected = respondent_loglik(&record(j, n.clone(), w.clone()), &theta)
                        .unwrap()
                        .exp();
                    let got = marginal.get(&w).copied().unwrap_or(0.0);
                    worst = worst.max((got - expected).abs());
                }
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(60),
        format!("{cases} households of 2-4 members, max marginal gap {worst:.2e}, {elapsed:.2?}"),
    )
}

fn criterion_7() -> Outcome {
    let a = chi2_sf(37.4, 17).unwrap();
    let b = chi2_sf(23.3, 19).unwrap();
    let c = chi2_sf(53.3, 19).unwrap();
    outcome(
        (a - 0.003).abs() <= 0.0005 && (b - 0.22).abs() <= 0.005 && c < 0.001,
        format!("sf(37.4; 17) = {a:.5}, sf(23.3; 19) = {b:.5}, sf(53.3; 19) = {c:.2e}"),
    )
}

/// Published 95% ranges of the at-home estimates, two decimals.
const HOME_RANGES: [(f64, f64); K] = [
    (1.00, 1.00),
    (0.87, 0.98),
    (0.77, 0.92),
    (0.68, 0.79),
    (0.57, 0.64),
];
/// Half a unit in the last printed decimal.
const ROUNDING: f64 = 0.005;

fn criterion_8() -> Outcome {
    let design = SimDesign::preset("varied-home", 100, 2024).unwrap();
    let bins = AgeBins::default();
    let start = Instant::now();
    let report = recovery_study(&design, &bins).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (v, (lo, hi)) in HOME_RANGES.iter().enumerate() {
        let name = format!("home.{}", bins.label(cat(v)));
        let mean = report.row(&name).unwrap().mean;
        let ok = mean >= lo - ROUNDING && mean <= hi + ROUNDING;
        pass &= ok;
        parts.push(format!(
            "{name} {mean:.3}{}",
            if ok { "" } else { " (outside)" }
        ));
    }
    let elder = report.row("contact.36+x36+").unwrap();
    let biased = elder.mean >= 0.99;
    pass &= biased;
    parts.push(format!(
        "contact.36+x36+ mean {:.3} vs truth {:.2} (needs >= 0.99)",
        elder.mean, elder.truth
    ));
    outcome(
        pass,
        format!(
            "{} records x {} replicates, {} not converged, {:.1?}: {}",
            belgian_like_design().iter().map(|r| r.count).sum::<u32>(),
            report.replicates,
            report.not_converged,
            start.elapsed(),
            parts.join(", ")
        ),
    )
}

/// Outcome probabilities of a respondent whose household holds one or two more
/// people of the same category.
fn outcome_vector(home: f64, contact: f64) -> Vec<f64> {
    let mut theta = ParameterVector::uniform(K, 0.5, 0.5).unwrap();
    theta
        .set(hhcontact::data_model::home_index(cat(3)), home)
        .unwrap();
    theta
        .set(
            hhcontact::data_model::contact_index(K, cat(3), cat(3)),
            contact,
        )
        .unwrap();
    let mut probs = Vec::new();
    for others in [1u32, 2] {
        let mut n = vec![0u32; K];
        n[3] = others;
        for w in 0..=others {
            let mut counts = vec![0u32; K];
            counts[3] = w;
            probs.push(
                respondent_loglik(&record(3, n.clone(), counts), &theta)
                    .unwrap()
                    .exp(),
            );
        }
    }
    probs
}

fn criterion_9() -> Outcome {
    let grid: Vec<f64> = (1..=9).map(|i| f64::from(i) / 10.0).collect();
    let points: Vec<(f64, f64, Vec<f64>)> = grid
        .iter()
        .flat_map(|&h| grid.iter().map(move |&c| (h, c, outcome_vector(h, c))))
        .collect();
    let mut closed_form_gap = 0.0_f64;
    for (h, c, probs) in &points {
        closed_form_gap = closed_form_gap
            .max((probs[1] - h * h * c).abs())
            .max((probs[4] - h.powi(3) * c * c).abs());
    }
    let mut closest = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let gap =
                a.2.iter()
                    .zip(&b.2)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
            closest = closest.min(gap);
        }
    }
    outcome(
        closest > 1e-9 && closed_form_gap <= 1e-12,
        format!(
            "{} grid points, smallest outcome-distribution gap {closest:.3e}, closed-form gap {closed_form_gap:.1e}",
            points.len()
        ),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hhcontact")
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin())
        .args(args)
        .env("HHCONTACT_THREADS", "2")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        // The manifest records wall-clock time; everything else must match.
        if name != "manifest.json" {
            files.insert(name, std::fs::read(&path).unwrap());
        }
    }
    files
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(name)
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let records = fixture("data/fixtures/synthetic_records.csv");
    let records = records.to_str().unwrap();
    let diary = fixture("tests/fixtures/diary.csv");
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("ingest", vec!["ingest", "--input", diary.to_str().unwrap()]),
        ("fit", vec!["fit", "--records", records, "--seed", "5"]),
        (
            "bootstrap",
            vec![
                "bootstrap",
                "--records",
                records,
                "--replicates",
                "40",
                "--seed",
                "5",
            ],
        ),
        (
            "lrt",
            vec![
                "lrt",
                "--records",
                records,
                "--stratum",
                "weekend",
                "--seed",
                "5",
            ],
        ),
        (
            "simulate",
            vec![
                "simulate",
                "--preset",
                "published",
                "--replicates",
                "4",
                "--seed",
                "5",
            ],
        ),
        (
            "validate",
            vec![
                "validate",
                "--records",
                records,
                "--replicates",
                "40",
                "--seed",
                "5",
            ],
        ),
    ];
    let mut failures = Vec::new();
    let mut compared = 0;
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for copy in ["a", "b"] {
            let dir = root.join(format!("{name}-{copy}"));
            let mut full = args.clone();
            full.extend(["--out", dir.to_str().unwrap()]);
            if let Err(e) = run(&full) {
                failures.push(e);
            }
            outputs.push(dir);
        }
        let rerun = root.join(format!("{name}-rerun"));
        let manifest = outputs[0].join("manifest.json");
        if let Err(e) = run(&[
            "rerun",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            rerun.to_str().unwrap(),
        ]) {
            failures.push(e);
        }
        outputs.push(rerun);
        let reference = artifacts(&outputs[0]);
        for other in &outputs[1..] {
            compared += 1;
            if artifacts(other) != reference {
                failures.push(format!(
                    "{} differs from {}",
                    other.display(),
                    outputs[0].display()
                ));
            }
        }
    }
    let boot = root.join("bootstrap-a/bootstrap.json");
    let mut enum_outputs = Vec::new();
    for copy in ["a", "b"] {
        let dir = root.join(format!("enumerate-{copy}"));
        let args = [
            "enumerate",
            "--members",
            "0-5,0-5,19-35,19-35",
            "--collapse",
            "--bootstrap",
            boot.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ];
        if let Err(e) = run(&args) {
            failures.push(e);
        }
        enum_outputs.push(artifacts(&dir));
    }
    compared += 1;
    if enum_outputs[0] != enum_outputs[1] {
        failures.push("enumerate outputs differ".into());
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{compared} output sets byte-identical across repeated runs and reruns")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("likelihood matches brute-force enumeration", criterion_1),
        (
            "likelihood sums to one over all contact vectors",
            criterion_2,
        ),
        ("young-family network probabilities", criterion_3),
        ("teen/adult complete network probability", criterion_4),
        ("equal-edge network pair at 0.15 and exactly 0", criterion_5),
        (
            "network distribution marginalizes to the likelihood",
            criterion_6,
        ),
        ("chi-square tail probabilities", criterion_7),
        ("parameter recovery on the survey-like design", criterion_8),
        ("two-parameter identifiability grid", criterion_9),
        ("seeded runs are byte-identical", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<52} {}  ({})",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
