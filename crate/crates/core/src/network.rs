//! Exact distributions over complete household networks.
//!
//! A network is the at-home status of every member together with the contact
//! graph among those at home. Under the fitted model each member is home
//! independently and each pair of home members is in contact independently,
//! so every network has a closed-form probability and small households can be
//! enumerated exhaustively.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{AgeBins, AgeCategory, ParameterVector};
use crate::error::{Error, Result};
use crate::estimation::{percentile_interval, BootstrapResult, Interval};

/// Largest household whose networks fit the 64-bit state encoding.
pub const MAX_MEMBERS: usize = 10;
/// Default cap on the number of states visited by one enumeration.
pub const DEFAULT_STATE_BUDGET: u128 = 1 << 26;
pub const DEFAULT_MIN_PROB: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub members: Vec<AgeCategory>,
    pub home: Vec<bool>,
    pub adj: Vec<Vec<bool>>,
}

impl NetworkState {
    /// Everyone home and every pair in contact.
    pub fn complete(members: Vec<AgeCategory>) -> Self {
        let k = members.len();
        let adj = (0..k).map(|i| (0..k).map(|j| i != j).collect()).collect();
        NetworkState {
            members,
            home: vec![true; k],
            adj,
        }
    }

    /// Builds a state from a home vector and an undirected edge list.
    pub fn from_edges(
        members: Vec<AgeCategory>,
        home: Vec<bool>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let k = members.len();
        let mut adj = vec![vec![false; k]; k];
        for &(i, j) in edges {
            if i >= k || j >= k || i == j {
                return Err(Error::input(format!("invalid edge ({i}, {j})")));
            }
            adj[i][j] = true;
            adj[j][i] = true;
        }
        let state = NetworkState { members, home, adj };
        state.validate()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.members.len();
        if self.home.len() != k || self.adj.len() != k || self.adj.iter().any(|r| r.len() != k) {
            return Err(Error::input("network state has inconsistent dimensions"));
        }
        for i in 0..k {
            if self.adj[i][i] {
                return Err(Error::input(format!(
                    "member {i} is in contact with itself"
                )));
            }
            for j in 0..k {
                if self.adj[i][j] != self.adj[j][i] {
                    return Err(Error::input("adjacency matrix is not symmetric"));
                }
                if self.adj[i][j] && !(self.home[i] && self.home[j]) {
                    return Err(Error::input(format!(
                        "contact between members {i} and {j} but one of them is away"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let k = self.len();
        let mut out = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if self.adj[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Number of contacts per unordered pair of age categories.
    pub fn edge_counts(&self) -> BTreeMap<(AgeCategory, AgeCategory), usize> {
        let mut counts = BTreeMap::new();
        for (i, j) in self.edges() {
            let (a, b) = (self.members[i], self.members[j]);
            *counts.entry((a.min(b), a.max(b))).or_default() += 1;
        }
        counts
    }
}

/// Packs the home vector followed by the upper-triangle adjacency, first
/// element most significant, so integer order is lexicographic order.
fn encode(home: &[bool], adj: &[Vec<bool>]) -> u64 {
    let k = home.len();
    let mut key = 0u64;
    for &h in home {
        key = (key << 1) | u64::from(h);
    }
    for i in 0..k {
        for j in i + 1..k {
            key = (key << 1) | u64::from(adj[i][j]);
        }
    }
    key
}

fn decode(members: &[AgeCategory], key: u64) -> NetworkState {
    let k = members.len();
    let pairs = k * (k.saturating_sub(1)) / 2;
    let bit = |pos: usize| (key >> (k + pairs - 1 - pos)) & 1 == 1;
    let home = (0..k).map(bit).collect();
    let mut adj = vec![vec![false; k]; k];
    let mut pos = k;
    for i in 0..k {
        for j in i + 1..k {
            adj[i][j] = bit(pos);
            adj[j][i] = adj[i][j];
            pos += 1;
        }
    }
    NetworkState {
        members: members.to_vec(),
        home,
        adj,
    }
}

fn check_members(members: &[AgeCategory], theta: &ParameterVector) -> Result<()> {
    if members.is_empty() {
        return Err(Error::input("household has no members"));
    }
    if let Some(m) = members.iter().find(|m| m.0 >= theta.k()) {
        return Err(Error::input(format!(
            "age category {} outside the {} categories of the parameters",
            m.number(),
            theta.k()
        )));
    }
    Ok(())
}

/// Probability of one complete network.
pub fn network_probability(state: &NetworkState, theta: &ParameterVector) -> Result<f64> {
    state.validate()?;
    check_members(&state.members, theta)?;
    theta.validate()?;
    let k = state.len();
    let mut p = 1.0;
    for i in 0..k {
        let h = theta.home(state.members[i]);
        p *= if state.home[i] { h } else { 1.0 - h };
    }
    for i in 0..k {
        for j in i + 1..k {
            if state.home[i] && state.home[j] {
                let c = theta.contact(state.members[i], state.members[j]);
                p *= if state.adj[i][j] { c } else { 1.0 - c };
            }
        }
    }
    Ok(p)
}

/// Σ_m C(k, m) 2^{m(m-1)/2}: networks on `k` labeled members.
pub fn state_count(k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut choose: u128 = 1;
    for m in 0..=k {
        let edges = m * m.saturating_sub(1) / 2;
        let term = if edges >= 128 {
            None
        } else {
            choose.checked_mul(1u128 << edges)
        };
        match term.and_then(|t| total.checked_add(t)) {
            Some(t) => total = t,
            None => return u128::MAX,
        }
        choose = choose * (k - m) as u128 / (m + 1) as u128;
    }
    total
}

/// Every permutation of member positions that only swaps members of equal age.
fn age_preserving_permutations(members: &[AgeCategory]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<AgeCategory, Vec<usize>> = BTreeMap::new();
    for (i, &m) in members.iter().enumerate() {
        groups.entry(m).or_default().push(i);
    }
    let mut perms = vec![(0..members.len()).collect::<Vec<_>>()];
    for positions in groups.values() {
        let mut orders = Vec::new();
        permute(&mut positions.clone(), 0, &mut orders);
        let mut next = Vec::with_capacity(perms.len() * orders.len());
        for base in &perms {
            for order in &orders {
                let mut p = base.clone();
                for (from, &to) in positions.iter().zip(order) {
                    p[*from] = to;
                }
                next.push(p);
            }
        }
        perms = next;
    }
    perms
}

fn permute(items: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == items.len() {
        out.push(items.clone());
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, out);
        items.swap(start, i);
    }
}

fn canonical_key(home: &[bool], adj: &[Vec<bool>], perms: &[Vec<usize>]) -> u64 {
    let k = home.len();
    let mut best = u64::MAX;
    let mut ph = vec![false; k];
    let mut pa = vec![vec![false; k]; k];
    for perm in perms {
        for i in 0..k {
            ph[perm[i]] = home[i];
            for j in 0..k {
                pa[perm[i]][perm[j]] = adj[i][j];
            }
        }
        best = best.min(encode(&ph, &pa));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Labeled,
    Collapsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    /// The state itself, or the canonical representative of its class.
    pub state: NetworkState,
    pub probability: f64,
    /// Number of labeled states merged into this entry.
    pub class_size: usize,
    pub interval: Option<Interval>,
    #[serde(skip)]
    key: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Remainder {
    pub probability: f64,
    /// Entries merged here (classes when collapsed).
    pub entries: usize,
    /// Labeled states behind those entries.
    pub states: usize,
    pub interval: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDistribution {
    pub members: Vec<AgeCategory>,
    pub mode: Mode,
    pub min_prob: f64,
    /// Entries at or above `min_prob`, most probable first.
    pub entries: Vec<NetworkEntry>,
    /// Everything below `min_prob`, merged.
    pub remainder: Option<Remainder>,
}

impl NetworkDistribution {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum::<f64>()
            + self.remainder.as_ref().map_or(0.0, |r| r.probability)
    }
}

#[derive(Debug, Clone)]
pub struct EnumerateOptions {
    pub collapse: bool,
    pub min_prob: f64,
    pub budget: u128,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            collapse: false,
            min_prob: DEFAULT_MIN_PROB,
            budget: DEFAULT_STATE_BUDGET,
        }
    }
}

/// Probability of every labeled state, or of every class when collapsing,
/// keyed by (canonical) encoding. Also returns class sizes.
fn full_table(
    members: &[AgeCategory],
    theta: &ParameterVector,
    perms: Option<&[Vec<usize>]>,
) -> BTreeMap<u64, (f64, usize)> {
    let k = members.len();
    let per_home: Vec<Vec<(u64, f64)>> = (0u32..(1u32 << k))
        .into_par_iter()
        .map(|mask| {
            let home: Vec<bool> = (0..k).map(|i| (mask >> (k - 1 - i)) & 1 == 1).collect();
            let mut base = 1.0;
            for i in 0..k {
                let h = theta.home(members[i]);
                base *= if home[i] { h } else { 1.0 - h };
            }
            let pairs: Vec<(usize, usize)> = (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .filter(|&(i, j)| home[i] && home[j])
                .collect();
            let probs: Vec<f64> = pairs
                .iter()
                .map(|&(i, j)| theta.contact(members[i], members[j]))
                .collect();
            let mut out = Vec::with_capacity(1 << pairs.len());
            let mut adj = vec![vec![false; k]; k];
            for edges in 0u64..(1u64 << pairs.len()) {
                let mut p = base;
                for (b, &(i, j)) in pairs.iter().enumerate() {
                    let on = (edges >> b) & 1 == 1;
                    adj[i][j] = on;
                    adj[j][i] = on;
                    p *= if on { probs[b] } else { 1.0 - probs[b] };
                }
                let key = match perms {
                    Some(perms) => canonical_key(&home, &adj, perms),
                    None => encode(&home, &adj),
                };
                out.push((key, p));
            }
            out
        })
        .collect();

    let mut table: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for (key, p) in per_home.into_iter().flatten() {
        let e = table.entry(key).or_insert((0.0, 0));
        e.0 += p;
        e.1 += 1;
    }
    table
}

fn prepare(
    members: &[AgeCategory],
    theta: &ParameterVector,
    options: &EnumerateOptions,
) -> Result<Option<Vec<Vec<usize>>>> {
    check_members(members, theta)?;
    theta.validate()?;
    if !(0.0..=1.0).contains(&options.min_prob) {
        return Err(Error::input("min_prob must lie in [0, 1]"));
    }
    let states = state_count(members.len());
    let perms = options.collapse.then(|| {
        if states > options.budget {
            Vec::new()
        } else {
            age_preserving_permutations(members)
        }
    });
    let work = states.saturating_mul(perms.as_ref().map_or(1, |p| p.len().max(1) as u128));
    if members.len() > MAX_MEMBERS || work > options.budget {
        return Err(Error::TooManyStates {
            states: work,
            budget: options.budget,
        });
    }
    Ok(perms)
}

fn split_entries(
    members: &[AgeCategory],
    table: BTreeMap<u64, (f64, usize)>,
    options: &EnumerateOptions,
) -> NetworkDistribution {
    let mut all: Vec<NetworkEntry> = table
        .into_iter()
        .map(|(key, (probability, class_size))| NetworkEntry {
            state: decode(members, key),
            probability,
            class_size,
            interval: None,
            key,
        })
        .collect();
    // descending probability; ties keep encoding order
    all.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.key.cmp(&b.key))
    });
    let cut = all.partition_point(|e| e.probability >= options.min_prob);
    let rest = all.split_off(cut);
    let remainder = (!rest.is_empty()).then(|| Remainder {
        probability: rest.iter().map(|e| e.probability).sum(),
        entries: rest.len(),
        states: rest.iter().map(|e| e.class_size).sum(),
        interval: None,
    });
    NetworkDistribution {
        members: members.to_vec(),
        mode: if options.collapse {
            Mode::Collapsed
        } else {
            Mode::Labeled
        },
        min_prob: options.min_prob,
        entries: all,
        remainder,
    }
}

/// Exhaustive distribution over the networks of a household.
pub fn enumerate_distribution(
    members: &[AgeCategory],
    theta: &ParameterVector,
    options: &EnumerateOptions,
) -> Result<NetworkDistribution> {
    let perms = prepare(members, theta, options)?;
    let table = full_table(members, theta, perms.as_deref());
    Ok(split_entries(members, table, options))
}

/// Point distribution at the bootstrap's estimate, with percentile intervals
/// from recomputing every entry under each replicate.
pub fn distribution_intervals(
    members: &[AgeCategory],
    bootstrap: &BootstrapResult,
    options: &EnumerateOptions,
) -> Result<NetworkDistribution> {
    if bootstrap.replicates.is_empty() {
        return Err(Error::input("bootstrap has no replicates"));
    }
    let perms = prepare(members, &bootstrap.estimate, options)?;
    let mut dist = split_entries(
        members,
        full_table(members, &bootstrap.estimate, perms.as_deref()),
        options,
    );
    let tables: Vec<BTreeMap<u64, (f64, usize)>> = bootstrap
        .replicates
        .par_iter()
        .map(|theta| full_table(members, theta, perms.as_deref()))
        .collect();
    for entry in &mut dist.entries {
        let values: Vec<f64> = tables.iter().map(|t| t[&entry.key].0).collect();
        entry.interval = Some(percentile_interval(&values, bootstrap.level));
    }
    if let Some(rem) = &mut dist.remainder {
        let values: Vec<f64> = tables
            .iter()
            .map(|t| {
                let kept: f64 = dist.entries.iter().map(|e| t[&e.key].0).sum();
                (t.values().map(|v| v.0).sum::<f64>() - kept).max(0.0)
            })
            .collect();
        rem.interval = Some(percentile_interval(&values, bootstrap.level));
    }
    Ok(dist)
}

/// Node order for display: oldest category first, then member index.
pub fn display_order(members: &[AgeCategory]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| members[b].cmp(&members[a]).then(a.cmp(&b)));
    order
}

/// Adjacency-list text: one line per member, neighbours in display order.
pub fn adjacency_text(state: &NetworkState, bins: &AgeBins) -> String {
    let order = display_order(&state.members);
    let mut out = String::new();
    for &i in &order {
        let neighbours: Vec<String> = order
            .iter()
            .filter(|&&j| state.adj[i][j])
            .map(|j| j.to_string())
            .collect();
        let _ = writeln!(
            out,
            "{i} {} {}: {}",
            bins.label(state.members[i]),
            if state.home[i] { "home" } else { "away" },
            neighbours.join(" ")
        );
    }
    out
}

/// Graphviz description of one network; away members are drawn dashed.
pub fn to_dot(state: &NetworkState, bins: &AgeBins, name: &str, probability: f64) -> String {
    let order = display_order(&state.members);
    let mut out = format!("graph {name} {{\n  label=\"p = {probability:.4}\";\n");
    for &i in &order {
        let style = if state.home[i] { "solid" } else { "dashed" };
        let _ = writeln!(
            out,
            "  n{i} [label=\"{}\", style={style}];",
            bins.label(state.members[i])
        );
    }
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if state.adj[i][j] {
                let _ = writeln!(out, "  n{i} -- n{j};");
            }
        }
    }
    out.push_str("}\n");
    out
}

/// One DOT file body per entry, concatenated.
pub fn distribution_dot(dist: &NetworkDistribution, bins: &AgeBins) -> String {
    dist.entries
        .iter()
        .enumerate()
        .map(|(rank, e)| {
            to_dot(
                &e.state,
                bins,
                &format!("network_{}", rank + 1),
                e.probability,
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn distribution_csv(dist: &NetworkDistribution) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record([
        "rank",
        "probability",
        "lo",
        "hi",
        "class_size",
        "home",
        "edges",
    ])
    .map_err(csv_err)?;
    let fmt_iv = |iv: Option<Interval>| match iv {
        Some(iv) => (iv.lo.to_string(), iv.hi.to_string()),
        None => (String::new(), String::new()),
    };
    for (rank, e) in dist.entries.iter().enumerate() {
        let (lo, hi) = fmt_iv(e.interval);
        let home: String = e
            .state
            .home
            .iter()
            .map(|&h| if h { '1' } else { '0' })
            .collect();
        let edges: Vec<String> = e
            .state
            .edges()
            .iter()
            .map(|(i, j)| format!("{i}-{j}"))
            .collect();
        w.write_record([
            (rank + 1).to_string(),
            e.probability.to_string(),
            lo,
            hi,
            e.class_size.to_string(),
            home,
            edges.join(";"),
        ])
        .map_err(csv_err)?;
    }
    if let Some(r) = &dist.remainder {
        let (lo, hi) = fmt_iv(r.interval);
        w.write_record([
            "remainder".to_string(),
            r.probability.to_string(),
            lo,
            hi,
            r.states.to_string(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}
