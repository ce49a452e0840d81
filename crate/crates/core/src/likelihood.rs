//! Latent at-home likelihood of egocentric household observations.
//!
//! A respondent in category `j` is home with probability `p_j`; each of the
//! `n_s` other members of category `s` is home with probability `p_s` and,
//! when both are home, in contact with probability `p_js`. Only the counts
//! `w_s` of matched contacts are observed.
//!
//! Three routes compute the same quantity:
//! * [`respondent_loglik`]: per-member closed form, `O(K)`.
//! * [`nested_sum_loglik`]: the nested sum over latent at-home counts.
//! * [`brute_force_loglik`]: literal enumeration of `(R, H)` on the probability scale.

use rayon::prelude::*;
use statrs::function::factorial::ln_binomial;

use crate::data_model::{AgeCategory, ParameterVector, RespondentRecord};
use crate::error::{Error, Result};

/// Largest household (respondent included) the enumeration oracles accept.
pub const MAX_ORACLE_HOUSEHOLD: u32 = 12;

/// `ln(exp(a) + exp(b))` with `-inf` treated as an exact zero.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Stable `ln(sum(exp(x)))`; `-inf` for an empty slice or all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `count * ln(p)` with `0 * ln(0) = 0`.
fn xlogy(count: u32, p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        f64::from(count) * p.ln()
    }
}

fn check_inputs(rec: &RespondentRecord, theta: &ParameterVector) -> Result<()> {
    rec.validate()?;
    theta.validate()?;
    if rec.k() != theta.k() {
        return Err(Error::input(format!(
            "record {} has {} categories, parameters have {}",
            rec.id,
            rec.k(),
            theta.k()
        )));
    }
    Ok(())
}

/// Log-probability of the observed contact counts for one respondent.
pub fn respondent_loglik(rec: &RespondentRecord, theta: &ParameterVector) -> Result<f64> {
    check_inputs(rec, theta)?;
    Ok(closed_form(
        rec.respondent,
        rec.household.counts(),
        rec.contacts.counts(),
        theta,
    ))
}

/// Closed form without validation; callers guarantee consistent shapes.
pub(crate) fn closed_form(j: AgeCategory, n: &[u32], w: &[u32], theta: &ParameterVector) -> f64 {
    kernel(j, n, w, theta) + ln_multiplicity(n, w)
}

/// `sum_s ln C(n_s, w_s)`: the part of the log-likelihood free of parameters.
/// It is zero whenever `w = 0`, so it separates from the respondent-away branch.
pub(crate) fn ln_multiplicity(n: &[u32], w: &[u32]) -> f64 {
    n.iter()
        .zip(w)
        .filter(|(_, &w_s)| w_s > 0)
        .map(|(&n_s, &w_s)| ln_binomial(u64::from(n_s), u64::from(w_s)))
        .sum()
}

/// Log-likelihood up to [`ln_multiplicity`].
pub(crate) fn kernel(j: AgeCategory, n: &[u32], w: &[u32], theta: &ParameterVector) -> f64 {
    let p_j = theta.home(j);
    let mut at_home = p_j.ln();
    for (s, (&n_s, &w_s)) in n.iter().zip(w).enumerate() {
        if n_s == 0 {
            continue;
        }
        let cat = AgeCategory(s);
        let p_s = theta.home(cat);
        let c = theta.contact(j, cat);
        // member reachable: home and contacted
        let reach = p_s * c;
        // written as a sum of nonnegative terms so it stays accurate near 1
        let miss = (1.0 - p_s) + p_s * (1.0 - c);
        at_home += xlogy(w_s, reach) + xlogy(n_s - w_s, miss);
    }
    if w.iter().all(|&x| x == 0) {
        ln_add_exp((1.0 - p_j).ln(), at_home)
    } else {
        at_home
    }
}

/// Odometer over the integer box `lo[s]..=hi[s]`.
fn for_each_in_box(lo: &[u32], hi: &[u32], mut f: impl FnMut(&[u32])) {
    if lo.iter().zip(hi).any(|(l, h)| l > h) {
        return;
    }
    let mut cur = lo.to_vec();
    loop {
        f(&cur);
        let mut s = 0;
        loop {
            if s == cur.len() {
                return;
            }
            if cur[s] < hi[s] {
                cur[s] += 1;
                break;
            }
            cur[s] = lo[s];
            s += 1;
        }
    }
}

/// The nested sum over latent at-home counts `h_s in w_s..=n_s`, evaluated in
/// log space with log-gamma binomial coefficients.
pub fn nested_sum_loglik(rec: &RespondentRecord, theta: &ParameterVector) -> Result<f64> {
    check_inputs(rec, theta)?;
    if rec.household.household_size() > MAX_ORACLE_HOUSEHOLD {
        return Err(Error::input(format!(
            "household of size {} exceeds oracle limit {MAX_ORACLE_HOUSEHOLD}",
            rec.household.household_size()
        )));
    }
    let j = rec.respondent;
    let n = rec.household.counts();
    let w = rec.contacts.counts();
    let mut terms = Vec::new();
    for_each_in_box(w, n, |h| {
        let mut t = 0.0;
        for s in 0..n.len() {
            let cat = AgeCategory(s);
            let p_s = theta.home(cat);
            let c = theta.contact(j, cat);
            let (n_s, w_s, h_s) = (n[s], w[s], h[s]);
            t += ln_binomial(u64::from(h_s), u64::from(w_s))
                + xlogy(w_s, c)
                + xlogy(h_s - w_s, 1.0 - c)
                + ln_binomial(u64::from(n_s), u64::from(h_s))
                + xlogy(h_s, p_s)
                + xlogy(n_s - h_s, 1.0 - p_s);
        }
        terms.push(t);
    });
    let p_j = theta.home(j);
    let at_home = if p_j == 0.0 {
        f64::NEG_INFINITY
    } else {
        p_j.ln() + log_sum_exp(&terms)
    };
    Ok(if rec.contacts.is_zero() {
        ln_add_exp((1.0 - p_j).ln(), at_home)
    } else {
        at_home
    })
}

fn binomial_u64(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * u64::from(n - i) / u64::from(i + 1))
}

fn binomial_pmf(k: u32, n: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    binomial_u64(n, k) as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Sums `P(W = w | R, H) P(H) P(R)` over every respondent status and every
/// vector of at-home counts, on the probability scale.
pub fn brute_force_loglik(rec: &RespondentRecord, theta: &ParameterVector) -> Result<f64> {
    check_inputs(rec, theta)?;
    if rec.household.household_size() > MAX_ORACLE_HOUSEHOLD {
        return Err(Error::input(format!(
            "household of size {} exceeds oracle limit {MAX_ORACLE_HOUSEHOLD}",
            rec.household.household_size()
        )));
    }
    let j = rec.respondent;
    let n = rec.household.counts();
    let w = rec.contacts.counts();
    let zeros = vec![0u32; n.len()];
    let p_j = theta.home(j);
    let mut total = 0.0;
    for respondent_home in [false, true] {
        let p_r = if respondent_home { p_j } else { 1.0 - p_j };
        for_each_in_box(&zeros, n, |h| {
            let p_h: f64 = (0..n.len())
                .map(|s| binomial_pmf(h[s], n[s], theta.home(AgeCategory(s))))
                .product();
            let p_w = if respondent_home {
                (0..n.len())
                    .map(|s| binomial_pmf(w[s], h[s], theta.contact(j, AgeCategory(s))))
                    .product()
            } else if w.iter().all(|&x| x == 0) {
                1.0
            } else {
                0.0
            };
            total += p_r * p_h * p_w;
        });
    }
    Ok(total.ln())
}

/// Sum of respondent log-likelihoods; `-inf` if any record is impossible.
///
/// Records are evaluated in parallel and summed in input order.
pub fn dataset_loglik(data: &[RespondentRecord], theta: &ParameterVector) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    let parts = data
        .par_iter()
        .map(|rec| respondent_loglik(rec, theta))
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.into_iter().sum())
}
