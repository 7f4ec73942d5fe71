use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Largest combined sample size for which the exact distribution is enumerated.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMode {
    NormalApprox,
    Exact,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMethod {
    NormalApprox,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub u1: f64,
    pub u2: f64,
    pub z: f64,
    pub p_two_sided: f64,
    pub method: StatMethod,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MannWhitneyError {
    #[error("sample {0} is empty")]
    EmptySample(char),
    #[error("exact test needs at most {EXACT_LIMIT} observations, got {0}")]
    ExactTooLarge(usize),
    #[error("sample contains a NaN")]
    NotANumber,
}

/// Midranks (1-based) of the pooled sample.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn tie_term(ranks: &[f64]) -> f64 {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum()
}

/// Two-sided exact p: the share of all C(N, n1) rank assignments whose U lies
/// at least as far from n1*n2/2 as the observed one. Ranks are doubled so
/// midranks stay integral.
fn exact_p(ranks: &[f64], n1: usize, u1: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: number of k-subsets with doubled rank sum s.
    let mut ways = vec![vec![0u64; max_sum + 1]; n1 + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for k in (1..=n1).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let n1f = n1 as f64;
    let n2f = (ranks.len() - n1) as f64;
    let mean = n1f * n2f / 2.0;
    let observed = (u1 - mean).abs();
    let (mut hit, mut total) = (0u64, 0u64);
    for (s, &count) in ways[n1].iter().enumerate() {
        if count == 0 {
            continue;
        }
        let u = s as f64 / 2.0 - n1f * (n1f + 1.0) / 2.0;
        total += count;
        if (u - mean).abs() >= observed - 1e-9 {
            hit += count;
        }
    }
    hit as f64 / total as f64
}

/// Mann-Whitney U test for two independent samples.
///
/// The normal approximation uses the tie-corrected variance and a 0.5
/// continuity correction. `Auto` enumerates exactly when the pooled size is
/// at most [`EXACT_LIMIT`].
pub fn mann_whitney(a: &[f64], b: &[f64], mode: StatMode) -> Result<StatTestResult, MannWhitneyError> {
    if a.is_empty() {
        return Err(MannWhitneyError::EmptySample('a'));
    }
    if b.is_empty() {
        return Err(MannWhitneyError::EmptySample('b'));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(MannWhitneyError::NotANumber);
    }
    let (n1, n2) = (a.len(), b.len());
    let total = n1 + n2;
    let method = match mode {
        StatMode::Exact if total > EXACT_LIMIT => return Err(MannWhitneyError::ExactTooLarge(total)),
        StatMode::Exact => StatMethod::Exact,
        StatMode::NormalApprox => StatMethod::NormalApprox,
        StatMode::Auto if total <= EXACT_LIMIT => StatMethod::Exact,
        StatMode::Auto => StatMethod::NormalApprox,
    };

    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, total as f64);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - n1f * (n1f + 1.0) / 2.0;
    let u2 = n1f * n2f - u1;

    let mean = n1f * n2f / 2.0;
    let ties = if total > 1 { tie_term(&ranks) / (nf * (nf - 1.0)) } else { 0.0 };
    let variance = n1f * n2f / 12.0 * ((nf + 1.0) - ties);
    let z = if variance > 0.0 {
        let diff = u1 - mean;
        diff.signum() * (diff.abs() - 0.5).max(0.0) / variance.sqrt()
    } else {
        0.0
    };
    let p = match method {
        StatMethod::NormalApprox => erfc(z.abs() / std::f64::consts::SQRT_2),
        StatMethod::Exact => exact_p(&ranks, n1, u1),
    };
    Ok(StatTestResult { u1, u2, z, p_two_sided: p.clamp(f64::MIN_POSITIVE, 1.0), method })
}
