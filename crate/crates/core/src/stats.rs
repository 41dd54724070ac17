//! Kruskal-Wallis significance test and Vargha-Delaney effect size for
//! comparing repeated runs of two engine arms.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
pub const SMALL_EFFECT: f64 = 0.56;
pub const MEDIUM_EFFECT: f64 = 0.64;
pub const LARGE_EFFECT: f64 = 0.71;

/// Upper bound on label assignments enumerated by the exact test.
const EXACT_LIMIT: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectSize {
    None,
    Small,
    Medium,
    Large,
}

impl EffectSize {
    /// Two-sided labelling: values below 0.5 use the mirrored thresholds.
    pub fn from_a12(a12: f64) -> Self {
        let dev = |t: f64| a12 > t || a12 < 1.0 - t;
        if dev(LARGE_EFFECT) {
            EffectSize::Large
        } else if dev(MEDIUM_EFFECT) {
            EffectSize::Medium
        } else if dev(SMALL_EFFECT) {
            EffectSize::Small
        } else {
            EffectSize::None
        }
    }
}

impl fmt::Display for EffectSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectSize::None => "none",
            EffectSize::Small => "small",
            EffectSize::Medium => "medium",
            EffectSize::Large => "large",
        })
    }
}

/// Probability that a draw from `g1` exceeds a draw from `g2`, ties counting
/// one half.
pub fn vargha_delaney_a12(g1: &SampleGroup, g2: &SampleGroup) -> Result<f64> {
    if g1.values.is_empty() || g2.values.is_empty() {
        return Err(Error::Usage("A12 needs two non-empty groups".into()));
    }
    let mut wins = 0.0;
    for x in &g1.values {
        for y in &g2.values {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (g1.values.len() * g2.values.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    #[default]
    ChiSquare,
    /// Enumerates every assignment of the pooled observations to groups.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KruskalWallis {
    pub h: f64,
    pub p_value: f64,
}

/// Midranks (1-based) of `values`, plus the tie-correction sum of `t^3 - t`.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

fn h_statistic(ranks: &[f64], sizes: &[usize], tie_sum: f64) -> f64 {
    let n = ranks.len() as f64;
    let correction = 1.0 - tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        return 0.0;
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for &size in sizes {
        let r: f64 = ranks[offset..offset + size].iter().sum();
        sum += r * r / size as f64;
        offset += size;
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    (h / correction).max(0.0)
}

pub fn kruskal_wallis(groups: &[SampleGroup], method: PValueMethod) -> Result<KruskalWallis> {
    if groups.len() < 2 {
        return Err(Error::Usage(
            "Kruskal-Wallis needs at least two groups".into(),
        ));
    }
    if groups.iter().any(|g| g.values.is_empty()) {
        return Err(Error::Usage(
            "Kruskal-Wallis groups must be non-empty".into(),
        ));
    }
    let pooled: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.values.iter().copied())
        .collect();
    let sizes: Vec<usize> = groups.iter().map(|g| g.values.len()).collect();
    let (ranks, tie_sum) = midranks(&pooled);
    let n = pooled.len() as f64;
    if tie_sum >= n * n * n - n {
        return Ok(KruskalWallis {
            h: 0.0,
            p_value: 1.0,
        });
    }
    let h = h_statistic(&ranks, &sizes, tie_sum);
    let p_value = match method {
        PValueMethod::ChiSquare => {
            let dist = ChiSquared::new((groups.len() - 1) as f64)
                .expect("degrees of freedom are positive");
            dist.sf(h)
        }
        PValueMethod::Exact => exact_p_value(&ranks, &sizes, tie_sum, h)?,
    };
    Ok(KruskalWallis { h, p_value })
}

fn exact_p_value(ranks: &[f64], sizes: &[usize], tie_sum: f64, observed: f64) -> Result<f64> {
    // Number of distinct assignments is the multinomial coefficient.
    let mut count: u64 = 1;
    let mut placed = 0u64;
    for &s in sizes {
        for i in 1..=s as u64 {
            placed += 1;
            count = count.saturating_mul(placed) / i;
            if count > EXACT_LIMIT {
                return Err(Error::Usage(format!(
                    "exact Kruskal-Wallis limited to {EXACT_LIMIT} assignments"
                )));
            }
        }
    }
    let mut labels = vec![0usize; ranks.len()];
    let mut remaining = sizes.to_vec();
    let mut hits = 0u64;
    let mut total = 0u64;
    enumerate_assignments(0, &mut labels, &mut remaining, &mut |labels| {
        let mut arranged = Vec::with_capacity(ranks.len());
        for g in 0..sizes.len() {
            arranged.extend(
                labels
                    .iter()
                    .zip(ranks)
                    .filter(|(&l, _)| l == g)
                    .map(|(_, &r)| r),
            );
        }
        total += 1;
        if h_statistic(&arranged, sizes, tie_sum) >= observed - 1e-9 {
            hits += 1;
        }
    });
    Ok(hits as f64 / total as f64)
}

fn enumerate_assignments(
    pos: usize,
    labels: &mut Vec<usize>,
    remaining: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if pos == labels.len() {
        visit(labels);
        return;
    }
    for g in 0..remaining.len() {
        if remaining[g] > 0 {
            remaining[g] -= 1;
            labels[pos] = g;
            enumerate_assignments(pos + 1, labels, remaining, visit);
            remaining[g] += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub metric: String,
    pub a12: f64,
    pub effect: EffectSize,
    pub kw_h: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Compares `treatment` against `control` on one metric. `a12` is the
/// probability that the treatment yields the larger value.
pub fn compare(
    metric: &str,
    treatment: &SampleGroup,
    control: &SampleGroup,
    method: PValueMethod,
) -> Result<ComparisonResult> {
    let a12 = vargha_delaney_a12(treatment, control)?;
    let kw = kruskal_wallis(&[treatment.clone(), control.clone()], method)?;
    Ok(ComparisonResult {
        metric: metric.to_string(),
        a12,
        effect: EffectSize::from_a12(a12),
        kw_h: kw.h,
        p_value: kw.p_value,
        significant: kw.p_value < SIGNIFICANCE_LEVEL,
    })
}
