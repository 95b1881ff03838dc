//! Monte Carlo lenses for limit statements: ucp distances, tightness,
//! moments, and the verdict rule that turns an ε-series into pass/fail.
//!
//! Confidence intervals:
//! * exceedance probabilities use the 95% Wilson score interval;
//! * means and moments use the CLT interval `1.96 * sd / sqrt(N)`;
//! * medians use the order-statistic interval of [`crate::sum::median_interval`].
//!
//! A series indexed by decreasing ε is "decreasing up to CI overlap" when
//! every step satisfies `lo[j+1] <= hi[j]`, i.e. no later value is
//! significantly above an earlier one.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::sum;

pub const Z95: f64 = 1.959963984540054;

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Empirical ucp distance of an ensemble from its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcpEstimate {
    pub delta: f64,
    /// Per-path `sup_t |F(t) - target(t)|`, sorted ascending.
    pub sup_samples: Vec<f64>,
    pub empirical_prob: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_halfwidth: f64,
    pub n: usize,
}

impl UcpEstimate {
    pub fn from_sup_samples(mut sups: Vec<f64>, delta: f64) -> Result<Self> {
        if sups.is_empty() {
            return Err(contract("ucp estimate needs a nonempty ensemble"));
        }
        if !(delta > 0.0) {
            return Err(Error::Config(format!("delta must be > 0, got {delta}")));
        }
        if let Some(bad) = sups.iter().find(|v| !(**v >= 0.0) || v.is_infinite()) {
            return Err(Error::Data(format!("sup deviation {bad} is not a finite non-negative number")));
        }
        sups.sort_by(f64::total_cmp);
        let n = sups.len();
        let k = sups.len() - sups.partition_point(|&v| v <= delta);
        let (lo, hi) = wilson_interval(k, n);
        Ok(UcpEstimate {
            delta,
            sup_samples: sups,
            empirical_prob: k as f64 / n as f64,
            ci_low: lo,
            ci_high: hi,
            ci_halfwidth: 0.5 * (hi - lo),
            n,
        })
    }

    /// Same samples at another threshold.
    pub fn at_delta(&self, delta: f64) -> Result<Self> {
        UcpEstimate::from_sup_samples(self.sup_samples.clone(), delta)
    }

    pub fn median_sup(&self) -> f64 {
        sum::median(&self.sup_samples)
    }

    pub fn record(&self, epsilon: f64) -> UcpRecord {
        UcpRecord {
            epsilon,
            delta: self.delta,
            prob: self.empirical_prob,
            ci: [self.ci_low, self.ci_high],
            n: self.n,
        }
    }
}

fn sup_deviation(curve: &[f64], target: &[f64]) -> Result<f64> {
    if curve.len() != target.len() {
        return Err(contract(format!(
            "functional has {} nodes, target has {}",
            curve.len(),
            target.len()
        )));
    }
    Ok(curve
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Per-path sup over grid nodes of `|curve - target|` against a shared
/// target.
pub fn estimate_ucp_distance(ensemble: &[Vec<f64>], target: &[f64], delta: f64) -> Result<UcpEstimate> {
    if ensemble.is_empty() {
        return Err(contract("ucp estimate needs a nonempty ensemble"));
    }
    let sups = ensemble
        .iter()
        .map(|c| sup_deviation(c, target))
        .collect::<Result<Vec<_>>>()?;
    UcpEstimate::from_sup_samples(sups, delta)
}

/// As [`estimate_ucp_distance`] with one target per path.
pub fn estimate_ucp_distance_paired(
    ensemble: &[Vec<f64>],
    targets: &[Vec<f64>],
    delta: f64,
) -> Result<UcpEstimate> {
    if ensemble.is_empty() {
        return Err(contract("ucp estimate needs a nonempty ensemble"));
    }
    if ensemble.len() != targets.len() {
        return Err(contract("ensemble and targets differ in size"));
    }
    let sups = ensemble
        .iter()
        .zip(targets)
        .map(|(c, t)| sup_deviation(c, t))
        .collect::<Result<Vec<_>>>()?;
    UcpEstimate::from_sup_samples(sups, delta)
}

/// Exceedance probabilities `P(|X_ε| > M)` over a grid of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub epsilons: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// `exceedance_probs[i][j]` for `epsilons[i]` and `thresholds[j]`.
    pub exceedance_probs: Vec<Vec<f64>>,
    pub n: Vec<usize>,
}

impl TightnessReport {
    /// Smallest threshold whose worst exceedance over ε is below `eta`.
    pub fn tight_level(&self, eta: f64) -> Option<f64> {
        (0..self.thresholds.len())
            .find(|&j| self.exceedance_probs.iter().all(|row| row[j] < eta))
            .map(|j| self.thresholds[j])
    }

    pub fn is_tight(&self, eta: f64) -> bool {
        self.tight_level(eta).is_some()
    }
}

pub fn boundedness_in_probability(samples_by_eps: &[(f64, Vec<f64>)], thresholds: &[f64]) -> Result<TightnessReport> {
    if samples_by_eps.is_empty() {
        return Err(contract("tightness report needs at least one sample family"));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("thresholds must be strictly ascending".into()));
    }
    let mut probs = Vec::with_capacity(samples_by_eps.len());
    let mut ns = Vec::with_capacity(samples_by_eps.len());
    for (eps, samples) in samples_by_eps {
        if samples.is_empty() {
            return Err(contract(format!("no samples for epsilon = {eps}")));
        }
        let mut abs: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        probs.push(
            thresholds
                .iter()
                .map(|&m| (n - abs.partition_point(|&v| v <= m)) as f64 / n as f64)
                .collect(),
        );
        ns.push(n);
    }
    Ok(TightnessReport {
        epsilons: samples_by_eps.iter().map(|(e, _)| *e).collect(),
        thresholds: thresholds.to_vec(),
        exceedance_probs: probs,
        n: ns,
    })
}

/// `E|X|^p` with a CLT 95% half-width.
pub fn moment_estimate(samples: &[f64], p: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(contract("moment estimate needs samples"));
    }
    if !(p >= 1.0) {
        return Err(Error::Config(format!("moment order must be >= 1, got {p}")));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite sample {bad}")));
    }
    let powers: Vec<f64> = samples
        .iter()
        .map(|v| if p == 2.0 { v * v } else { v.abs().powf(p) })
        .collect();
    let value = sum::mean(&powers);
    let half = if powers.len() > 1 {
        Z95 * sum::std_error(&powers)
    } else {
        0.0
    };
    Ok((value, half))
}

/// A scalar summary with its confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn mean_of(samples: &[f64]) -> Interval {
        let m = sum::mean(samples);
        let h = if samples.len() > 1 {
            Z95 * sum::std_error(samples)
        } else {
            0.0
        };
        Interval {
            value: m,
            lo: m - h,
            hi: m + h,
        }
    }

    pub fn median_of(samples: &[f64]) -> Interval {
        let (lo, hi) = sum::median_interval(samples);
        Interval {
            value: sum::median(samples),
            lo,
            hi,
        }
    }

    pub fn exceedance(est: &UcpEstimate) -> Interval {
        Interval {
            value: est.empirical_prob,
            lo: est.ci_low,
            hi: est.ci_high,
        }
    }
}

/// Indices `j` where `series[j+1]` lies significantly above `series[j]`.
pub fn overlap_violations(series: &[Interval]) -> Vec<usize> {
    (0..series.len().saturating_sub(1))
        .filter(|&j| series[j + 1].lo > series[j].hi)
        .collect()
}

/// Non-increasing up to CI overlap.
pub fn decreasing_up_to_overlap(series: &[Interval]) -> bool {
    overlap_violations(series).is_empty()
}

/// Strictly decreasing point values.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// Pass/fail for one ε-series of ucp estimates (ordered by decreasing ε).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub eta: f64,
    pub terminal_prob: f64,
    pub terminal_below_eta: bool,
    pub monotone: bool,
    /// Schedule positions `j` with a significant rise from `j` to `j+1`.
    pub violations: Vec<usize>,
    pub pass: bool,
}

pub fn convergence_verdict(series: &[UcpEstimate], eta: f64) -> Result<ConvergenceVerdict> {
    let last = series
        .last()
        .ok_or_else(|| contract("convergence verdict needs a nonempty series"))?;
    let intervals: Vec<Interval> = series.iter().map(Interval::exceedance).collect();
    let violations = overlap_violations(&intervals);
    let terminal_below_eta = last.empirical_prob < eta;
    let monotone = violations.is_empty();
    Ok(ConvergenceVerdict {
        eta,
        terminal_prob: last.empirical_prob,
        terminal_below_eta,
        monotone,
        violations,
        pass: terminal_below_eta && monotone,
    })
}

/// One JSON record of an exceedance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcpRecord {
    pub epsilon: f64,
    /// Threshold δ (or M for tightness reports).
    pub delta: f64,
    pub prob: f64,
    pub ci: [f64; 2],
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcpReport {
    pub records: Vec<UcpRecord>,
    pub verdict: ConvergenceVerdict,
}

impl UcpReport {
    pub fn new(epsilons: &[f64], series: &[UcpEstimate], eta: f64) -> Result<Self> {
        if epsilons.len() != series.len() {
            return Err(contract("one epsilon per estimate required"));
        }
        Ok(UcpReport {
            records: series.iter().zip(epsilons).map(|(s, &e)| s.record(e)).collect(),
            verdict: convergence_verdict(series, eta)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl TightnessReport {
    pub fn records(&self) -> Vec<UcpRecord> {
        let mut out = Vec::new();
        for (i, &eps) in self.epsilons.iter().enumerate() {
            for (j, &m) in self.thresholds.iter().enumerate() {
                let p = self.exceedance_probs[i][j];
                let k = (p * self.n[i] as f64).round() as usize;
                let (lo, hi) = wilson_interval(k, self.n[i]);
                out.push(UcpRecord {
                    epsilon: eps,
                    delta: m,
                    prob: p,
                    ci: [lo, hi],
                    n: self.n[i],
                });
            }
        }
        out
    }
}
