use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riskmodel::{Covariates, CurveRule};

use super::PosteriorSamples;

/// Gauss–Legendre nodes per grid interval for penetrance curves.
const CURVE_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// Split-chain potential scale reduction; `None` with too few draws.
    pub rhat: Option<f64>,
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean, sd and equal-tailed interval at `level`.
pub fn describe(x: &[f64], level: f64) -> Result<(f64, f64, f64, f64)> {
    if x.is_empty() {
        return Err(Error::Undefined("no draws to summarize".into()));
    }
    let (mean, sd) = mean_sd(x);
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let a = 0.5 * (1.0 - level);
    Ok((mean, sd, quantile(&s, a), quantile(&s, 1.0 - a)))
}

/// Split-chain R-hat: every chain is cut in half and the halves are
/// compared. `None` when any half has fewer than two draws.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let mut halves = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        if h < 2 {
            return None;
        }
        halves.push(&c[..h]);
        halves.push(&c[c.len() - h..]);
    }
    let n = halves.iter().map(|h| h.len()).min()? as f64;
    let stats: Vec<(f64, f64)> = halves
        .iter()
        .map(|h| {
            let (m, sd) = mean_sd(&h[..n as usize]);
            (m, sd * sd)
        })
        .collect();
    let m = stats.len() as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if w == 0.0 {
        return if b == 0.0 { Some(1.0) } else { None };
    }
    let var = (n - 1.0) / n * w + b / n;
    Some((var / w).sqrt())
}

/// One row per scalar parameter.
pub fn summarize(samples: &PosteriorSamples, level: f64) -> Result<Vec<SummaryRow>> {
    samples
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (mean, sd, lower, upper) = describe(&samples.column(j), level)?;
            Ok(SummaryRow {
                name: name.clone(),
                mean,
                sd,
                lower,
                upper,
                rhat: split_rhat(&samples.column_by_chain(j)),
            })
        })
        .collect()
}

/// Pointwise posterior mean and equal-tailed band of a penetrance curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetranceCurve {
    pub cause: usize,
    pub carrier: bool,
    pub male: bool,
    pub ages: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Frailty-marginal cause-specific penetrance for covariates `z` at each
/// age, one curve per cause.
pub fn penetrance_posterior(
    samples: &PosteriorSamples,
    z: Covariates,
    ages: &[f64],
    level: f64,
) -> Result<Vec<PenetranceCurve>> {
    if samples.draws.is_empty() {
        return Err(Error::Undefined("no draws".into()));
    }
    let grid: Vec<f64> = ages.iter().map(|a| a / samples.time_scale).collect();
    let degree = (samples.spec.baseline == crate::baseline::BaselineKind::Bernstein).then_some(samples.spec.degree);
    let rule = CurveRule::new(&grid, CURVE_NODES, degree)?;
    let per_draw: Vec<Vec<Vec<f64>>> = samples
        .draws
        .par_iter()
        .map(|d| samples.params(d).penetrance_curves(z, &rule))
        .collect();
    (0..samples.spec.causes)
        .map(|k| {
            let mut curve = PenetranceCurve {
                cause: k + 1,
                carrier: z.carrier,
                male: z.sex == crate::pedigree::Sex::Male,
                ages: ages.to_vec(),
                mean: Vec::with_capacity(ages.len()),
                lower: Vec::with_capacity(ages.len()),
                upper: Vec::with_capacity(ages.len()),
            };
            for g in 0..ages.len() {
                let col: Vec<f64> = per_draw.iter().map(|c| c[k][g]).collect();
                let (mean, _, lo, hi) = describe(&col, level)?;
                curve.mean.push(mean);
                curve.lower.push(lo);
                curve.upper.push(hi);
            }
            Ok(curve)
        })
        .collect()
}
