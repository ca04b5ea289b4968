//! Model comparison (CPO, PsML, DIC) and cross-validated ROC analysis.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::config::{Config, FrailtyMode};
use crate::error::{Error, Result};
use crate::inference::{run_chains, FamilyData, ModelSpec, PosteriorSamples};
use crate::pedigree::{Pedigree, Phenotype, Sex};
use crate::predict::{carrier_probability, draw_frailty, weighted_risk};
use crate::riskmodel::Covariates;
use crate::seeds;
use crate::special::log_sum_exp;

/// Corrected log-likelihood of every family under every draw:
/// `[family][draw]`. `data` must hold the fitted families in fit order.
pub fn family_log_likelihoods(samples: &PosteriorSamples, data: &[FamilyData]) -> Result<Vec<Vec<f64>>> {
    check_families(samples, data)?;
    let prior = samples.spec.founder_prior();
    let rule = samples.spec.ascertainment;
    let params: Vec<_> = samples.draws.iter().map(|d| samples.params(d)).collect();
    Ok(data
        .par_iter()
        .enumerate()
        .map(|(f, fd)| {
            samples
                .draws
                .iter()
                .zip(&params)
                .map(|(d, m)| {
                    let w: Vec<f64> = d.xi[f].iter().map(|x| x.ln()).collect();
                    fd.log_likelihood(m, &w, rule, &prior)
                })
                .collect()
        })
        .collect())
}

fn check_families(samples: &PosteriorSamples, data: &[FamilyData]) -> Result<()> {
    let ids: Vec<&str> = data.iter().map(|d| d.family_id()).collect();
    if ids.len() != samples.family_ids.len() || ids.iter().zip(&samples.family_ids).any(|(a, b)| a != b) {
        return Err(Error::Config("data families differ from the fitted families".into()));
    }
    Ok(())
}

/// Log of the harmonic-mean CPO estimate from per-draw log-likelihoods.
pub fn log_cpo(log_likelihoods: &[f64]) -> Result<f64> {
    if log_likelihoods.is_empty() {
        return Err(Error::Undefined("CPO needs at least one draw".into()));
    }
    if let Some(i) = log_likelihoods.iter().position(|x| !x.is_finite()) {
        return Err(Error::Undefined(format!("draw {i} has zero likelihood")));
    }
    let neg: Vec<f64> = log_likelihoods.iter().map(|x| -x).collect();
    Ok((log_likelihoods.len() as f64).ln() - log_sum_exp(&neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoRow {
    pub family: String,
    pub log_cpo: f64,
}

/// Per-family log CPO.
pub fn cpo(samples: &PosteriorSamples, data: &[FamilyData]) -> Result<Vec<CpoRow>> {
    let ll = family_log_likelihoods(samples, data)?;
    ll.iter()
        .zip(data)
        .map(|(l, d)| {
            Ok(CpoRow {
                family: d.family_id().to_string(),
                log_cpo: log_cpo(l).map_err(|e| Error::Undefined(format!("family {}: {e}", d.family_id())))?,
            })
        })
        .collect()
}

/// Pseudo-marginal log-likelihood: the sum of log CPO over families.
pub fn psml(rows: &[CpoRow]) -> f64 {
    rows.iter().map(|r| r.log_cpo).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub mean_deviance: f64,
    pub plugin_deviance: f64,
    pub p_d: f64,
    pub dic: f64,
}

/// DIC from per-draw deviances and the deviance at the plug-in point.
pub fn dic_from(deviances: &[f64], plugin_deviance: f64) -> Result<Dic> {
    if deviances.is_empty() {
        return Err(Error::Undefined("DIC needs at least one draw".into()));
    }
    let mean = deviances.iter().sum::<f64>() / deviances.len() as f64;
    if !mean.is_finite() || !plugin_deviance.is_finite() {
        return Err(Error::Undefined("non-finite deviance".into()));
    }
    let p_d = mean - plugin_deviance;
    Ok(Dic {
        mean_deviance: mean,
        plugin_deviance,
        p_d,
        dic: mean + p_d,
    })
}

/// Deviance `-2 sum_i log L_i` at the posterior mean of the sampling-scale
/// parameters (logs for positive quantities and frailties).
pub fn dic(samples: &PosteriorSamples, data: &[FamilyData]) -> Result<Dic> {
    let ll = family_log_likelihoods(samples, data)?;
    let n = samples.draws.len();
    let deviances: Vec<f64> = (0..n).map(|l| -2.0 * ll.iter().map(|f| f[l]).sum::<f64>()).collect();
    if n == 0 {
        return Err(Error::Undefined("DIC needs at least one draw".into()));
    }
    let layout = samples.spec.layout();
    let theta: Vec<f64> = layout
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mean = if s.positive() {
                samples.draws.iter().map(|d| d.theta[j].ln()).sum::<f64>() / n as f64
            } else {
                samples.draws.iter().map(|d| d.theta[j]).sum::<f64>() / n as f64
            };
            if s.positive() {
                mean.exp()
            } else {
                mean
            }
        })
        .collect();
    let m = samples.spec.params(&theta, samples.time_scale);
    let prior = samples.spec.founder_prior();
    let plugin: f64 = data
        .par_iter()
        .enumerate()
        .map(|(f, fd)| {
            let w: Vec<f64> = (0..samples.spec.causes)
                .map(|k| samples.draws.iter().map(|d| d.xi[f][k].ln()).sum::<f64>() / n as f64)
                .collect();
            fd.log_likelihood(&m, &w, samples.spec.ascertainment, &prior)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    dic_from(&deviances, -2.0 * plugin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Members with risk `>= psi` are called positive.
    pub psi: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC staircase over every distinct score, from `(0, 0)` to `(1, 1)`,
/// and its trapezoidal area (ties count one half).
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN risk score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined(format!("degenerate labels: {pos} positive, {neg} negative")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        psi: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = points.last().expect("nonempty");
        let p = RocPoint {
            psi: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * 0.5 * (p.tpr + prev.tpr);
        points.push(p);
    }
    Ok(Roc { points, auc })
}

/// Label at age `t_c` for cause `k`: positive for a cause-`k` event by
/// `t_c`, negative when event-free through `t_c` or hit by another cause
/// first, `None` when censored before `t_c`.
pub fn roc_label(ph: Phenotype, cause: usize, t_c: f64) -> Option<bool> {
    if ph.age > t_c {
        return Some(false);
    }
    match ph.cause {
        0 if ph.age >= t_c => Some(false),
        0 => None,
        c => Some(c == cause),
    }
}

/// Test-half member to score, with its label.
#[derive(Debug, Clone)]
pub struct Subject {
    pub family: usize,
    pub member: usize,
    pub label: bool,
}

/// Non-proband members of `families` eligible for the ROC at `t_c`.
/// Causes with a structural zero for males are scored on females only.
pub fn roc_subjects(families: &[Pedigree], spec: &ModelSpec, cause: usize, t_c: f64) -> Vec<Subject> {
    let females_only = spec.constraint.zero_for_males.contains(&cause);
    let mut out = Vec::new();
    for (f, p) in families.iter().enumerate() {
        for (j, m) in p.members().iter().enumerate() {
            if m.is_proband || (females_only && m.sex == Sex::Male) {
                continue;
            }
            if let Some(label) = roc_label(m.phenotype, cause, t_c) {
                out.push(Subject {
                    family: f,
                    member: j,
                    label,
                });
            }
        }
    }
    out
}

/// Posterior mean risk of cause `k` by `t_c` for each subject, with the
/// subject's own outcome hidden (censored at age 0).
pub fn subject_risks(
    samples: &PosteriorSamples,
    families: &[Pedigree],
    subjects: &[Subject],
    cause: usize,
    t_c: f64,
    mode: FrailtyMode,
    seed: u64,
) -> Result<Vec<f64>> {
    let t = t_c / samples.time_scale;
    let prior = samples.spec.founder_prior();
    // Penetrance depends on the draw, sex and carrier status only.
    let table: Vec<[[f64; 2]; 2]> = samples
        .draws
        .par_iter()
        .map(|d| {
            let m = samples.params(d);
            let q = |g, s| m.cause_penetrance(cause, Covariates::new(g, s), t);
            Ok([[q(false, Sex::Male)?, q(true, Sex::Male)?], [q(false, Sex::Female)?, q(true, Sex::Female)?]])
        })
        .collect::<Result<_>>()?;
    subjects
        .par_iter()
        .map(|s| {
            let p = families[s.family].map_member(s.member, |m| m.phenotype = Phenotype::censored(0.0))?;
            let sx = usize::from(p.member(s.member).sex == Sex::Female);
            let mut total = 0.0;
            for (l, d) in samples.draws.iter().enumerate() {
                let m = samples.params(d);
                let xi = draw_frailty(&m, mode, seed, l as u64);
                let w = carrier_probability(&p, s.member, &m, &xi, &prior)?;
                total += weighted_risk(w, table[l][sx][0], table[l][sx][1]);
            }
            Ok(total / samples.draws.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidatedRoc {
    pub repetitions: Vec<Roc>,
    /// Common false-positive-rate grid for the pointwise band.
    pub fpr: Vec<f64>,
    pub tpr_mean: Vec<f64>,
    pub tpr_lower: Vec<f64>,
    pub tpr_upper: Vec<f64>,
    pub auc_mean: f64,
}

/// TPR of the staircase at `x`, taking the upper corner at vertical steps.
pub fn tpr_at(points: &[RocPoint], x: f64) -> f64 {
    let mut best: f64 = 0.0;
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if x >= a.fpr && x <= b.fpr {
            let v = if b.fpr > a.fpr {
                a.tpr + (x - a.fpr) / (b.fpr - a.fpr) * (b.tpr - a.tpr)
            } else {
                b.tpr
            };
            best = best.max(v);
        }
    }
    best
}

/// Repeated half splits: fit on one half, score the other at `t_c`.
pub fn cross_validated_roc(cohort: &Cohort, config: &Config, spec: &ModelSpec) -> Result<CrossValidatedRoc> {
    let cause = config.roc_cause;
    let t_c = config.roc_age;
    if t_c > cohort.time_scale {
        return Err(Error::TimeOutOfRange(t_c / cohort.time_scale));
    }
    let mut reps = Vec::with_capacity(config.roc_repetitions);
    for r in 0..config.roc_repetitions {
        let mut order: Vec<usize> = (0..cohort.len()).collect();
        order.shuffle(&mut seeds::stream(config.seed, "roc-split", r as u64));
        let half = cohort.len() / 2;
        let pick = |ix: &[usize]| ix.iter().map(|&i| cohort.families[i].clone()).collect::<Vec<_>>();
        let train = Cohort {
            families: pick(&order[..half]),
            time_scale: cohort.time_scale,
        };
        let test = pick(&order[half..]);
        let mut sampler = config.sampler();
        sampler.seed = seeds::derive_seed(config.seed, "roc-fit", r as u64);
        let samples = run_chains(spec, &sampler, &train)?;
        let subjects = roc_subjects(&test, spec, cause, t_c);
        let seed = seeds::derive_seed(config.seed, "roc-predict", r as u64);
        let risks = subject_risks(&samples, &test, &subjects, cause, t_c, config.predict_frailty, seed)?;
        let labels: Vec<bool> = subjects.iter().map(|s| s.label).collect();
        reps.push(roc(&risks, &labels)?);
    }
    Ok(summarize_roc(reps, config.credible_level))
}

/// Pointwise mean and equal-tailed band of TPR over repetitions on a
/// 101-point FPR grid.
pub fn summarize_roc(reps: Vec<Roc>, level: f64) -> CrossValidatedRoc {
    let fpr: Vec<f64> = (0..=100).map(|i| f64::from(i) / 100.0).collect();
    let mut tpr_mean = Vec::new();
    let mut tpr_lower = Vec::new();
    let mut tpr_upper = Vec::new();
    for &x in &fpr {
        let col: Vec<f64> = reps.iter().map(|r| tpr_at(&r.points, x)).collect();
        let (m, _, lo, hi) = crate::inference::describe(&col, level).unwrap_or((f64::NAN, 0.0, f64::NAN, f64::NAN));
        tpr_mean.push(m);
        tpr_lower.push(lo);
        tpr_upper.push(hi);
    }
    let auc_mean = reps.iter().map(|r| r.auc).sum::<f64>() / reps.len().max(1) as f64;
    CrossValidatedRoc {
        repetitions: reps,
        fpr,
        tpr_mean,
        tpr_lower,
        tpr_upper,
        auc_mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_mean_cpo() {
        let c: f64 = 0.37;
        assert!((log_cpo(&[c.ln(); 5]).unwrap() - c.ln()).abs() < 1e-14);
        let v = log_cpo(&[0.0, (1.0f64 / 3.0).ln()]).unwrap();
        assert!((v.exp() - 0.5).abs() < 1e-14);
        assert!(log_cpo(&[0.0, f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn psml_is_additive() {
        let rows = vec![
            CpoRow { family: "a".into(), log_cpo: -1.5 },
            CpoRow { family: "b".into(), log_cpo: -2.0 },
        ];
        let twice: Vec<CpoRow> = rows.iter().chain(&rows).cloned().collect();
        assert_eq!(psml(&twice), 2.0 * psml(&rows));
    }

    #[test]
    fn degenerate_dic() {
        let d = dic_from(&[12.0; 4], 12.0).unwrap();
        assert_eq!(d.p_d, 0.0);
        assert_eq!(d.dic, 12.0);
        let c = 3.0;
        let shifted = dic_from(&[12.0 - 2.0 * c, 14.0 - 2.0 * c], 12.5 - 2.0 * c).unwrap();
        let base = dic_from(&[12.0, 14.0], 12.5).unwrap();
        assert!((base.dic - shifted.dic - 2.0 * c).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_tied_roc() {
        let r = roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert!(roc(&[0.1, 0.2], &[true, true]).is_err());
        for w in r.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn labels_follow_censoring_rules() {
        assert_eq!(roc_label(Phenotype::event(40.0, 2), 2, 50.0), Some(true));
        assert_eq!(roc_label(Phenotype::event(40.0, 1), 2, 50.0), Some(false));
        assert_eq!(roc_label(Phenotype::event(60.0, 2), 2, 50.0), Some(false));
        assert_eq!(roc_label(Phenotype::censored(70.0), 2, 50.0), Some(false));
        assert_eq!(roc_label(Phenotype::censored(50.0), 2, 50.0), Some(false));
        assert_eq!(roc_label(Phenotype::censored(30.0), 2, 50.0), None);
    }

    #[test]
    fn staircase_interpolation() {
        let r = roc(&[0.9, 0.8, 0.2, 0.1], &[true, false, true, false]).unwrap();
        assert_eq!(tpr_at(&r.points, 0.0), 0.5);
        assert_eq!(tpr_at(&r.points, 1.0), 1.0);
        assert!((tpr_at(&r.points, 0.25) - 0.5).abs() < 1e-15);
    }
}
