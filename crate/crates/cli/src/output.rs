//! Tab-delimited output tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Result;

use penetrance::config::Config;
use penetrance::evaluate::{CpoRow, CrossValidatedRoc, Dic};
use penetrance::inference::{penetrance_posterior, summarize, write_draws, PosteriorSamples};
use penetrance::pedigree::Sex;
use penetrance::predict::RiskPrediction;
use penetrance::riskmodel::Covariates;

use crate::create;

fn percent(p: f64) -> String {
    format!("{}%", (p * 1000.0).round() / 10.0)
}

pub fn write_model(dir: &Path, samples: &PosteriorSamples, config: &Config) -> Result<()> {
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(samples)? + "\n")?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    write_draws(create(dir, "draws.tsv")?, samples)?;

    let mut w = create(dir, "trace.tsv")?;
    writeln!(w, "chain\titeration\tlog_posterior")?;
    for (c, t) in samples.traces.iter().enumerate() {
        for (i, v) in t.iter().enumerate() {
            writeln!(w, "{c}\t{}\t{v}", i + 1)?;
        }
    }
    w.flush()?;

    let level = config.credible_level;
    let a = 0.5 * (1.0 - level);
    let mut w = create(dir, "summary.tsv")?;
    writeln!(w, "parameter\tmean\tsd\t{}\t{}\trhat", percent(a), percent(1.0 - a))?;
    for r in summarize(samples, level)? {
        let rhat = r.rhat.map_or("NA".to_string(), |x| x.to_string());
        writeln!(w, "{}\t{}\t{}\t{}\t{}\t{rhat}", r.name, r.mean, r.sd, r.lower, r.upper)?;
    }
    w.flush()?;

    let mut w = create(dir, "acceptance.tsv")?;
    writeln!(w, "block\trate")?;
    for (n, r) in &samples.acceptance {
        writeln!(w, "{n}\t{r}")?;
    }
    w.flush()?;

    let ages = config.curve_ages(samples.time_scale);
    let mut w = create(dir, "curves.tsv")?;
    writeln!(w, "cause\tsex\tcarrier\tage\tmean\tlower\tupper")?;
    for sex in [Sex::Female, Sex::Male] {
        for carrier in [false, true] {
            let z = Covariates::new(carrier, sex);
            for c in penetrance_posterior(samples, z, &ages, level)? {
                let s = if sex == Sex::Male { "M" } else { "F" };
                for (g, age) in c.ages.iter().enumerate() {
                    writeln!(
                        w,
                        "{}\t{s}\t{}\t{age}\t{}\t{}\t{}",
                        c.cause,
                        u8::from(carrier),
                        c.mean[g],
                        c.lower[g],
                        c.upper[g]
                    )?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions(dir: &Path, preds: &[(String, RiskPrediction)]) -> Result<()> {
    let mut w = create(dir, "risk.tsv")?;
    writeln!(w, "family\tmember\tcause\tage\trisk_mean\trisk_lo\trisk_hi")?;
    for (fam, p) in preds {
        for c in &p.curves {
            for (age, b) in c.ages.iter().zip(&c.bands) {
                writeln!(w, "{fam}\t{}\t{}\t{age}\t{}\t{}\t{}", p.member, c.cause, b.mean, b.lower, b.upper)?;
            }
        }
    }
    w.flush()?;
    let mut w = create(dir, "carrier.tsv")?;
    writeln!(w, "family\tmember\tcarrier_mean\tcarrier_lo\tcarrier_hi")?;
    for (fam, p) in preds {
        let b = &p.carrier;
        writeln!(w, "{fam}\t{}\t{}\t{}\t{}", p.member, b.mean, b.lower, b.upper)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cpo(dir: &Path, rows: &[CpoRow]) -> Result<()> {
    let mut w = create(dir, "cpo.tsv")?;
    writeln!(w, "family\tlog_cpo")?;
    for r in rows {
        writeln!(w, "{}\t{}", r.family, r.log_cpo)?;
    }
    writeln!(w, "# psml\t{}", penetrance::evaluate::psml(rows))?;
    w.flush()?;
    Ok(())
}

pub fn write_dic(dir: &Path, d: &Dic) -> Result<()> {
    let mut w = create(dir, "dic.tsv")?;
    writeln!(w, "mean_deviance\tplugin_deviance\tp_d\tdic")?;
    writeln!(w, "{}\t{}\t{}\t{}", d.mean_deviance, d.plugin_deviance, d.p_d, d.dic)?;
    w.flush()?;
    Ok(())
}

pub fn write_roc(dir: &Path, cv: &CrossValidatedRoc) -> Result<()> {
    let mut w = create(dir, "roc.tsv")?;
    writeln!(w, "repetition\tpsi\tfpr\ttpr")?;
    for (r, roc) in cv.repetitions.iter().enumerate() {
        for p in &roc.points {
            writeln!(w, "{r}\t{}\t{}\t{}", p.psi, p.fpr, p.tpr)?;
        }
    }
    for (r, roc) in cv.repetitions.iter().enumerate() {
        writeln!(w, "# auc\t{r}\t{}", roc.auc)?;
    }
    writeln!(w, "# auc\tmean\t{}", cv.auc_mean)?;
    w.flush()?;
    let mut w = create(dir, "roc_band.tsv")?;
    writeln!(w, "fpr\ttpr_mean\ttpr_lo\ttpr_hi")?;
    for i in 0..cv.fpr.len() {
        writeln!(w, "{}\t{}\t{}\t{}", cv.fpr[i], cv.tpr_mean[i], cv.tpr_lower[i], cv.tpr_upper[i])?;
    }
    w.flush()?;
    Ok(())
}
