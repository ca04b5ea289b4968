//! Tab-separated export of posterior draws. Floats are written in their
//! shortest round-trip form, so reading a file back is exact.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::{Draw, PosteriorSamples};

const LEAD: [&str; 3] = ["chain", "iteration", "log_posterior"];

fn header(names: &[String], family_ids: &[String], causes: usize, frailty: bool) -> Vec<String> {
    let mut h: Vec<String> = LEAD.iter().map(|s| s.to_string()).collect();
    h.extend(names.iter().cloned());
    if frailty {
        for f in family_ids {
            for k in 1..=causes {
                h.push(format!("xi{k}_{f}"));
            }
        }
    }
    h
}

pub fn write_draws<W: Write>(out: W, samples: &PosteriorSamples) -> Result<()> {
    let frailty = samples.spec.frailty;
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(header(&samples.names, &samples.family_ids, samples.spec.causes, frailty))?;
    for d in &samples.draws {
        let mut row = vec![d.chain.to_string(), d.iteration.to_string(), d.log_posterior.to_string()];
        row.extend(d.theta.iter().map(f64::to_string));
        if frailty {
            row.extend(d.xi.iter().flatten().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads draws written by [`write_draws`] for the model and families of
/// `samples`.
pub fn read_draws<R: Read>(source: R, samples: &PosteriorSamples) -> Result<Vec<Draw>> {
    let causes = samples.spec.causes;
    let frailty = samples.spec.frailty;
    let want = header(&samples.names, &samples.family_ids, causes, frailty);
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(source);
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != want {
        return Err(Error::Config("draws file header does not match the fitted model".into()));
    }
    let p = samples.names.len();
    let nf = samples.family_ids.len();
    let mut draws = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::MalformedRow {
            family: String::new(),
            row: row + 2,
            message: format!("draws file: bad {what}"),
        };
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&want[i]));
        let chain = rec[0].parse().map_err(|_| bad("chain"))?;
        let iteration = rec[1].parse().map_err(|_| bad("iteration"))?;
        let log_posterior = num(2)?;
        let theta = (3..3 + p).map(num).collect::<Result<Vec<_>>>()?;
        let xi = if frailty {
            (0..nf)
                .map(|f| (0..causes).map(|k| num(3 + p + f * causes + k)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![vec![1.0; causes]; nf]
        };
        draws.push(Draw {
            chain,
            iteration,
            theta,
            xi,
            log_posterior,
        });
    }
    Ok(draws)
}
