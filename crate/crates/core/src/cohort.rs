//! Data preparation: administrative censoring and the rescaling constant.

use crate::error::{Error, Result};
use crate::pedigree::{Pedigree, Phenotype};

/// Default administrative censoring age in years.
pub const ADMIN_CENSOR_AGE: f64 = 75.0;

/// Prepared families plus the age (in years) mapped to rescaled time 1.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub families: Vec<Pedigree>,
    pub time_scale: f64,
}

/// Records beyond `limit` become censored at `limit`.
pub fn censor_at(p: &Pedigree, limit: f64) -> Result<Pedigree> {
    let mut out = p.clone();
    for i in 0..p.len() {
        if p.member(i).phenotype.age > limit {
            out = out.map_member(i, |m| m.phenotype = Phenotype::censored(limit))?;
        }
    }
    Ok(out)
}

impl Cohort {
    /// Applies administrative censoring and takes the largest remaining
    /// age as the time scale.
    pub fn prepare(families: Vec<Pedigree>, admin_age: Option<f64>) -> Result<Self> {
        let families = match admin_age {
            Some(a) => families.iter().map(|p| censor_at(p, a)).collect::<Result<Vec<_>>>()?,
            None => families,
        };
        let time_scale = families
            .iter()
            .flat_map(|p| p.members().iter().map(|m| m.phenotype.age))
            .fold(0.0, f64::max);
        if !(time_scale > 0.0 && time_scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "cohort has no positive observation time".into(),
            ));
        }
        Ok(Self {
            families,
            time_scale,
        })
    }

    /// Conforms new families to an existing time scale: anything observed
    /// past the scale (or the administrative age) is censored there.
    pub fn conform(families: Vec<Pedigree>, time_scale: f64, admin_age: Option<f64>) -> Result<Self> {
        let limit = admin_age.map_or(time_scale, |a| a.min(time_scale));
        let families = families.iter().map(|p| censor_at(p, limit)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            families,
            time_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    /// Largest cause code in the data.
    pub fn max_cause(&self) -> usize {
        self.families
            .iter()
            .flat_map(|p| p.members().iter().map(|m| m.phenotype.cause))
            .max()
            .unwrap_or(0)
    }
}
