//! Random-walk Metropolis within Gibbs.
//!
//! Each iteration visits, per cause, the regression coefficients, the
//! baseline parameters and the frailty precision one scalar at a time, then
//! every family's log-frailties. Positive quantities move on the log scale.
//! Proposal scales follow a Robbins–Monro recursion toward the target
//! acceptance rate during burn-in and are frozen afterwards.
//!
//! Per-family, per-cause phenotype terms are cached so a proposal touching
//! cause `k` recomputes only that cause. Family terms are evaluated in
//! parallel and summed in family order, so results do not depend on the
//! thread count. Every family owns its own random stream for the frailty
//! updates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::riskmodel::ModelParams;
use crate::seeds;

use super::family::CauseTerms;
use super::{log_frailty_prior, log_prior_sampling_scale, FamilyData, ModelSpec, SamplerConfig, Slot, State};

/// Proposal log-scales are kept inside this window.
const LOG_SD_RANGE: (f64, f64) = (-15.0, 8.0);

/// One retained draw on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub chain: usize,
    pub iteration: u64,
    pub theta: Vec<f64>,
    /// `xi`, per family and cause; all ones without frailty.
    pub xi: Vec<Vec<f64>>,
    pub log_posterior: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FamilyChain {
    log_xi: Vec<f64>,
    log_sd: Vec<f64>,
    accepted: u64,
    proposed: u64,
    rng: ChaCha8Rng,
    // Caches rebuilt from the state on restore.
    #[serde(skip)]
    terms: Vec<CauseTerms>,
    #[serde(skip)]
    ll: f64,
}

/// Complete, resumable state of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainState {
    pub chain: usize,
    pub iteration: u64,
    /// Sampling-scale parameters.
    theta: Vec<f64>,
    log_sd: Vec<f64>,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    rng: ChaCha8Rng,
    families: Vec<FamilyChain>,
    pub draws: Vec<Draw>,
    /// Log posterior (sampling scale) after every iteration.
    pub trace: Vec<f64>,
}

impl ChainState {
    pub fn state(&self) -> State {
        State {
            theta: self.theta.clone(),
            log_xi: self.families.iter().map(|f| f.log_xi.clone()).collect(),
        }
    }
}

/// What a resumed run needs besides the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub time_scale: f64,
    pub family_ids: Vec<String>,
    pub chains: Vec<ChainState>,
}

/// Draws of every chain plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub spec: ModelSpec,
    pub time_scale: f64,
    pub family_ids: Vec<String>,
    pub names: Vec<String>,
    pub chains: usize,
    /// Post-burn-in acceptance rate per scalar parameter, then `xi` pooled.
    pub acceptance: Vec<(String, f64)>,
    #[serde(skip)]
    pub draws: Vec<Draw>,
    #[serde(skip)]
    pub traces: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    pub fn params(&self, d: &Draw) -> ModelParams {
        self.spec.params(&d.theta, self.time_scale)
    }

    /// Column `j` of the flat parameter vector, per chain.
    pub fn column_by_chain(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.chains];
        for d in &self.draws {
            out[d.chain].push(d.theta[j]);
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.theta[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn rate(a: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        a as f64 / n as f64
    }
}

/// Data, model and tuning shared by all chains of one run.
#[derive(Debug, Clone)]
pub struct ChainRunner {
    spec: ModelSpec,
    config: SamplerConfig,
    data: Vec<FamilyData>,
    time_scale: f64,
    layout: Vec<Slot>,
    prior: [f64; 3],
    initial: Vec<f64>,
    // Layout indices per cause in update order.
    by_cause: Vec<Vec<usize>>,
}

impl ChainRunner {
    pub fn new(spec: &ModelSpec, config: &SamplerConfig, cohort: &Cohort) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let data = cohort
            .families
            .par_iter()
            .map(|p| FamilyData::new(p, spec, cohort.time_scale))
            .collect::<Result<Vec<_>>>()?;
        let layout = spec.layout();
        let by_cause = (0..spec.causes)
            .map(|k| (0..layout.len()).filter(|&i| layout[i].cause() == k).collect())
            .collect();
        Ok(Self {
            initial: spec.initial_theta(cohort),
            spec: spec.clone(),
            config: config.clone(),
            data,
            time_scale: cohort.time_scale,
            layout,
            prior: spec.founder_prior(),
            by_cause,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn data(&self) -> &[FamilyData] {
        &self.data
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn family_ids(&self) -> Vec<String> {
        self.data.iter().map(|d| d.family_id().to_string()).collect()
    }

    fn params(&self, theta: &[f64]) -> ModelParams {
        let natural: Vec<f64> = self
            .layout
            .iter()
            .zip(theta)
            .map(|(s, &v)| if s.positive() { v.exp() } else { v })
            .collect();
        self.spec.params(&natural, self.time_scale)
    }

    /// Fresh chain at the default starting point.
    pub fn start(&self, chain: usize) -> Result<ChainState> {
        let base = seeds::derive_seed(self.config.seed, "chain", chain as u64);
        let k = self.spec.causes;
        let sd = self.config.proposal_sd.ln();
        let theta = State::from_natural(&self.layout, &self.initial, &[]).theta;
        let families = (0..self.data.len())
            .map(|f| FamilyChain {
                log_xi: vec![0.0; k],
                log_sd: vec![sd; k],
                accepted: 0,
                proposed: 0,
                rng: seeds::stream(base, "family", f as u64),
                terms: Vec::new(),
                ll: 0.0,
            })
            .collect();
        let mut s = ChainState {
            chain,
            iteration: 0,
            log_sd: vec![sd; theta.len()],
            accepted: vec![0; theta.len()],
            proposed: vec![0; theta.len()],
            theta,
            rng: seeds::stream(base, "update", 0),
            families,
            draws: Vec::new(),
            trace: Vec::new(),
        };
        self.refresh(&mut s)?;
        Ok(s)
    }

    /// Rebuilds the likelihood caches of a deserialized chain.
    pub fn restore(&self, mut s: ChainState) -> Result<ChainState> {
        if s.families.len() != self.data.len() || s.theta.len() != self.layout.len() {
            return Err(Error::Config("checkpoint does not match the data or model".into()));
        }
        self.refresh(&mut s)?;
        Ok(s)
    }

    fn refresh(&self, s: &mut ChainState) -> Result<()> {
        let m = self.params(&s.theta);
        let rule = self.spec.ascertainment;
        let use_ll = self.config.use_likelihood;
        s.families.par_iter_mut().zip(&self.data).for_each(|(fc, d)| {
            if use_ll {
                fc.terms = d.all_terms(&m, &fc.log_xi);
                fc.ll = d.log_likelihood_from_terms(&fc.terms, None, rule, &self.prior);
            } else {
                fc.terms = Vec::new();
                fc.ll = 0.0;
            }
        });
        let bad: Vec<&str> = s
            .families
            .iter()
            .zip(&self.data)
            .filter(|(fc, _)| !fc.ll.is_finite())
            .map(|(_, d)| d.family_id())
            .collect();
        if !bad.is_empty() {
            return Err(Error::Initialization(format!(
                "zero likelihood for {} families (first: {})",
                bad.len(),
                bad[..bad.len().min(5)].join(", ")
            )));
        }
        let lp = log_prior_sampling_scale(&self.spec, &s.state());
        if !lp.is_finite() {
            return Err(Error::Initialization(format!("log prior is {lp}")));
        }
        Ok(())
    }

    /// Terms of the sampling-scale log prior that involve slot `i` at value `v`.
    fn slot_log_prior(&self, i: usize, v: f64, families: &[FamilyChain]) -> f64 {
        let sd = self.spec.priors.beta_sd;
        match self.layout[i] {
            Slot::Beta { .. } => -0.5 * (v / sd).powi(2),
            Slot::Baseline { .. } => match self.spec.priors.gamma {
                None => v,
                Some([a, b]) => a * v - b * v.exp(),
            },
            Slot::Nu { cause } => {
                let [a, b] = self.spec.priors.nu;
                let own = a * v - b * v.exp();
                own + families.iter().map(|f| log_frailty_prior(f.log_xi[cause], v)).sum::<f64>()
            }
        }
    }

    fn gain(it: u64) -> f64 {
        (it as f64).powf(-0.6)
    }

    fn adapt(log_sd: &mut f64, accepted: bool, target: f64, it: u64) {
        let a = if accepted { 1.0 } else { 0.0 };
        *log_sd = (*log_sd + Self::gain(it) * (a - target)).clamp(LOG_SD_RANGE.0, LOG_SD_RANGE.1);
    }

    /// One full sweep.
    pub fn step(&self, s: &mut ChainState) {
        let it = s.iteration + 1;
        let adapting = it <= self.config.burn_in;
        let target = self.config.target_acceptance;
        let rule = self.spec.ascertainment;
        let use_ll = self.config.use_likelihood;
        for k in 0..self.spec.causes {
            for &i in &self.by_cause[k] {
                let cur = s.theta[i];
                let z: f64 = s.rng.sample(StandardNormal);
                let prop = cur + s.log_sd[i].exp() * z;
                let mut log_alpha = self.slot_log_prior(i, prop, &s.families) - self.slot_log_prior(i, cur, &s.families);
                let mut evals: Option<Vec<(CauseTerms, f64)>> = None;
                if use_ll && !matches!(self.layout[i], Slot::Nu { .. }) {
                    let mut theta = s.theta.clone();
                    theta[i] = prop;
                    let m = self.params(&theta);
                    let e: Vec<(CauseTerms, f64)> = self
                        .data
                        .par_iter()
                        .zip(&s.families)
                        .map(|(d, fc)| {
                            let t = d.cause_terms(&m, k, fc.log_xi[k]);
                            let ll = d.log_likelihood_from_terms(&fc.terms, Some((k, &t)), rule, &self.prior);
                            (t, ll)
                        })
                        .collect();
                    let new: f64 = e.iter().map(|x| x.1).sum();
                    let old: f64 = s.families.iter().map(|f| f.ll).sum();
                    log_alpha += new - old;
                    evals = Some(e);
                }
                let u: f64 = s.rng.random();
                let accept = u.ln() < log_alpha;
                if accept {
                    s.theta[i] = prop;
                    if let Some(e) = evals {
                        for (fc, (t, ll)) in s.families.iter_mut().zip(e) {
                            fc.terms[k] = t;
                            fc.ll = ll;
                        }
                    }
                }
                if adapting {
                    Self::adapt(&mut s.log_sd[i], accept, target, it);
                } else {
                    s.proposed[i] += 1;
                    s.accepted[i] += u64::from(accept);
                }
            }
        }
        if self.spec.frailty {
            self.frailty_step(s, it, adapting);
        }
        let ll: f64 = s.families.iter().map(|f| f.ll).sum();
        let lp = ll + log_prior_sampling_scale(&self.spec, &s.state());
        s.trace.push(lp);
        if !adapting && (it - self.config.burn_in) % self.config.thin == 0 {
            let natural = s.state().natural_theta(&self.layout);
            s.draws.push(Draw {
                chain: s.chain,
                iteration: it,
                theta: natural,
                xi: s.families.iter().map(|f| f.log_xi.iter().map(|w| w.exp()).collect()).collect(),
                log_posterior: lp,
            });
        }
        s.iteration = it;
    }

    fn frailty_step(&self, s: &mut ChainState, it: u64, adapting: bool) {
        let m = self.params(&s.theta);
        let log_nu: Vec<f64> = (0..self.spec.causes)
            .map(|k| {
                let i = self.by_cause[k]
                    .iter()
                    .copied()
                    .find(|&i| matches!(self.layout[i], Slot::Nu { .. }))
                    .expect("frailty slot");
                s.theta[i]
            })
            .collect();
        let rule = self.spec.ascertainment;
        let use_ll = self.config.use_likelihood;
        let target = self.config.target_acceptance;
        s.families.par_iter_mut().zip(&self.data).for_each(|(fc, d)| {
            for k in 0..self.spec.causes {
                let w = fc.log_xi[k];
                let z: f64 = fc.rng.sample(StandardNormal);
                let wp = w + fc.log_sd[k].exp() * z;
                let mut log_alpha = log_frailty_prior(wp, log_nu[k]) - log_frailty_prior(w, log_nu[k]);
                let mut eval = None;
                if use_ll {
                    let t = d.cause_terms(&m, k, wp);
                    let ll = d.log_likelihood_from_terms(&fc.terms, Some((k, &t)), rule, &self.prior);
                    log_alpha += ll - fc.ll;
                    eval = Some((t, ll));
                }
                let u: f64 = fc.rng.random();
                let accept = u.ln() < log_alpha;
                if accept {
                    fc.log_xi[k] = wp;
                    if let Some((t, ll)) = eval {
                        fc.terms[k] = t;
                        fc.ll = ll;
                    }
                }
                if adapting {
                    Self::adapt(&mut fc.log_sd[k], accept, target, it);
                } else {
                    fc.proposed += 1;
                    fc.accepted += u64::from(accept);
                }
            }
        });
    }

    /// Advances `s` until it has completed `until` iterations.
    pub fn advance(&self, s: &mut ChainState, until: u64) {
        while s.iteration < until.min(self.config.iterations) {
            self.step(s);
        }
    }

    /// Runs every chain to completion, calling `checkpoint` with all chain
    /// states after each block of `every` iterations (0 disables).
    pub fn run(
        &self,
        mut states: Vec<ChainState>,
        every: u64,
        mut checkpoint: impl FnMut(&[ChainState]) -> Result<()>,
    ) -> Result<Vec<ChainState>> {
        let total = self.config.iterations;
        loop {
            let done = states.iter().map(|s| s.iteration).min().unwrap_or(total);
            if done >= total {
                return Ok(states);
            }
            let until = if every == 0 { total } else { (done / every + 1) * every };
            states.par_iter_mut().for_each(|s| self.advance(s, until));
            if every > 0 {
                checkpoint(&states)?;
            }
        }
    }

    pub fn checkpoint(&self, states: &[ChainState]) -> Checkpoint {
        Checkpoint {
            spec: self.spec.clone(),
            config: self.config.clone(),
            time_scale: self.time_scale,
            family_ids: self.family_ids(),
            chains: states.to_vec(),
        }
    }

    pub fn collect(&self, states: Vec<ChainState>) -> PosteriorSamples {
        let names = self.spec.names();
        let mut acceptance: Vec<(String, f64)> = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let a: u64 = states.iter().map(|s| s.accepted[i]).sum();
                let p: u64 = states.iter().map(|s| s.proposed[i]).sum();
                (n.clone(), rate(a, p))
            })
            .collect();
        if self.spec.frailty {
            let fams = states.iter().flat_map(|s| &s.families);
            let (a, p) = fams.fold((0, 0), |(a, p), f| (a + f.accepted, p + f.proposed));
            acceptance.push(("xi".into(), rate(a, p)));
        }
        let chains = states.len();
        let mut draws = Vec::new();
        let mut traces = Vec::new();
        for s in states {
            draws.extend(s.draws);
            traces.push(s.trace);
        }
        PosteriorSamples {
            spec: self.spec.clone(),
            time_scale: self.time_scale,
            family_ids: self.family_ids(),
            names,
            chains,
            acceptance,
            draws,
            traces,
        }
    }
}

/// Runs one chain (index 0) to completion.
pub fn run_chain(spec: &ModelSpec, config: &SamplerConfig, cohort: &Cohort) -> Result<PosteriorSamples> {
    let runner = ChainRunner::new(spec, config, cohort)?;
    let state = runner.start(0)?;
    let states = runner.run(vec![state], 0, |_| Ok(()))?;
    Ok(runner.collect(states))
}

/// Runs `config.chains` independent chains concurrently.
pub fn run_chains(spec: &ModelSpec, config: &SamplerConfig, cohort: &Cohort) -> Result<PosteriorSamples> {
    let runner = ChainRunner::new(spec, config, cohort)?;
    let states = (0..config.chains).map(|c| runner.start(c)).collect::<Result<Vec<_>>>()?;
    let states = runner.run(states, 0, |_| Ok(()))?;
    Ok(runner.collect(states))
}

/// Rebuilds a runner and its chains from a checkpoint. `iterations` may
/// extend the run; every other sampler setting must match.
pub fn resume_chain(
    checkpoint: Checkpoint,
    cohort: &Cohort,
    iterations: Option<u64>,
) -> Result<(ChainRunner, Vec<ChainState>)> {
    let mut config = checkpoint.config.clone();
    if let Some(n) = iterations {
        config.iterations = n;
    }
    if (cohort.time_scale - checkpoint.time_scale).abs() > 0.0 {
        return Err(Error::Config(format!(
            "checkpoint time scale {} differs from the data's {}",
            checkpoint.time_scale, cohort.time_scale
        )));
    }
    let runner = ChainRunner::new(&checkpoint.spec, &config, cohort)?;
    if runner.family_ids() != checkpoint.family_ids {
        return Err(Error::Config("checkpoint families differ from the data".into()));
    }
    let states = checkpoint
        .chains
        .into_iter()
        .map(|s| runner.restore(s))
        .collect::<Result<Vec<_>>>()?;
    Ok((runner, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::pedigree::{Individual, Pedigree, Phenotype, Sex};

    fn tiny_cohort() -> Cohort {
        let fams = (0..4)
            .map(|f| {
                let members = vec![
                    Individual::founder("f", Sex::Male, Phenotype::censored(60.0 + f as f64)),
                    Individual::founder("m", Sex::Female, Phenotype::event(50.0, 1)),
                    Individual::child("a", "f", "m", Sex::Female, Phenotype::event(30.0 + 5.0 * f as f64, 2))
                        .with_carrier(Some(f % 2 == 0))
                        .proband(),
                ];
                Pedigree::new(format!("F{f}"), members).unwrap()
            })
            .collect();
        Cohort::prepare(fams, Some(75.0)).unwrap()
    }

    fn small_config() -> Config {
        Config {
            iterations: 60,
            burn_in: 20,
            thin: 4,
            bernstein_degree: 3,
            ..Config::default()
        }
    }

    #[test]
    fn draw_count_and_support() {
        let c = small_config();
        let cohort = tiny_cohort();
        let spec = c.model_spec(cohort.max_cause()).unwrap();
        let s = run_chain(&spec, &c.sampler(), &cohort).unwrap();
        assert_eq!(s.draws.len(), 10);
        assert_eq!(s.traces[0].len(), 60);
        assert!(s.traces[0].iter().all(|x| x.is_finite()));
        for d in &s.draws {
            for (slot, v) in spec.layout().iter().zip(&d.theta) {
                if slot.positive() {
                    assert!(*v > 0.0);
                }
            }
            assert!(d.xi.iter().flatten().all(|x| *x > 0.0));
        }
    }

    #[test]
    fn trace_matches_log_posterior() {
        let c = small_config();
        let cohort = tiny_cohort();
        let spec = c.model_spec(cohort.max_cause()).unwrap();
        let runner = ChainRunner::new(&spec, &c.sampler(), &cohort).unwrap();
        let mut s = runner.start(0).unwrap();
        runner.advance(&mut s, 7);
        let direct = super::super::log_posterior(&spec, runner.data(), cohort.time_scale, &s.state());
        assert!((direct - s.trace[6]).abs() < 1e-9);
    }

    #[test]
    fn resume_is_exact() {
        let c = small_config();
        let cohort = tiny_cohort();
        let spec = c.model_spec(cohort.max_cause()).unwrap();
        let runner = ChainRunner::new(&spec, &c.sampler(), &cohort).unwrap();
        let full = runner.run(vec![runner.start(0).unwrap()], 0, |_| Ok(())).unwrap();

        let mut s = runner.start(0).unwrap();
        runner.advance(&mut s, 33);
        let json = serde_json::to_string(&runner.checkpoint(&[s])).unwrap();
        let ck: Checkpoint = serde_json::from_str(&json).unwrap();
        let (r2, states) = resume_chain(ck, &cohort, None).unwrap();
        let resumed = r2.run(states, 0, |_| Ok(())).unwrap();
        assert_eq!(full[0].draws, resumed[0].draws);
        assert_eq!(full[0].trace, resumed[0].trace);
    }

    #[test]
    fn impossible_start_is_reported() {
        let c = small_config();
        // A male proband diagnosed with a cause that cannot occur in males.
        let members = vec![Individual::founder("p", Sex::Male, Phenotype::event(40.0, 1)).proband()];
        let cohort = Cohort::prepare(vec![Pedigree::new("X", members).unwrap()], None).unwrap();
        let c = Config {
            ascertainment_cause: 1,
            ..c
        };
        let spec = c.model_spec(1).unwrap();
        let r = ChainRunner::new(&spec, &c.sampler(), &cohort).unwrap().start(0);
        assert!(matches!(r, Err(Error::Initialization(_))));
    }
}
