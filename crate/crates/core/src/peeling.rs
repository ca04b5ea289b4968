//! Exact family likelihood by peeling.
//!
//! Genotypes are marginalized by sum-product message passing on the marriage
//! graph, whose nodes are individuals and matings. The graph is a tree for
//! loop-free pedigrees, so two passes give every member's anterior and
//! posterior terms. Messages are 3-vectors over genotype states carried with
//! a separate log scale, rescaled to unit maximum after every product. A pass
//! that may have lost a relevant term to underflow is redone in log space.

use crate::error::{Error, Result};
use crate::genetics::{transmission_table, STATES};
use crate::pedigree::Pedigree;
use crate::riskmodel::{Covariates, FrailtyVector, ModelParams};

/// Per-member phenotype log-likelihood `[log Pr(H | G=0), log Pr(H | G=1)]`.
pub type Evidence = [f64; 2];

/// Smallest maximum a rescaled message may have before terms that
/// underflowed could matter.
const TINY: f64 = 1e-250;

/// Arithmetic on messages over the three genotype states.
trait Message: Copy {
    const ONE: Self;
    fn from_log(lv: [f64; 3]) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn log_sum(&self) -> f64;
    fn logs(&self) -> [f64; 3];
    /// True when underflow may have destroyed a term that matters.
    fn lossy(&self) -> bool;
    /// Message from a mating (father, mother, children) to slot `target`.
    fn mating(msgs: &[Self], target: usize) -> Self;
}

/// `exp(log_scale) * v` with `max v = 1`. Every factor entering a product
/// is at most one, so a product whose maximum stays above [`TINY`] never
/// passed through a subnormal intermediate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ScaledVec {
    v: [f64; 3],
    log_scale: f64,
    lossy: bool,
}

impl ScaledVec {
    fn new(v: [f64; 3], log_scale: f64, lossy: bool) -> Self {
        let max = v.iter().copied().fold(0.0, f64::max);
        if max == 0.0 || !log_scale.is_finite() {
            return Self {
                v: [0.0; 3],
                log_scale: f64::NEG_INFINITY,
                lossy: true,
            };
        }
        Self {
            v: v.map(|x| x / max),
            log_scale: log_scale + max.ln(),
            lossy: lossy || max < TINY,
        }
    }
}

impl Message for ScaledVec {
    const ONE: Self = Self {
        v: [1.0; 3],
        log_scale: 0.0,
        lossy: false,
    };

    fn from_log(lv: [f64; 3]) -> Self {
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::new([0.0; 3], 0.0, true);
        }
        Self::new(lv.map(|x| (x - max).exp()), max, false)
    }

    fn mul(&self, other: &Self) -> Self {
        Self::new(
            std::array::from_fn(|g| self.v[g] * other.v[g]),
            self.log_scale + other.log_scale,
            self.lossy || other.lossy,
        )
    }

    fn log_sum(&self) -> f64 {
        let s: f64 = self.v.iter().sum();
        if s == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_scale + s.ln()
        }
    }

    fn logs(&self) -> [f64; 3] {
        self.v.map(|x| self.log_scale + x.ln())
    }

    fn lossy(&self) -> bool {
        self.lossy
    }

    fn mating(msgs: &[Self], target: usize) -> Self {
        let tr = transmission_table();
        let mut lossy = false;
        let mut log_scale = 0.0;
        // prod[m][f] = prod_c sum_g T(g | m, f) mu_c(g) over children c.
        let mut prod = [[1.0; 3]; 3];
        for (c, mu) in msgs.iter().enumerate().skip(2) {
            if c == target {
                continue;
            }
            lossy |= mu.lossy;
            log_scale += mu.log_scale;
            for m in 0..3 {
                for f in 0..3 {
                    prod[m][f] *= (0..3).map(|g| tr[m][f][g] * mu.v[g]).sum::<f64>();
                }
            }
        }
        let (father, mother) = (&msgs[0], &msgs[1]);
        let mut out = [0.0; 3];
        match target {
            0 => {
                lossy |= mother.lossy;
                log_scale += mother.log_scale;
                for (f, o) in out.iter_mut().enumerate() {
                    *o = (0..3).map(|m| mother.v[m] * prod[m][f]).sum();
                }
            }
            1 => {
                lossy |= father.lossy;
                log_scale += father.log_scale;
                for (m, o) in out.iter_mut().enumerate() {
                    *o = (0..3).map(|f| father.v[f] * prod[m][f]).sum();
                }
            }
            _ => {
                lossy |= father.lossy || mother.lossy;
                log_scale += father.log_scale + mother.log_scale;
                for m in 0..3 {
                    for f in 0..3 {
                        let w = mother.v[m] * father.v[f] * prod[m][f];
                        if w == 0.0 {
                            continue;
                        }
                        for (g, o) in out.iter_mut().enumerate() {
                            *o += w * tr[m][f][g];
                        }
                    }
                }
            }
        }
        Self::new(out, log_scale, lossy)
    }
}

/// Entry-wise logs; exact at any dynamic range but several times slower.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogVec([f64; 3]);

fn lse<const N: usize>(x: [f64; N]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl Message for LogVec {
    const ONE: Self = Self([0.0; 3]);

    fn from_log(lv: [f64; 3]) -> Self {
        Self(lv)
    }

    fn mul(&self, other: &Self) -> Self {
        Self(std::array::from_fn(|g| self.0[g] + other.0[g]))
    }

    fn log_sum(&self) -> f64 {
        lse(self.0)
    }

    fn logs(&self) -> [f64; 3] {
        self.0
    }

    fn lossy(&self) -> bool {
        false
    }

    fn mating(msgs: &[Self], target: usize) -> Self {
        let ltr = transmission_table().map(|a| a.map(|b| b.map(f64::ln)));
        let mut prod = [[0.0; 3]; 3];
        for (c, mu) in msgs.iter().enumerate().skip(2) {
            if c == target {
                continue;
            }
            for m in 0..3 {
                for f in 0..3 {
                    prod[m][f] += lse(std::array::from_fn::<_, 3, _>(|g| ltr[m][f][g] + mu.0[g]));
                }
            }
        }
        let (father, mother) = (msgs[0].0, msgs[1].0);
        Self(match target {
            0 => std::array::from_fn(|f| lse(std::array::from_fn::<_, 3, _>(|m| mother[m] + prod[m][f]))),
            1 => std::array::from_fn(|m| lse(std::array::from_fn::<_, 3, _>(|f| father[f] + prod[m][f]))),
            _ => std::array::from_fn(|g| {
                lse(std::array::from_fn::<_, 9, _>(|i| {
                    let (m, f) = (i / 3, i % 3);
                    mother[m] + father[f] + prod[m][f] + ltr[m][f][g]
                }))
            }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Ind(usize),
    Mat(usize),
}

/// Traversal plan for one pedigree: marriage-graph adjacency and a
/// breadth-first order rooted at the pivot member.
#[derive(Debug, Clone)]
pub struct PeelPlan {
    pivot: usize,
    // Slots per mating: father, mother, then children.
    slots: Vec<Vec<usize>>,
    // Per individual: (mating, slot) of every incident edge.
    links: Vec<Vec<(usize, usize)>>,
    parent_link: Vec<Option<(usize, usize)>>,
    founder: Vec<bool>,
    observed: Vec<Option<bool>>,
    order: Vec<(Node, Option<(usize, usize)>)>,
}

impl PeelPlan {
    pub fn new(p: &Pedigree) -> Self {
        Self::with_pivot(p, p.proband())
    }

    pub fn with_pivot(p: &Pedigree, pivot: usize) -> Self {
        let n = p.len();
        assert!(pivot < n, "pivot out of range");
        let slots: Vec<Vec<usize>> = p
            .matings()
            .iter()
            .map(|m| {
                let mut s = vec![m.father, m.mother];
                s.extend(&m.children);
                s
            })
            .collect();
        let mut links = vec![Vec::new(); n];
        let mut parent_link = vec![None; n];
        for (u, s) in slots.iter().enumerate() {
            for (k, &i) in s.iter().enumerate() {
                links[i].push((u, k));
                if k >= 2 {
                    parent_link[i] = Some((u, k));
                }
            }
        }
        let mut order = vec![(Node::Ind(pivot), None)];
        let mut seen_mat = vec![false; slots.len()];
        let mut head = 0;
        while head < order.len() {
            let (node, parent) = order[head];
            head += 1;
            match node {
                Node::Ind(i) => {
                    for &(u, k) in &links[i] {
                        if Some((u, k)) != parent && !seen_mat[u] {
                            seen_mat[u] = true;
                            order.push((Node::Mat(u), Some((u, k))));
                        }
                    }
                }
                Node::Mat(u) => {
                    for (k, &i) in slots[u].iter().enumerate() {
                        if Some((u, k)) != parent {
                            order.push((Node::Ind(i), Some((u, k))));
                        }
                    }
                }
            }
        }
        Self {
            pivot,
            slots,
            links,
            parent_link,
            founder: (0..n).map(|i| p.parents(i).is_none()).collect(),
            observed: p.members().iter().map(|m| m.carrier).collect(),
            order,
        }
    }

    pub fn pivot(&self) -> usize {
        self.pivot
    }

    pub fn len(&self) -> usize {
        self.founder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.founder.is_empty()
    }

    // Evidence times genotype indicator, and the founder prior for founders.
    fn local_logs(&self, evidence: &[Evidence], prior: Option<&[f64; 3]>) -> Vec<[f64; 3]> {
        (0..self.len())
            .map(|i| {
                std::array::from_fn(|g| {
                    let s = STATES[g];
                    if !s.consistent_with(self.observed[i]) {
                        return f64::NEG_INFINITY;
                    }
                    let base = evidence[i][usize::from(s.carrier())];
                    match prior {
                        Some(pr) if self.founder[i] => base + pr[g].ln(),
                        _ => base,
                    }
                })
            })
            .collect()
    }

    fn ind_message<M: Message>(&self, i: usize, exclude: (usize, usize), local: &M, to_ind: &[Vec<M>]) -> M {
        let mut acc = *local;
        for &(u, k) in &self.links[i] {
            if (u, k) != exclude {
                acc = acc.mul(&to_ind[u][k]);
            }
        }
        acc
    }

    fn empty_messages<M: Message>(&self) -> Vec<Vec<M>> {
        self.slots.iter().map(|s| vec![M::ONE; s.len()]).collect()
    }

    // Leaves-to-pivot pass; fills messages towards the pivot.
    fn upward<M: Message>(&self, locals: &[M], to_mat: &mut [Vec<M>], to_ind: &mut [Vec<M>]) {
        for &(node, parent) in self.order.iter().skip(1).rev() {
            let (u, k) = parent.expect("non-root has a parent edge");
            match node {
                Node::Ind(i) => to_mat[u][k] = self.ind_message(i, (u, k), &locals[i], to_ind),
                Node::Mat(_) => to_ind[u][k] = M::mating(&to_mat[u], k),
            }
        }
    }

    fn root_belief<M: Message>(&self, evidence: &[Evidence], prior: &[f64; 3]) -> M {
        let locals: Vec<M> = self.local_logs(evidence, Some(prior)).into_iter().map(M::from_log).collect();
        let mut to_mat = self.empty_messages();
        let mut to_ind = self.empty_messages();
        self.upward(&locals, &mut to_mat, &mut to_ind);
        let r = self.pivot;
        self.ind_message(r, (usize::MAX, usize::MAX), &locals[r], &to_ind)
    }

    /// Log of the joint `Pr(H, G_obs)` for the given evidence.
    pub fn log_joint(&self, evidence: &[Evidence], prior: &[f64; 3]) -> f64 {
        let fast: ScaledVec = self.root_belief(evidence, prior);
        if !fast.lossy() {
            return fast.log_sum();
        }
        self.root_belief::<LogVec>(evidence, prior).log_sum()
    }

    /// Log of `Pr(G_obs)` from a phenotype-free pass.
    pub fn log_prob_observed(&self, prior: &[f64; 3]) -> f64 {
        self.log_joint(&vec![[0.0; 2]; self.len()], prior)
    }

    /// `log Pr(H | G_obs)`; fails when `Pr(G_obs) = 0`.
    pub fn log_likelihood(
        &self,
        evidence: &[Evidence],
        prior: &[f64; 3],
        log_prob_observed: f64,
    ) -> f64 {
        self.log_joint(evidence, prior) - log_prob_observed
    }

    /// Both passes; anterior and posterior terms for every member.
    pub fn messages(&self, evidence: &[Evidence], prior: &[f64; 3]) -> PeelMessages {
        let log_norm = self.log_prob_observed(prior);
        self.all_messages::<ScaledVec>(evidence, prior, log_norm)
            .or_else(|| self.all_messages::<LogVec>(evidence, prior, log_norm))
            .expect("exact messages are never lossy")
    }

    fn all_messages<M: Message>(&self, evidence: &[Evidence], prior: &[f64; 3], log_norm: f64) -> Option<PeelMessages> {
        let locals: Vec<M> = self.local_logs(evidence, Some(prior)).into_iter().map(M::from_log).collect();
        let mut to_mat = self.empty_messages();
        let mut to_ind = self.empty_messages();
        self.upward(&locals, &mut to_mat, &mut to_ind);
        for &(node, parent) in &self.order {
            match node {
                Node::Ind(i) => {
                    for &(u, k) in &self.links[i] {
                        if Some((u, k)) != parent {
                            to_mat[u][k] = self.ind_message(i, (u, k), &locals[i], &to_ind);
                        }
                    }
                }
                Node::Mat(u) => {
                    for k in 0..self.slots[u].len() {
                        if parent.map(|p| p.1) != Some(k) {
                            to_ind[u][k] = M::mating(&to_mat[u], k);
                        }
                    }
                }
            }
        }
        let phenotype = self.local_logs(evidence, None);
        let n = self.len();
        let mut anterior = Vec::with_capacity(n);
        let mut posterior = Vec::with_capacity(n);
        for (i, ph) in phenotype.iter().enumerate() {
            let a = match self.parent_link[i] {
                Some((u, k)) => to_ind[u][k],
                None => M::from_log(prior.map(f64::ln)),
            };
            let mut p = M::ONE;
            for &(u, k) in &self.links[i] {
                if k < 2 {
                    p = p.mul(&to_ind[u][k]);
                }
            }
            // A lost entry matters only if it would have dominated the belief.
            if a.mul(&M::from_log(*ph)).mul(&p).lossy() {
                return None;
            }
            anterior.push(a.logs().map(|x| x - log_norm));
            posterior.push(p.logs());
        }
        Some(PeelMessages {
            anterior,
            phenotype,
            posterior,
            log_prob_observed: log_norm,
        })
    }
}

/// Log anterior terms `A_j(g)` (normalized by `Pr(G_obs)`), log phenotype
/// factors `Pr(H_j | g)` masked by the observed genotype, and log posterior
/// terms `P_j(g)`.
#[derive(Debug, Clone)]
pub struct PeelMessages {
    pub anterior: Vec<[f64; 3]>,
    pub phenotype: Vec<[f64; 3]>,
    pub posterior: Vec<[f64; 3]>,
    pub log_prob_observed: f64,
}

impl PeelMessages {
    fn belief(&self, j: usize) -> [f64; 3] {
        std::array::from_fn(|g| self.anterior[j][g] + self.phenotype[j][g] + self.posterior[j][g])
    }

    /// `log sum_g A_j(g) Pr(H_j | g) P_j(g)`, the same for every `j`.
    pub fn log_likelihood_at(&self, j: usize) -> f64 {
        lse(self.belief(j))
    }

    /// Posterior genotype-state probabilities of member `j`.
    pub fn state_probabilities(&self, j: usize) -> [f64; 3] {
        let b = self.belief(j);
        let s = lse(b);
        b.map(|x| (x - s).exp())
    }
}

/// Phenotype log-likelihoods of every member under both carrier states.
pub fn member_evidence(p: &Pedigree, m: &ModelParams, xi: &FrailtyVector) -> Result<Vec<Evidence>> {
    p.members()
        .iter()
        .map(|ind| {
            let mut ph = ind.phenotype;
            ph.age = m.rescale(ph.age);
            let e0 = m.individual_log_likelihood(Covariates::new(false, ind.sex), ph, xi)?;
            let e1 = m.individual_log_likelihood(Covariates::new(true, ind.sex), ph, xi)?;
            Ok([e0, e1])
        })
        .collect()
}

fn checked_norm(p: &Pedigree, plan: &PeelPlan, prior: &[f64; 3]) -> Result<f64> {
    let norm = plan.log_prob_observed(prior);
    if norm == f64::NEG_INFINITY {
        return Err(Error::ImpossiblePedigree(p.family_id().to_string()));
    }
    Ok(norm)
}

/// `log Pr(H | G_obs, X, theta, xi)` for one family, pivoting on the proband.
pub fn family_log_likelihood(
    p: &Pedigree,
    m: &ModelParams,
    xi: &FrailtyVector,
    prior: &[f64; 3],
) -> Result<f64> {
    let plan = PeelPlan::new(p);
    let norm = checked_norm(p, &plan, prior)?;
    let evidence = member_evidence(p, m, xi)?;
    Ok(plan.log_likelihood(&evidence, prior, norm))
}

/// Anterior, phenotype and posterior terms of every member.
pub fn compute_messages(
    p: &Pedigree,
    m: &ModelParams,
    xi: &FrailtyVector,
    prior: &[f64; 3],
) -> Result<PeelMessages> {
    let plan = PeelPlan::new(p);
    checked_norm(p, &plan, prior)?;
    let evidence = member_evidence(p, m, xi)?;
    Ok(plan.messages(&evidence, prior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genetics::{founder_prior, transmission, AlleleFrequency};
    use crate::pedigree::{Individual, Phenotype, Sex};
    use crate::riskmodel::tests::cause;
    use crate::riskmodel::{Design, StructuralConstraint};
    use crate::special::log_sum_exp;

    fn prior(phi: f64) -> [f64; 3] {
        founder_prior(AlleleFrequency::new(phi).unwrap())
    }

    // Sum over every genotype configuration consistent with the observations.
    fn brute_force(p: &Pedigree, evidence: &[Evidence], prior: &[f64; 3]) -> f64 {
        let n = p.len();
        let mut joint = Vec::new();
        let mut obs = Vec::new();
        let mut g = vec![0usize; n];
        let allowed: Vec<Vec<usize>> = p
            .members()
            .iter()
            .map(|m| {
                STATES
                    .iter()
                    .filter(|s| s.consistent_with(m.carrier))
                    .map(|s| s.index())
                    .collect()
            })
            .collect();
        let mut pos = vec![0usize; n];
        loop {
            for i in 0..n {
                g[i] = allowed[i][pos[i]];
            }
            let mut lp = 0.0;
            for i in 0..n {
                lp += match p.parents(i) {
                    None => prior[g[i]].ln(),
                    Some((f, mo)) => transmission(STATES[g[i]], STATES[g[mo]], STATES[g[f]]).ln(),
                };
            }
            let le: f64 = (0..n).map(|i| evidence[i][usize::from(g[i] > 0)]).sum();
            obs.push(lp);
            joint.push(lp + le);
            let mut i = 0;
            loop {
                if i == n {
                    return log_sum_exp(&joint) - log_sum_exp(&obs);
                }
                pos[i] += 1;
                if pos[i] < allowed[i].len() {
                    break;
                }
                pos[i] = 0;
                i += 1;
            }
        }
    }

    fn ph(age: f64, cause: usize) -> Phenotype {
        Phenotype { age, cause }
    }

    // Three generations: founders 1x2 -> 3, 4; 3 x 5 (married in) -> 6, 7, 8.
    fn three_generations() -> Pedigree {
        let members = vec![
            Individual::founder("1", Sex::Male, ph(70.0, 2)),
            Individual::founder("2", Sex::Female, ph(65.0, 0)).with_carrier(Some(true)),
            Individual::child("3", "1", "2", Sex::Male, ph(45.0, 2)),
            Individual::child("4", "1", "2", Sex::Female, ph(50.0, 1)),
            Individual::founder("5", Sex::Female, ph(44.0, 0)).with_carrier(Some(false)),
            Individual::child("6", "3", "5", Sex::Female, ph(20.0, 0)).proband(),
            Individual::child("7", "3", "5", Sex::Male, ph(18.0, 0)),
            Individual::child("8", "3", "5", Sex::Female, ph(10.0, 2)).with_carrier(Some(true)),
        ];
        Pedigree::new("F", members).unwrap()
    }

    fn model() -> ModelParams {
        ModelParams {
            causes: vec![
                cause(Design::Full, vec![1.5, 0.0, 0.0], vec![0.2, 0.5, 1.0], Some(1.0)),
                cause(Design::Full, vec![2.5, 0.3, -0.2], vec![0.3, 0.1, 0.2], Some(2.0)),
            ],
            constraint: StructuralConstraint::male_breast(),
            time_scale: 80.0,
        }
    }

    #[test]
    fn matches_brute_force_and_is_pivot_invariant() {
        let p = three_generations();
        let m = model();
        let xi = FrailtyVector(vec![0.8, 1.3]);
        let pr = prior(0.01);
        let ev = member_evidence(&p, &m, &xi).unwrap();
        let want = brute_force(&p, &ev, &pr);
        let got = family_log_likelihood(&p, &m, &xi, &pr).unwrap();
        assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
        for pivot in 0..p.len() {
            let plan = PeelPlan::with_pivot(&p, pivot);
            let norm = plan.log_prob_observed(&pr);
            assert!((plan.log_likelihood(&ev, &pr, norm) - want).abs() < 1e-10);
        }
        let msgs = compute_messages(&p, &m, &xi, &pr).unwrap();
        for j in 0..p.len() {
            assert!((msgs.log_likelihood_at(j) - want).abs() < 1e-10, "member {j}");
        }
    }

    #[test]
    fn fully_observed_trio_factorizes() {
        let members = vec![
            Individual::founder("f", Sex::Male, ph(60.0, 2)).with_carrier(Some(false)),
            Individual::founder("m", Sex::Female, ph(40.0, 1)).with_carrier(Some(true)),
            Individual::child("c", "f", "m", Sex::Female, ph(30.0, 2))
                .with_carrier(Some(true))
                .proband(),
        ];
        let p = Pedigree::new("T", members).unwrap();
        let m = model();
        let xi = FrailtyVector(vec![1.0, 1.0]);
        let ev = member_evidence(&p, &m, &xi).unwrap();
        let want = ev[0][0] + ev[1][1] + ev[2][1];
        let got = family_log_likelihood(&p, &m, &xi, &prior(0.0006)).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn singleton_mixes_over_prior() {
        let p = Pedigree::new("S", vec![Individual::founder("a", Sex::Female, ph(35.0, 1)).proband()]).unwrap();
        let m = model();
        let xi = FrailtyVector(vec![1.2, 0.7]);
        let pr = prior(0.05);
        let ev = member_evidence(&p, &m, &xi).unwrap();
        let want = ((1.0 - pr[0]) * ev[0][1].exp() + pr[0] * ev[0][0].exp()).ln();
        let got = family_log_likelihood(&p, &m, &xi, &pr).unwrap();
        assert!((got - want).abs() < 1e-13);
    }

    #[test]
    fn boundary_messages() {
        let p = three_generations();
        let pr = prior(0.01);
        let ev = vec![[0.0; 2]; p.len()];
        let msgs = PeelPlan::new(&p).messages(&ev, &pr);
        // Founder 1 has an observed spouse but the anterior is still the prior
        // up to the normalization by Pr(G_obs).
        for (x, y) in msgs.anterior[0].iter().zip(pr) {
            assert!((x + msgs.log_prob_observed - y.ln()).abs() < 1e-12);
        }
        // Leaf 7 has no spouse or offspring.
        assert_eq!(msgs.posterior[6], [0.0; 3]);
    }

    #[test]
    fn wide_dynamic_range_falls_back_to_exact_arithmetic() {
        // A strongly carrier-favouring phenotype on an observed non-carrier
        // parent's child: the fast path loses the carrier state of the
        // founders' messages.
        let members = vec![
            Individual::founder("f", Sex::Male, ph(60.0, 0)),
            Individual::founder("m", Sex::Female, ph(40.0, 0)),
            Individual::child("c", "f", "m", Sex::Female, ph(30.0, 0)).with_carrier(Some(true)).proband(),
        ];
        let p = Pedigree::new("W", members).unwrap();
        let ev = vec![[0.0, -900.0], [0.0, -1000.0], [0.0, 0.0]];
        let pr = prior(0.01);
        let want = brute_force(&p, &ev, &pr);
        let plan = PeelPlan::new(&p);
        let got = plan.log_likelihood(&ev, &pr, plan.log_prob_observed(&pr));
        assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        let msgs = plan.messages(&ev, &pr);
        for j in 0..3 {
            assert!(((msgs.log_likelihood_at(j) - want) / want).abs() < 1e-12);
        }
    }

    #[test]
    fn impossible_configuration() {
        let members = vec![
            Individual::founder("f", Sex::Male, ph(60.0, 0)).with_carrier(Some(false)),
            Individual::founder("m", Sex::Female, ph(40.0, 0)).with_carrier(Some(false)),
            Individual::child("c", "f", "m", Sex::Female, ph(30.0, 2))
                .with_carrier(Some(true))
                .proband(),
        ];
        let p = Pedigree::new("X", members).unwrap();
        let r = family_log_likelihood(&p, &model(), &FrailtyVector(vec![1.0, 1.0]), &prior(0.01));
        assert!(matches!(r, Err(Error::ImpossiblePedigree(_))));
    }

    #[test]
    fn deep_chain_does_not_underflow() {
        let mut members = vec![
            Individual::founder("f0", Sex::Male, ph(60.0, 2)),
            Individual::founder("m0", Sex::Female, ph(60.0, 1)),
        ];
        let mut father = "f0".to_string();
        let mut mother = "m0".to_string();
        for gen in 1..=600 {
            let child = format!("c{gen}");
            let spouse = format!("s{gen}");
            members.push(Individual::child(&child, &father, &mother, Sex::Male, ph(50.0, 2)));
            if gen == 600 {
                break;
            }
            members.push(Individual::founder(&spouse, Sex::Female, ph(55.0, 1)));
            father = child;
            mother = spouse;
        }
        members[2].is_proband = true;
        let p = Pedigree::new("chain", members).unwrap();
        let ll = family_log_likelihood(&p, &model(), &FrailtyVector(vec![1.0, 1.0]), &prior(0.01)).unwrap();
        assert!(ll.is_finite() && ll < -745.0, "{ll}");
    }
}
