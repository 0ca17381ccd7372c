//! Fixed-size sampling designs: SRSWOR and stratified SRSWOR.
//!
//! Both designs are represented as a partition of the population into strata
//! with a sample size per stratum (SRSWOR is the one-stratum case), so first-
//! and second-order inclusion probabilities follow from stratum membership
//! alone and are never stored as an `N x N` matrix.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Error, Result};
use crate::numerics::{trapezoid, RngStream};
use crate::population::CurvePopulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Srswor,
    Stratified,
}

/// Partition of the population into strata, by unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumAssignment {
    labels: Vec<usize>,
    count: usize,
}

impl StratumAssignment {
    pub fn new(labels: Vec<usize>, count: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&g| g >= count) {
            return contract(format!("stratum label {bad} out of range for {count} strata"));
        }
        Ok(Self { labels, count })
    }

    pub fn single(population_size: usize) -> Self {
        Self { labels: vec![0; population_size], count: 1 }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> usize {
        self.labels[k]
    }

    /// Number of strata `H`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn population_size(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &g in &self.labels {
            sizes[g] += 1;
        }
        sizes
    }

    /// Units of stratum `g`, ascending.
    pub fn members(&self, g: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == g).map(|(k, _)| k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StratumDesign {
    units: Vec<usize>,
    sample_size: usize,
}

/// A fixed-size design without replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDesign {
    kind: DesignKind,
    population_size: usize,
    strata: Vec<StratumDesign>,
    labels: Arc<Vec<usize>>,
}

impl SamplingDesign {
    pub fn srswor(population_size: usize, sample_size: usize) -> Result<Self> {
        if population_size == 0 {
            return contract("SRSWOR needs a nonempty population");
        }
        if sample_size == 0 || sample_size > population_size {
            return contract(format!(
                "SRSWOR needs 1 <= n <= N, got n={sample_size}, N={population_size}"
            ));
        }
        Ok(Self {
            kind: DesignKind::Srswor,
            population_size,
            strata: vec![StratumDesign { units: (0..population_size).collect(), sample_size }],
            labels: Arc::new(vec![0; population_size]),
        })
    }

    pub fn stratified(assignment: &StratumAssignment, allocation: &[usize]) -> Result<Self> {
        if allocation.len() != assignment.count() {
            return contract(format!(
                "{} stratum sample sizes for {} strata",
                allocation.len(),
                assignment.count()
            ));
        }
        let mut strata = Vec::with_capacity(assignment.count());
        for (g, &n_g) in allocation.iter().enumerate() {
            let units = assignment.members(g);
            if n_g == 0 || n_g > units.len() {
                return contract(format!(
                    "stratum {g}: need 1 <= n_g <= N_g, got n_g={n_g}, N_g={}",
                    units.len()
                ));
            }
            strata.push(StratumDesign { units, sample_size: n_g });
        }
        Ok(Self {
            kind: DesignKind::Stratified,
            population_size: assignment.population_size(),
            strata,
            labels: Arc::new(assignment.labels().to_vec()),
        })
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    /// Total sample size `n`.
    pub fn sample_size(&self) -> usize {
        self.strata.iter().map(|s| s.sample_size).sum()
    }

    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }

    pub fn stratum_sizes(&self) -> Vec<usize> {
        self.strata.iter().map(|s| s.units.len()).collect()
    }

    pub fn allocation(&self) -> Vec<usize> {
        self.strata.iter().map(|s| s.sample_size).collect()
    }

    pub fn stratum_of(&self, k: usize) -> usize {
        self.labels[k]
    }

    pub fn inclusion_probabilities(&self) -> InclusionProbabilities {
        inclusion_probabilities(self)
    }

    /// Draw one sample: independent SRSWOR in every stratum.
    pub fn draw(&self, stream: &RngStream) -> Result<SampleDraw> {
        let mut rng = stream.rng();
        let mut units = Vec::with_capacity(self.sample_size());
        for s in &self.strata {
            let mut pool = s.units.clone();
            partial_shuffle(&mut pool, s.sample_size, &mut rng);
            units.extend_from_slice(&pool[..s.sample_size]);
        }
        units.sort_unstable();
        Ok(SampleDraw { units, population_size: self.population_size })
    }

    /// Every possible sample with its probability. Only for tiny populations.
    pub fn enumerate_samples(&self) -> Result<Vec<(SampleDraw, f64)>> {
        let mut count: f64 = 1.0;
        for s in &self.strata {
            count *= binomial(s.units.len(), s.sample_size);
        }
        if count > 1e6 {
            return contract(format!("design has {count:.0} samples, too many to enumerate"));
        }
        let per_stratum: Vec<Vec<Vec<usize>>> =
            self.strata.iter().map(|s| combinations(&s.units, s.sample_size)).collect();
        let prob = 1.0 / count;
        let mut out = vec![(Vec::new(), prob)];
        for options in &per_stratum {
            let mut next = Vec::with_capacity(out.len() * options.len());
            for (partial, p) in &out {
                for choice in options {
                    let mut u: Vec<usize> = partial.clone();
                    u.extend_from_slice(choice);
                    next.push((u, *p));
                }
            }
            out = next;
        }
        Ok(out
            .into_iter()
            .map(|(mut units, p)| {
                units.sort_unstable();
                (SampleDraw { units, population_size: self.population_size }, p)
            })
            .collect())
    }
}

fn partial_shuffle<R: Rng>(pool: &mut [usize], n: usize, rng: &mut R) {
    let len = pool.len();
    for i in 0..n.min(len) {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// SRSWOR of size `n` from `0..N` by a partial Fisher-Yates shuffle.
pub fn srswor_draw(population_size: usize, n: usize, stream: &RngStream) -> Result<SampleDraw> {
    SamplingDesign::srswor(population_size, n)?.draw(stream)
}

pub fn stratified_draw(design: &SamplingDesign, stream: &RngStream) -> Result<SampleDraw> {
    design.draw(stream)
}

/// Selected units, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDraw {
    units: Vec<usize>,
    population_size: usize,
}

impl SampleDraw {
    pub fn new(mut units: Vec<usize>, population_size: usize) -> Result<Self> {
        units.sort_unstable();
        if units.windows(2).any(|w| w[0] == w[1]) {
            return contract("sample contains repeated units");
        }
        if units.last().is_some_and(|&k| k >= population_size) {
            return contract("sample unit out of range");
        }
        Ok(Self { units, population_size })
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct StratumRates {
    size: usize,
    sample_size: usize,
    pi: f64,
    inv_pi: f64,
    pi_pair: f64,
}

/// First- and second-order inclusion probabilities of a stratified (or
/// one-stratum) SRSWOR design, evaluated on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionProbabilities {
    labels: Arc<Vec<usize>>,
    strata: Vec<StratumRates>,
}

pub fn inclusion_probabilities(design: &SamplingDesign) -> InclusionProbabilities {
    let strata = design
        .strata
        .iter()
        .map(|s| {
            let big = s.units.len() as f64;
            let small = s.sample_size as f64;
            let pi_pair = if s.units.len() > 1 {
                small * (small - 1.0) / (big * (big - 1.0))
            } else {
                0.0
            };
            StratumRates {
                size: s.units.len(),
                sample_size: s.sample_size,
                pi: small / big,
                inv_pi: big / small,
                pi_pair,
            }
        })
        .collect();
    InclusionProbabilities { labels: Arc::clone(&design.labels), strata }
}

impl InclusionProbabilities {
    pub fn population_size(&self) -> usize {
        self.labels.len()
    }

    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }

    pub fn stratum(&self, k: usize) -> usize {
        self.labels[k]
    }

    /// `(N_g, n_g)` of stratum `g`.
    pub fn stratum_sizes(&self, g: usize) -> (usize, usize) {
        (self.strata[g].size, self.strata[g].sample_size)
    }

    /// `pi_k`.
    pub fn pi(&self, k: usize) -> f64 {
        self.strata[self.labels[k]].pi
    }

    /// `1 / pi_k`, computed as `N_g / n_g`.
    pub fn inverse_pi(&self, k: usize) -> f64 {
        self.strata[self.labels[k]].inv_pi
    }

    /// `pi_kl`, with `pi_kk = pi_k`.
    pub fn pi_pair(&self, k: usize, l: usize) -> f64 {
        if k == l {
            return self.pi(k);
        }
        let (gk, gl) = (self.labels[k], self.labels[l]);
        if gk == gl {
            self.strata[gk].pi_pair
        } else {
            self.strata[gk].pi * self.strata[gl].pi
        }
    }

    /// `Delta_kl = pi_kl - pi_k pi_l`.
    pub fn delta(&self, k: usize, l: usize) -> f64 {
        if k == l {
            let p = self.pi(k);
            return p * (1.0 - p);
        }
        let (gk, gl) = (self.labels[k], self.labels[l]);
        if gk != gl {
            return 0.0;
        }
        let s = &self.strata[gk];
        s.pi_pair - s.pi * s.pi
    }

    /// Sum of first-order probabilities, the expected (and fixed) sample size.
    pub fn expected_sample_size(&self) -> f64 {
        self.strata.iter().map(|s| s.size as f64 * s.pi).sum()
    }

    /// Per-stratum `(a_g, b_g)` with `a_g = Delta_kl / (pi_kl pi_k pi_l)` for
    /// distinct units of stratum `g` and `b_g = (1 - pi_k) / pi_k^2` on the
    /// diagonal. `a_g` is `None` when the stratum has fewer than two sampled units.
    pub(crate) fn ht_covariance_coefficients(&self, g: usize) -> (Option<f64>, f64) {
        let s = &self.strata[g];
        let diag = (1.0 - s.pi) * s.inv_pi * s.inv_pi;
        let off = (s.sample_size >= 2).then(|| {
            let delta = s.pi_pair - s.pi * s.pi;
            delta / s.pi_pair * s.inv_pi * s.inv_pi
        });
        (off, diag)
    }
}

/// Strata from quantiles of the unit totals `int_0^T X_k(t) dt`.
///
/// With cut orders `p_1 < ... < p_{H-1}`, unit `k` goes to stratum `g` when
/// its total lies in `(q_{p_{g-1}}, q_{p_g}]`; quantiles are type-1 order
/// statistics of the totals sorted by value then unit index. Empty strata are
/// an error.
pub fn stratify_by_total(pop: &CurvePopulation, cut_probs: &[f64]) -> Result<StratumAssignment> {
    if cut_probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return config(format!("stratum cut orders must lie in (0,1), got {cut_probs:?}"));
    }
    if cut_probs.windows(2).any(|w| w[1] <= w[0]) {
        return config(format!("stratum cut orders must be strictly increasing, got {cut_probs:?}"));
    }
    let totals = pop.totals()?;
    stratify_values(&totals, cut_probs)
}

pub(crate) fn stratify_values(totals: &[f64], cut_probs: &[f64]) -> Result<StratumAssignment> {
    let n = totals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(a.cmp(&b)));
    let cuts: Vec<f64> = cut_probs
        .iter()
        .map(|&p| totals[order[crate::numerics::quantile_rank(p, n) - 1]])
        .collect();
    let labels: Vec<usize> =
        totals.iter().map(|&x| cuts.iter().take_while(|&&q| x > q).count()).collect();
    let assignment = StratumAssignment::new(labels, cut_probs.len() + 1)?;
    if let Some(g) = assignment.sizes().iter().position(|&s| s == 0) {
        return Err(Error::Config(format!(
            "stratum {g} is empty (tied totals collapse the quantile cuts {cuts:?})"
        )));
    }
    Ok(assignment)
}

/// `S_g = sqrt((N_g - 1)^{-1} sum_{k in U_g} int (X_k - mu_g)^2 dt)`.
pub fn stratum_dispersion(pop: &CurvePopulation, strata: &StratumAssignment) -> Result<Vec<f64>> {
    if strata.population_size() != pop.len() {
        return contract("stratum assignment does not cover the population");
    }
    let d = pop.grid().len();
    let sizes = strata.sizes();
    let mut means = vec![vec![0.0; d]; strata.count()];
    for (k, row) in pop.curves().iter_rows().enumerate() {
        means[strata.label(k)].iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    for (m, &s) in means.iter_mut().zip(&sizes) {
        m.iter_mut().for_each(|v| *v /= s.max(1) as f64);
    }
    let mut ss = vec![0.0; strata.count()];
    let mut sq = vec![0.0; d];
    for (k, row) in pop.curves().iter_rows().enumerate() {
        let g = strata.label(k);
        sq.iter_mut().zip(row).zip(&means[g]).for_each(|((s, x), m)| *s = (x - m) * (x - m));
        ss[g] += trapezoid(&sq, pop.grid())?;
    }
    Ok(ss
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| if n > 1 { (s / (n - 1) as f64).sqrt() } else { 0.0 })
        .collect())
}

/// `sum_g N_g^2 (1/n_g - 1/N_g) S_g^2`, the integrated HT variance objective
/// (up to the `N^{-2}` factor).
pub fn allocation_objective(sizes: &[usize], dispersion: &[f64], allocation: &[usize]) -> f64 {
    sizes
        .iter()
        .zip(dispersion)
        .zip(allocation)
        .map(|((&big, &s), &small)| {
            let big = big as f64;
            big * big * (1.0 / small as f64 - 1.0 / big) * s * s
        })
        .sum()
}

/// Neyman-type allocation of `n` sample units over the strata.
///
/// Minimizes [`allocation_objective`] over integer allocations with
/// `1 <= n_g <= N_g` by marginal-gain (greedy) allocation, which is exact for
/// this separable convex objective; ties go to the lower stratum index.
pub fn neyman_allocation(pop: &CurvePopulation, strata: &StratumAssignment, n: usize) -> Result<Vec<usize>> {
    let dispersion = stratum_dispersion(pop, strata)?;
    allocate(&strata.sizes(), &dispersion, n)
}

pub fn allocate(sizes: &[usize], dispersion: &[f64], n: usize) -> Result<Vec<usize>> {
    let h = sizes.len();
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return config(format!("stratum {g} is empty"));
    }
    if n < h {
        return config(format!("sample size {n} smaller than the number of strata {h}"));
    }
    let total: usize = sizes.iter().sum();
    if n > total {
        return config(format!("sample size {n} exceeds population size {total}"));
    }
    let weight: Vec<f64> = sizes.iter().zip(dispersion).map(|(&b, s)| (b as f64 * s).powi(2)).collect();
    let mut alloc = vec![1usize; h];
    for _ in h..n {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..h {
            if alloc[g] >= sizes[g] {
                continue;
            }
            let m = alloc[g] as f64;
            let gain = weight[g] / (m * (m + 1.0));
            if best.is_none_or(|(_, b)| gain > b) {
                best = Some((g, gain));
            }
        }
        let (g, _) = best.expect("capacity checked above");
        alloc[g] += 1;
    }
    Ok(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::CurveMatrix;
    use crate::numerics::TimeGrid;
    use std::collections::HashMap;

    /// Membership frequencies over all enumerated samples.
    fn enumerate_pi(design: &SamplingDesign) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = design.population_size();
        let mut pi = vec![0.0; n];
        let mut pair = vec![vec![0.0; n]; n];
        for (s, p) in design.enumerate_samples().unwrap() {
            for &k in s.units() {
                pi[k] += p;
                for &l in s.units() {
                    pair[k][l] += p;
                }
            }
        }
        (pi, pair)
    }

    fn check_against_enumeration(design: &SamplingDesign) {
        let probs = design.inclusion_probabilities();
        let (pi, pair) = enumerate_pi(design);
        let n = design.population_size();
        for k in 0..n {
            assert!((probs.pi(k) - pi[k]).abs() < 1e-12);
            for l in 0..n {
                assert!((probs.pi_pair(k, l) - pair[k][l]).abs() < 1e-12, "pi_{k}{l}");
                let delta = pair[k][l] - pi[k] * pi[l];
                assert!((probs.delta(k, l) - delta).abs() < 1e-12, "delta_{k}{l}");
            }
        }
    }

    #[test]
    fn srswor_four_choose_two() {
        let design = SamplingDesign::srswor(4, 2).unwrap();
        let probs = design.inclusion_probabilities();
        assert_eq!(design.enumerate_samples().unwrap().len(), 6);
        assert!((probs.pi(0) - 0.5).abs() < 1e-15);
        assert!((probs.pi_pair(0, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert!((probs.delta(0, 1) + 1.0 / 12.0).abs() < 1e-15);
        check_against_enumeration(&design);
    }

    #[test]
    fn closed_forms_match_enumeration_up_to_eight_units() {
        for big in 1..=8 {
            for small in 1..=big {
                check_against_enumeration(&SamplingDesign::srswor(big, small).unwrap());
            }
        }
        let a = StratumAssignment::new(vec![0, 1, 0, 2, 1, 2, 0, 1], 3).unwrap();
        for alloc in [[1, 1, 1], [2, 3, 1], [3, 2, 2], [1, 2, 2]] {
            check_against_enumeration(&SamplingDesign::stratified(&a, &alloc).unwrap());
        }
    }

    #[test]
    fn census_has_zero_delta() {
        let design = SamplingDesign::srswor(5, 5).unwrap();
        let probs = design.inclusion_probabilities();
        for k in 0..5 {
            assert_eq!(probs.pi(k), 1.0);
            for l in 0..5 {
                assert_eq!(probs.delta(k, l), 0.0);
            }
        }
        assert_eq!(design.draw(&RngStream::new(0, 0)).unwrap().units(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_by_two_strata() {
        let a = StratumAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let design = SamplingDesign::stratified(&a, &[1, 1]).unwrap();
        let probs = design.inclusion_probabilities();
        assert_eq!(probs.pi_pair(0, 2), 0.25);
        assert_eq!(probs.delta(0, 2), 0.0);
        assert_eq!(probs.pi_pair(0, 1), 0.0);
        assert_eq!(probs.delta(0, 1), -0.25);
        check_against_enumeration(&design);
    }

    #[test]
    fn design_invariants() {
        let a = StratumAssignment::new((0..30).map(|k| k % 3).collect(), 3).unwrap();
        for design in [
            SamplingDesign::srswor(30, 7).unwrap(),
            SamplingDesign::stratified(&a, &[2, 5, 10]).unwrap(),
        ] {
            let probs = design.inclusion_probabilities();
            let n = design.sample_size() as f64;
            assert!((probs.expected_sample_size() - n).abs() < 1e-12);
            for k in 0..30 {
                for l in 0..30 {
                    if k != l {
                        let same = design.stratum_of(k) == design.stratum_of(l);
                        if same {
                            assert!(probs.delta(k, l) <= 0.0);
                        } else {
                            assert_eq!(probs.delta(k, l), 0.0);
                        }
                        assert_eq!(probs.pi_pair(k, l), probs.pi_pair(l, k));
                    }
                }
            }
            for i in 0..20 {
                let draw = design.draw(&RngStream::new(3, i)).unwrap();
                assert_eq!(draw.len(), design.sample_size());
                let inv: f64 = draw.units().iter().map(|&k| probs.inverse_pi(k)).sum();
                assert!((inv - 30.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn srswor_errors_and_determinism() {
        assert!(srswor_draw(3, 4, &RngStream::new(0, 0)).is_err());
        assert!(srswor_draw(3, 0, &RngStream::new(0, 0)).is_err());
        let s = RngStream::new(10, 2);
        assert_eq!(srswor_draw(50, 10, &s).unwrap(), srswor_draw(50, 10, &s).unwrap());
        assert_eq!(srswor_draw(6, 6, &s).unwrap().units(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn srswor_uniform_over_subsets() {
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let m = 100_000;
        for i in 0..m {
            let d = srswor_draw(4, 2, &RngStream::new(17, i)).unwrap();
            *counts.entry(d.units().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (s, c) in counts {
            let f = c as f64 / m as f64;
            assert!((f - 1.0 / 6.0).abs() < 0.01, "{s:?}: {f}");
        }
    }

    #[test]
    fn stratified_uniform_over_outcomes_and_census() {
        let a = StratumAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        let design = SamplingDesign::stratified(&a, &[1, 1]).unwrap();
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let m = 100_000;
        for i in 0..m {
            let d = stratified_draw(&design, &RngStream::new(23, i)).unwrap();
            *counts.entry(d.units().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        for (s, c) in counts {
            let f = c as f64 / m as f64;
            assert!((f - 0.25).abs() < 0.01, "{s:?}: {f}");
        }
        let census = SamplingDesign::stratified(&a, &[2, 2]).unwrap();
        assert_eq!(census.draw(&RngStream::new(1, 1)).unwrap().units(), &[0, 1, 2, 3]);
        let s = RngStream::new(5, 5);
        assert_eq!(design.draw(&s).unwrap(), design.draw(&s).unwrap());
    }

    #[test]
    fn empirical_inclusion_frequencies() {
        let a = StratumAssignment::new((0..12).map(|k| usize::from(k >= 8)).collect(), 2).unwrap();
        let design = SamplingDesign::stratified(&a, &[3, 2]).unwrap();
        let probs = design.inclusion_probabilities();
        let m = 100_000u64;
        let mut hits = [0usize; 12];
        for i in 0..m {
            for &k in design.draw(&RngStream::new(31, i)).unwrap().units() {
                hits[k] += 1;
            }
        }
        for k in 0..12 {
            let p = probs.pi(k);
            let f = hits[k] as f64 / m as f64;
            assert!((f - p).abs() <= 3.0 * (p * (1.0 - p) / m as f64).sqrt(), "unit {k}: {f} vs {p}");
        }
    }

    fn constant_population(levels: &[f64]) -> CurvePopulation {
        let grid = TimeGrid::uniform(3, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = levels.iter().map(|&v| vec![v; 3]).collect();
        CurvePopulation::new(grid, CurveMatrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn stratify_examples() {
        let pop = constant_population(&[3.0, 1.0, 4.0, 2.0]);
        let a = stratify_by_total(&pop, &[0.5]).unwrap();
        assert_eq!(a.members(0), vec![1, 3]);
        assert_eq!(a.members(1), vec![0, 2]);

        let flat = constant_population(&[2.0; 6]);
        assert!(matches!(stratify_by_total(&flat, &[0.5]), Err(Error::Config(_))));
        assert!(stratify_by_total(&pop, &[0.7, 0.5]).is_err());
        assert!(stratify_by_total(&pop, &[1.0]).is_err());
    }

    #[test]
    fn reference_cuts_give_reference_sizes() {
        let totals: Vec<f64> = (0..20_000).map(|k| ((k * 7919) % 20_000) as f64 * 0.37).collect();
        let a = stratify_values(&totals, &[0.5, 0.7, 0.85, 0.95]).unwrap();
        assert_eq!(a.sizes(), vec![10_000, 4_000, 3_000, 2_000, 1_000]);
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate(&[50, 50], &[2.0, 2.0], 10).unwrap(), vec![5, 5]);
        assert_eq!(allocate(&[100, 100], &[1.0, 3.0], 40).unwrap(), vec![10, 30]);
        assert!(allocate(&[10, 10, 10], &[1.0, 1.0, 1.0], 2).is_err());
        assert!(allocate(&[2, 2], &[1.0, 1.0], 5).is_err());
        // capacity clamps and redistributes
        assert_eq!(allocate(&[3, 100], &[100.0, 1.0], 20).unwrap()[0], 3);
        assert_eq!(allocate(&[3, 100], &[100.0, 1.0], 20).unwrap().iter().sum::<usize>(), 20);
    }

    #[test]
    fn allocation_is_the_exhaustive_integer_optimum() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let sizes: Vec<usize> = (0..3).map(|_| rng.random_range(4..15)).collect();
            let disp: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..5.0)).collect();
            let n = 12;
            let got = allocate(&sizes, &disp, n).unwrap();
            assert_eq!(got.iter().sum::<usize>(), n);
            let mut best = f64::INFINITY;
            for a in 1..=sizes[0].min(n) {
                for b in 1..=sizes[1].min(n - a) {
                    let c = n - a - b;
                    if c >= 1 && c <= sizes[2] {
                        best = best.min(allocation_objective(&sizes, &disp, &[a, b, c]));
                    }
                }
            }
            let obj = allocation_objective(&sizes, &disp, &got);
            assert!(obj <= best * (1.0 + 1e-12), "{got:?}: {obj} vs {best}");
        }
    }

    #[test]
    fn neyman_on_a_population() {
        let pop = constant_population(&[0.0, 1.0, 2.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
        let a = stratify_by_total(&pop, &[0.375]).unwrap();
        assert_eq!(a.sizes(), vec![3, 5]);
        let disp = stratum_dispersion(&pop, &a).unwrap();
        assert!((disp[0] - 1.0).abs() < 1e-12);
        let alloc = neyman_allocation(&pop, &a, 4).unwrap();
        assert_eq!(alloc.iter().sum::<usize>(), 4);
        assert!(alloc[1] > alloc[0]);
    }
}
