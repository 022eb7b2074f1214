//! Event systems with dependency digraphs, the mixing coefficient `φ`, the
//! declustering coefficients `Δ₁`, `Δ₂`, and the resulting bound on
//! `|Pr(∩ Ā_i) - Π Pr(Ā_i)|`.
//!
//! Samples are stored sparsely as the sorted list of events that fired, which
//! suits rare events such as extreme common-neighbour counts.

use std::ops::RangeInclusive;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{pair_count, pair_from_index, pair_index, LabelledGraph, RegularityParams, Vertex};
use crate::stats::{bootstrap, Estimate};
use crate::theory::{concentration_threshold, scaling_constants};

/// Minimum number of times a conditioning event must fire to enter `φ`.
pub const DEFAULT_MIN_HITS: usize = 50;

/// Closed neighbourhoods `D_i ∋ i` over events `0..m`.
#[derive(Clone, Debug)]
pub enum DependencyDigraph {
    Explicit { closed: Vec<Vec<usize>> },
    /// Events are the pairs of `[n]` in lexicographic order; `D_ij` holds the
    /// pairs sharing exactly one vertex with `ij`, and `ij` itself.
    PairOverlap { n: usize },
}

impl DependencyDigraph {
    /// Builds an explicit digraph; each `closed[i]` gets `i` added if absent.
    pub fn explicit(mut closed: Vec<Vec<usize>>) -> Result<Self> {
        let m = closed.len();
        for (i, d) in closed.iter_mut().enumerate() {
            if d.iter().any(|&j| j >= m) {
                return Err(invalid(format!("D_{i} references an event out of range")));
            }
            d.push(i);
            d.sort_unstable();
            d.dedup();
        }
        Ok(DependencyDigraph::Explicit { closed })
    }

    /// `D_i = {i}` for every event.
    pub fn empty(m: usize) -> Self {
        DependencyDigraph::Explicit {
            closed: (0..m).map(|i| vec![i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DependencyDigraph::Explicit { closed } => closed.len(),
            DependencyDigraph::PairOverlap { n } => pair_count(*n),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether `j ∈ D_i`.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        match self {
            DependencyDigraph::Explicit { closed } => closed[i].binary_search(&j).is_ok(),
            DependencyDigraph::PairOverlap { n } => {
                let (a, b) = pair_from_index(*n, i);
                let (c, d) = pair_from_index(*n, j);
                i == j || a == c || a == d || b == c || b == d
            }
        }
    }

    /// `D_i` in increasing order.
    pub fn closed_neighbourhood(&self, i: usize) -> Vec<usize> {
        match self {
            DependencyDigraph::Explicit { closed } => closed[i].clone(),
            DependencyDigraph::PairOverlap { n } => {
                let (a, b) = pair_from_index(*n, i);
                let mut out: Vec<usize> = (0..*n)
                    .flat_map(|k| [(a, k), (b, k)])
                    .filter(|&(x, k)| k != x)
                    .map(|(x, k)| pair_index(*n, x, k))
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            }
        }
    }

    /// Events `i` with `j ∈ D_i`.
    fn in_neighbours(&self) -> Option<Vec<Vec<usize>>> {
        match self {
            DependencyDigraph::Explicit { closed } => {
                let mut inn = vec![Vec::new(); closed.len()];
                for (i, d) in closed.iter().enumerate() {
                    for &j in d {
                        inn[j].push(i);
                    }
                }
                Some(inn)
            }
            DependencyDigraph::PairOverlap { .. } => None,
        }
    }

    /// Number of non-loop arcs `Σ |D_i \ {i}|`.
    pub fn arc_count(&self) -> usize {
        match self {
            DependencyDigraph::Explicit { closed } => closed.iter().map(|d| d.len() - 1).sum(),
            DependencyDigraph::PairOverlap { n } => pair_count(*n) * 2 * n.saturating_sub(2),
        }
    }
}

pub fn overlap_dependency_graph(n: usize) -> Result<DependencyDigraph> {
    if n < 3 {
        return Err(invalid("overlap dependency graph needs n >= 3"));
    }
    Ok(DependencyDigraph::PairOverlap { n })
}

/// Which events fired in each of a collection of samples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Occurrences {
    m: usize,
    fired: Vec<Vec<usize>>,
}

impl Occurrences {
    pub fn new(m: usize) -> Self {
        Occurrences {
            m,
            fired: Vec::new(),
        }
    }

    pub fn push(&mut self, mut fired: Vec<usize>) -> Result<()> {
        if fired.iter().any(|&e| e >= self.m) {
            return Err(invalid("event index out of range"));
        }
        fired.sort_unstable();
        fired.dedup();
        self.fired.push(fired);
        Ok(())
    }

    pub fn push_indicator(&mut self, indicator: &[bool]) -> Result<()> {
        if indicator.len() != self.m {
            return Err(invalid("indicator length differs from the event count"));
        }
        self.push(indicator.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect())
    }

    pub fn events(&self) -> usize {
        self.m
    }

    pub fn samples(&self) -> usize {
        self.fired.len()
    }

    pub fn fired(&self, s: usize) -> &[usize] {
        &self.fired[s]
    }

    /// How many samples each event fired in.
    pub fn hits(&self) -> Vec<usize> {
        let mut h = vec![0; self.m];
        for f in &self.fired {
            for &e in f {
                h[e] += 1;
            }
        }
        h
    }

    /// Empirical `Pr(A_i)`.
    pub fn marginals(&self) -> Vec<f64> {
        let s = self.samples() as f64;
        self.hits().into_iter().map(|h| h as f64 / s).collect()
    }
}

/// `A_ij = {X_ij ∈ I⁺(x) ∪ I⁻(x′)}` over all pairs in lexicographic order,
/// with open intervals `I⁺(x) = (a + bx, λ²n + √n ln n)` and
/// `I⁻(x′) = (λ²n - √n ln n, 2λ²n - a + bx′)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommonNeighbourEvents {
    pub n: usize,
    pub upper: Option<(f64, f64)>,
    pub lower: Option<(f64, f64)>,
}

/// `x = +∞` empties `I⁺` and `x′ = -∞` empties `I⁻`.
pub fn event_system_common_neighbours(
    x: f64,
    x_prime: f64,
    params: &RegularityParams,
) -> Result<CommonNeighbourEvents> {
    let s = scaling_constants(params)?;
    let n = params.n as f64;
    let centre = params.lambda().powi(2) * n;
    let w = concentration_threshold(params.n);
    let interval = |lo: f64, hi: f64, empty: bool| -> Result<Option<(f64, f64)>> {
        if empty {
            return Ok(None);
        }
        if hi <= lo {
            return Err(invalid(format!("degenerate interval ({lo}, {hi})")));
        }
        Ok(Some((lo, hi)))
    };
    let upper = interval(s.a + s.b * x, centre + w, x == f64::INFINITY)?;
    let lower = interval(
        centre - w,
        2.0 * centre - s.a + s.b * x_prime,
        x_prime == f64::NEG_INFINITY,
    )?;
    Ok(CommonNeighbourEvents {
        n: params.n,
        upper,
        lower,
    })
}

impl CommonNeighbourEvents {
    pub fn len(&self) -> usize {
        pair_count(self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, value: u32) -> bool {
        let v = value as f64;
        let inside = |iv: Option<(f64, f64)>| iv.is_some_and(|(lo, hi)| lo < v && v < hi);
        inside(self.upper) || inside(self.lower)
    }

    /// Indices of the pairs whose event fires in `g`.
    pub fn fired(&self, g: &LabelledGraph) -> Vec<usize> {
        let n = self.n;
        let mut out = Vec::new();
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                if self.contains(g.common_neighbours_unchecked(i, j)) {
                    out.push(idx);
                }
                idx += 1;
            }
        }
        out
    }

    pub fn indicator(&self, g: &LabelledGraph) -> Vec<bool> {
        let mut v = vec![false; self.len()];
        for k in self.fired(g) {
            v[k] = true;
        }
        v
    }
}

/// Per-sample summary that makes bootstrap resamples cheap.
struct PhiSample {
    /// `U_i` holds for `i > first` except at `holes`.
    first: Option<usize>,
    holes: Vec<usize>,
    /// `(i, U_i)` for the events that fired.
    conditional: Vec<(usize, bool)>,
}

/// Whether some fired event `j < i` lies outside `D_i`.
fn union_holds(dep: &DependencyDigraph, fired: &[usize], i: usize) -> bool {
    fired.iter().take_while(|&&j| j < i).any(|&j| !dep.contains(i, j))
}

fn phi_samples(occ: &Occurrences, dep: &DependencyDigraph) -> Vec<PhiSample> {
    let inn = dep.in_neighbours();
    occ.fired
        .iter()
        .map(|fired| {
            let Some(&first) = fired.first() else {
                return PhiSample {
                    first: None,
                    holes: Vec::new(),
                    conditional: Vec::new(),
                };
            };
            // For i > first, U_i can only fail when first ∈ D_i.
            let candidates: Vec<usize> = match &inn {
                Some(inn) => inn[first].clone(),
                None => dep.closed_neighbourhood(first),
            };
            let holes = candidates
                .into_iter()
                .filter(|&i| i > first && !union_holds(dep, fired, i))
                .collect();
            let conditional = fired.iter().map(|&i| (i, union_holds(dep, fired, i))).collect();
            PhiSample {
                first: Some(first),
                holes,
                conditional,
            }
        })
        .collect()
}

/// `max_i |P(U_i | A_i) - P(U_i)|` over events with at least `min_hits`
/// hits in the weighted sample.
fn phi_from(samples: &[PhiSample], weights: &[f64], m: usize, min_hits: usize) -> Option<f64> {
    let mut diff = vec![0.0f64; m + 1];
    let mut cond_hits = vec![0.0f64; m];
    let mut cond_union = vec![0.0f64; m];
    let mut total = 0.0;
    for (s, &w) in samples.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        total += w;
        if let Some(first) = s.first {
            diff[first + 1] += w;
            for &hole in &s.holes {
                diff[hole] -= w;
                diff[hole + 1] += w;
            }
        }
        for &(i, u) in &s.conditional {
            cond_hits[i] += w;
            if u {
                cond_union[i] += w;
            }
        }
    }
    let mut phi: Option<f64> = None;
    let mut running = 0.0;
    for i in 0..m {
        running += diff[i];
        if cond_hits[i] >= min_hits as f64 && cond_hits[i] > 0.0 {
            let gap = (cond_union[i] / cond_hits[i] - running / total).abs();
            phi = Some(phi.map_or(gap, |p| p.max(gap)));
        }
    }
    phi
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiEstimate {
    /// `None` when every event fired fewer than `min_hits` times.
    pub phi: Option<Estimate>,
    pub skipped_events: Vec<usize>,
}

/// Monte Carlo estimate of `φ(A, D)` under the fixed index order of events.
pub fn estimate_phi<R: Rng + ?Sized>(
    occ: &Occurrences,
    dep: &DependencyDigraph,
    min_hits: usize,
    resamples: usize,
    rng: &mut R,
) -> Result<PhiEstimate> {
    check_sizes(occ, dep)?;
    let hits = occ.hits();
    if hits.iter().all(|&h| h == 0) {
        return Err(Error::UndefinedEstimate("no event fired in any sample".into()));
    }
    let skipped_events: Vec<usize> = (0..occ.m).filter(|&i| hits[i] > 0 && hits[i] < min_hits).collect();
    let samples = phi_samples(occ, dep);
    let s = occ.samples();
    let ones = vec![1.0; s];
    if phi_from(&samples, &ones, occ.m, min_hits).is_none() {
        return Ok(PhiEstimate {
            phi: None,
            skipped_events,
        });
    }
    let mut weights = vec![0.0; s];
    let est = bootstrap(s, resamples, rng, |idx| {
        if idx.len() == s && idx.iter().enumerate().all(|(k, &v)| k == v) {
            return phi_from(&samples, &ones, occ.m, min_hits).unwrap_or(0.0);
        }
        weights.iter_mut().for_each(|w| *w = 0.0);
        idx.iter().for_each(|&k| weights[k] += 1.0);
        phi_from(&samples, &weights, occ.m, min_hits).unwrap_or(0.0)
    });
    Ok(PhiEstimate {
        phi: Some(est),
        skipped_events,
    })
}

fn check_sizes(occ: &Occurrences, dep: &DependencyDigraph) -> Result<()> {
    if occ.m != dep.len() {
        return Err(invalid(format!(
            "{} events but the dependency digraph has {} vertices",
            occ.m,
            dep.len()
        )));
    }
    if occ.samples() == 0 {
        return Err(Error::UndefinedEstimate("no samples".into()));
    }
    Ok(())
}

/// `(Δ₁, Δ₂)` from weighted samples.
fn deltas_from(occ: &Occurrences, dep: &DependencyDigraph, weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mut joint = 0.0;
    let mut hits = vec![0.0f64; occ.m];
    for (fired, &w) in occ.fired.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (a, &i) in fired.iter().enumerate() {
            hits[i] += w;
            joint += w * fired[..a].iter().filter(|&&j| dep.contains(i, j)).count() as f64;
        }
    }
    let p: Vec<f64> = hits.iter().map(|h| h / total).collect();
    let product = match dep {
        DependencyDigraph::PairOverlap { n } => {
            // Symmetric: half the sum over ordered pairs sharing one vertex.
            let n = *n;
            let mut at = vec![0.0f64; n];
            let mut k = 0;
            for a in 0..n {
                for b in a + 1..n {
                    at[a] += p[k];
                    at[b] += p[k];
                    k += 1;
                }
            }
            let mut acc = 0.0;
            let mut k = 0;
            for a in 0..n {
                for b in a + 1..n {
                    if p[k] > 0.0 {
                        acc += p[k] * (at[a] + at[b] - 2.0 * p[k]);
                    }
                    k += 1;
                }
            }
            acc / 2.0
        }
        DependencyDigraph::Explicit { closed } => closed
            .iter()
            .enumerate()
            .filter(|(i, _)| p[*i] > 0.0)
            .map(|(i, d)| p[i] * d.iter().take_while(|&&j| j < i).map(|&j| p[j]).sum::<f64>())
            .sum(),
    };
    (joint / total, product)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaEstimates {
    pub delta1: Estimate,
    pub delta2: Estimate,
}

/// Monte Carlo estimates of `Δ₁` and `Δ₂` with bootstrap intervals.
pub fn estimate_deltas<R: Rng + ?Sized>(
    occ: &Occurrences,
    dep: &DependencyDigraph,
    resamples: usize,
    rng: &mut R,
) -> Result<DeltaEstimates> {
    check_sizes(occ, dep)?;
    let s = occ.samples();
    let mut weights = vec![0.0; s];
    let mut second = Vec::with_capacity(resamples + 1);
    let delta1 = bootstrap(s, resamples, rng, |idx| {
        weights.iter_mut().for_each(|w| *w = 0.0);
        idx.iter().for_each(|&k| weights[k] += 1.0);
        let (d1, d2) = deltas_from(occ, dep, &weights);
        second.push(d2);
        d1
    });
    // The first call evaluated the full sample; the rest are resamples.
    let point = second[0];
    let mut reps = second[1..].to_vec();
    let delta2 = summarise(point, &mut reps);
    Ok(DeltaEstimates { delta1, delta2 })
}

fn summarise(value: f64, reps: &mut [f64]) -> Estimate {
    if reps.is_empty() {
        return Estimate {
            value,
            ci_low: value,
            ci_high: value,
            std_error: 0.0,
        };
    }
    let sd = if reps.len() > 1 {
        crate::stats::variance(reps).sqrt()
    } else {
        0.0
    };
    reps.sort_by(f64::total_cmp);
    let q = |p: f64| reps[((p * (reps.len() - 1) as f64).round() as usize).min(reps.len() - 1)];
    Estimate {
        value,
        ci_low: q(0.025),
        ci_high: q(0.975),
        std_error: sd,
    }
}

/// Coefficients entering the extremal bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coefficients {
    pub phi: f64,
    pub delta1: f64,
    pub delta2: f64,
}

/// `(1 - Π(1 - p_i))·φ + max{Δ₁, Δ₂}`.
pub fn extremal_bound(coeffs: &Coefficients, marginal_probs: &[f64]) -> Result<f64> {
    if marginal_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("marginal probabilities must lie in [0, 1]"));
    }
    let none: f64 = marginal_probs.iter().map(|p| 1.0 - p).product();
    Ok((1.0 - none) * coeffs.phi + coeffs.delta1.max(coeffs.delta2))
}

/// A finite joint law of `m <= 32` events, as atoms `(mask, probability)`
/// where bit `i` of `mask` says whether `A_i` occurred.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLaw {
    m: usize,
    atoms: Vec<(u32, f64)>,
}

impl JointLaw {
    pub fn new(m: usize, atoms: Vec<(u32, f64)>) -> Result<Self> {
        if m > 32 {
            return Err(invalid("at most 32 events"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.iter().any(|a| a.1 < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(invalid("atom probabilities must be non-negative and sum to 1"));
        }
        if m < 32 && atoms.iter().any(|a| a.0 >> m != 0) {
            return Err(invalid("atom mask uses bits beyond m"));
        }
        Ok(JointLaw { m, atoms })
    }

    /// Independent events with the given marginals.
    pub fn independent(probs: &[f64]) -> Result<Self> {
        let m = probs.len();
        if m > 20 {
            return Err(invalid("at most 20 independent events"));
        }
        let atoms = (0..1u32 << m)
            .map(|mask| {
                let p = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| if mask >> i & 1 == 1 { p } else { 1.0 - p })
                    .product();
                (mask, p)
            })
            .collect();
        Self::new(m, atoms)
    }

    pub fn events(&self) -> usize {
        self.m
    }

    pub fn prob<F: Fn(u32) -> bool>(&self, pred: F) -> f64 {
        self.atoms.iter().filter(|a| pred(a.0)).map(|a| a.1).sum()
    }

    pub fn marginals(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.prob(|s| s >> i & 1 == 1)).collect()
    }

    /// `|Pr(∩ Ā_i) - Π Pr(Ā_i)|`.
    pub fn discrepancy(&self) -> f64 {
        let none = self.prob(|s| s == 0);
        let product: f64 = self.marginals().iter().map(|p| 1.0 - p).product();
        (none - product).abs()
    }

    /// Exact `φ`, `Δ₁`, `Δ₂`; events with probability zero are left out of `φ`.
    pub fn coefficients(&self, dep: &DependencyDigraph) -> Result<Coefficients> {
        if dep.len() != self.m {
            return Err(invalid("dependency digraph size differs from the event count"));
        }
        let marg = self.marginals();
        let mut phi = 0.0f64;
        let (mut delta1, mut delta2) = (0.0, 0.0);
        for i in 0..self.m {
            let far: u32 = (0..i)
                .filter(|&j| !dep.contains(i, j))
                .fold(0, |acc, j| acc | 1 << j);
            if marg[i] > 0.0 {
                let both = self.prob(|s| s >> i & 1 == 1 && s & far != 0);
                let union = self.prob(|s| s & far != 0);
                phi = phi.max((both / marg[i] - union).abs());
            }
            for j in (0..i).filter(|&j| dep.contains(i, j)) {
                delta1 += self.prob(|s| s >> i & 1 == 1 && s >> j & 1 == 1);
                delta2 += marg[i] * marg[j];
            }
        }
        Ok(Coefficients { phi, delta1, delta2 })
    }
}

/// Empirical `F - F̂` at `(x, x′)`, with a bootstrap interval for the difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FComparison {
    pub f: f64,
    pub f_hat: f64,
    pub difference: Estimate,
}

/// `F` from graph extremes and `F̂` from independent-surrogate extremes, both
/// given as `(X_max, X_min)` pairs: the joint event is
/// `X_max <= a + bx` and `X_min >= 2λ²n - a + bx′`.
pub fn empirical_f_vs_fhat<R: Rng + ?Sized>(
    params: &RegularityParams,
    graph_samples: &[(u32, u32)],
    surrogate_samples: &[(u32, u32)],
    x: f64,
    x_prime: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<FComparison> {
    if graph_samples.is_empty() || surrogate_samples.is_empty() {
        return Err(invalid("both sample sets must be non-empty"));
    }
    let s = scaling_constants(params)?;
    let centre = params.lambda().powi(2) * params.n as f64;
    let hi = s.a + s.b * x;
    let lo = 2.0 * centre - s.a + s.b * x_prime;
    let inside = |&(mx, mn): &(u32, u32)| (mx as f64) <= hi && (mn as f64) >= lo;
    let g: Vec<f64> = graph_samples.iter().map(|v| f64::from(u8::from(inside(v)))).collect();
    let h: Vec<f64> = surrogate_samples.iter().map(|v| f64::from(u8::from(inside(v)))).collect();
    let f = crate::stats::mean(&g);
    let f_hat = crate::stats::mean(&h);
    let mut reps = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let a: f64 = (0..g.len()).map(|_| g[rng.random_range(0..g.len())]).sum::<f64>() / g.len() as f64;
        let b: f64 = (0..h.len()).map(|_| h[rng.random_range(0..h.len())]).sum::<f64>() / h.len() as f64;
        reps.push(a - b);
    }
    Ok(FComparison {
        f,
        f_hat,
        difference: summarise(f - f_hat, &mut reps),
    })
}

/// `P̂(X ∈ Y, X′ ∈ Y′) / (P̂(X ∈ Y)·P̂(X′ ∈ Y′))` from paired values
/// `(X_ij, X_ij′)`.
pub fn joint_ratio_estimate<R: Rng + ?Sized>(
    pairs: &[(u32, u32)],
    y: RangeInclusive<u32>,
    y_prime: RangeInclusive<u32>,
    resamples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    let ratio = |idx: &[usize]| -> Option<f64> {
        let (mut a, mut b, mut ab) = (0usize, 0usize, 0usize);
        for &k in idx {
            let (u, v) = pairs[k];
            let (iu, iv) = (y.contains(&u), y_prime.contains(&v));
            a += usize::from(iu);
            b += usize::from(iv);
            ab += usize::from(iu && iv);
        }
        if a == 0 || b == 0 {
            return None;
        }
        let s = idx.len() as f64;
        Some((ab as f64 / s) / ((a as f64 / s) * (b as f64 / s)))
    };
    let all: Vec<usize> = (0..pairs.len()).collect();
    if ratio(&all).is_none() {
        return Err(Error::UndefinedEstimate(
            "one of the events never occurred".into(),
        ));
    }
    Ok(bootstrap(pairs.len(), resamples, rng, |idx| {
        ratio(idx).unwrap_or(f64::NAN)
    }))
}

/// Paired values `(X_ij, X_ij′)` from stored graphs.
pub fn pair_values(graphs: &[LabelledGraph], i: Vertex, j: Vertex, j_prime: Vertex) -> Vec<(u32, u32)> {
    graphs
        .iter()
        .map(|g| {
            (
                g.common_neighbours_unchecked(i, j),
                g.common_neighbours_unchecked(i, j_prime),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn overlap_graph_shape() {
        let d = overlap_dependency_graph(3).unwrap();
        assert_eq!(d.closed_neighbourhood(0), vec![0, 1, 2]);
        for n in [4, 7, 12] {
            let d = overlap_dependency_graph(n).unwrap();
            for i in 0..pair_count(n) {
                let nb = d.closed_neighbourhood(i);
                assert_eq!(nb.len() - 1, 2 * (n - 2));
                for j in 0..pair_count(n) {
                    assert_eq!(nb.contains(&j), d.contains(i, j));
                }
            }
            assert_eq!(d.arc_count(), pair_count(n) * 2 * (n - 2));
        }
        assert!(overlap_dependency_graph(2).is_err());
    }

    #[test]
    fn event_system_intervals() {
        let p = RegularityParams::new(101, 50).unwrap();
        let none = event_system_common_neighbours(f64::INFINITY, f64::NEG_INFINITY, &p).unwrap();
        let g = crate::sampler::initial_regular_graph(&p).unwrap();
        assert!(none.fired(&g).is_empty());
        let ev = event_system_common_neighbours(0.0, 0.0, &p).unwrap();
        let prof = g.common_neighbour_profile().unwrap();
        let fired = ev.fired(&g);
        for k in 0..pair_count(101) {
            let (i, j) = pair_from_index(101, k);
            let v = prof.get(i, j) as f64;
            let (ul, uh) = ev.upper.unwrap();
            let (ll, lh) = ev.lower.unwrap();
            let expect = (ul < v && v < uh) || (ll < v && v < lh);
            assert_eq!(fired.contains(&k), expect);
        }
        assert!(event_system_common_neighbours(1e6, 0.0, &p).is_err());
    }

    #[test]
    fn deltas_vanish_without_dependencies() {
        let mut occ = Occurrences::new(4);
        occ.push(vec![0, 1, 3]).unwrap();
        occ.push(vec![2]).unwrap();
        let est = estimate_deltas(&occ, &DependencyDigraph::empty(4), 20, &mut rng(1)).unwrap();
        assert_eq!(est.delta1.value, 0.0);
        assert_eq!(est.delta2.value, 0.0);
    }

    #[test]
    fn deltas_match_hand_computation() {
        let dep = DependencyDigraph::explicit(vec![vec![1], vec![0, 2], vec![1]]).unwrap();
        let mut occ = Occurrences::new(3);
        for f in [vec![0, 1], vec![1, 2], vec![], vec![1]] {
            occ.push(f).unwrap();
        }
        let est = estimate_deltas(&occ, &dep, 0, &mut rng(1)).unwrap();
        // Arcs with j < i: (1,0), (2,1).
        assert!((est.delta1.value - 0.5).abs() < 1e-15);
        let (p0, p1, p2) = (0.25, 0.75, 0.25);
        assert!((est.delta2.value - (p1 * p0 + p2 * p1)).abs() < 1e-15);
    }

    fn synthetic(law: &JointLaw, samples: usize, seed: u64) -> Occurrences {
        let mut r = rng(seed);
        let cum: Vec<(u32, f64)> = law
            .atoms
            .iter()
            .scan(0.0, |acc, &(mask, p)| {
                *acc += p;
                Some((mask, *acc))
            })
            .collect();
        let mut occ = Occurrences::new(law.events());
        for _ in 0..samples {
            let u: f64 = r.random();
            let mask = cum.iter().find(|c| u < c.1).unwrap_or(cum.last().unwrap()).0;
            occ.push((0..law.events()).filter(|&i| mask >> i & 1 == 1).collect()).unwrap();
        }
        occ
    }

    #[test]
    fn phi_matches_exact_value_on_three_events() {
        // A_0 and A_2 are identical; D links nothing.
        let law = JointLaw::new(3, vec![(0b000, 0.5), (0b101, 0.3), (0b010, 0.2)]).unwrap();
        let dep = DependencyDigraph::empty(3);
        let exact = law.coefficients(&dep).unwrap();
        // i = 2: P(A_0 ∪ A_1 | A_2) = 1 against P(A_0 ∪ A_1) = 0.5.
        assert!((exact.phi - 0.5).abs() < 1e-12);
        let occ = synthetic(&law, 20_000, 3);
        let est = estimate_phi(&occ, &dep, DEFAULT_MIN_HITS, 100, &mut rng(4)).unwrap();
        let phi = est.phi.unwrap();
        assert!((phi.value - 0.5).abs() < 0.02, "{phi:?}");
        assert!(phi.ci_low <= 0.5 + 0.01 && 0.5 - 0.01 <= phi.ci_high);
    }

    #[test]
    fn phi_of_independent_events_shrinks() {
        let probs = [0.3, 0.2, 0.4, 0.25, 0.1];
        let law = JointLaw::independent(&probs).unwrap();
        let dep = DependencyDigraph::empty(5);
        assert!(law.coefficients(&dep).unwrap().phi < 1e-12);
        let est = |s: usize| {
            let occ = synthetic(&law, s, s as u64);
            estimate_phi(&occ, &dep, DEFAULT_MIN_HITS, 50, &mut rng(1))
                .unwrap()
                .phi
                .unwrap()
                .value
        };
        let (a, b, c) = (est(1_000), est(10_000), est(100_000));
        assert!(c < b && b < a, "{a} {b} {c}");
        assert!(c < 0.02);
    }

    #[test]
    fn phi_depends_on_order() {
        // Reordering the events changes which prefixes enter the union.
        let law = JointLaw::new(3, vec![(0b000, 0.4), (0b011, 0.3), (0b100, 0.3)]).unwrap();
        let dep = DependencyDigraph::empty(3);
        let a = law.coefficients(&dep).unwrap().phi;
        let swapped = JointLaw::new(3, vec![(0b000, 0.4), (0b110, 0.3), (0b001, 0.3)]).unwrap();
        let b = swapped.coefficients(&dep).unwrap().phi;
        assert!((a - 0.7).abs() < 1e-12);
        assert!((b - 0.4).abs() < 1e-12);
    }

    #[test]
    fn phi_reports_skipped_and_undefined() {
        let mut occ = Occurrences::new(3);
        occ.push(vec![1]).unwrap();
        occ.push(vec![]).unwrap();
        let est = estimate_phi(&occ, &DependencyDigraph::empty(3), 50, 10, &mut rng(0)).unwrap();
        assert!(est.phi.is_none());
        assert_eq!(est.skipped_events, vec![1]);
        let mut occ = Occurrences::new(3);
        occ.push(vec![]).unwrap();
        assert!(matches!(
            estimate_phi(&occ, &DependencyDigraph::empty(3), 50, 10, &mut rng(0)),
            Err(Error::UndefinedEstimate(_))
        ));
    }

    #[test]
    fn bound_edge_cases() {
        let zero = Coefficients { phi: 0.0, delta1: 0.0, delta2: 0.0 };
        assert_eq!(extremal_bound(&zero, &[0.2, 0.3]).unwrap(), 0.0);
        let c = Coefficients { phi: 0.4, delta1: 0.1, delta2: 0.2 };
        assert_eq!(extremal_bound(&c, &[0.0, 0.0]).unwrap(), 0.2);
        assert!(extremal_bound(&c, &[1.5]).is_err());
    }

    #[test]
    fn relabelling_events_with_their_digraph_keeps_deltas() {
        let dep = DependencyDigraph::explicit(vec![vec![1, 2], vec![0], vec![0, 3], vec![2]]).unwrap();
        let mut occ = Occurrences::new(4);
        let samples = [vec![0, 1], vec![2, 3], vec![0, 2, 3], vec![1], vec![]];
        for f in &samples {
            occ.push(f.clone()).unwrap();
        }
        // Reverse the labels: k -> 3 - k.
        let rev = |k: usize| 3 - k;
        let dep_r = DependencyDigraph::explicit(vec![vec![1], vec![3, 0], vec![3], vec![2, 1]]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(dep.contains(i, j), dep_r.contains(rev(i), rev(j)));
            }
        }
        let mut occ_r = Occurrences::new(4);
        for f in &samples {
            occ_r.push(f.iter().map(|&k| rev(k)).collect()).unwrap();
        }
        let a = estimate_deltas(&occ, &dep, 0, &mut rng(0)).unwrap();
        let b = estimate_deltas(&occ_r, &dep_r, 0, &mut rng(0)).unwrap();
        // Symmetric digraph: reversing the order swaps which endpoint is
        // earlier but keeps every unordered arc.
        assert!((a.delta1.value - b.delta1.value).abs() < 1e-15);
        assert!((a.delta2.value - b.delta2.value).abs() < 1e-15);
    }

    #[test]
    fn overlap_shortcut_matches_explicit_digraph() {
        let n = 7;
        let fast = overlap_dependency_graph(n).unwrap();
        let slow = DependencyDigraph::explicit(
            (0..pair_count(n)).map(|i| fast.closed_neighbourhood(i)).collect(),
        )
        .unwrap();
        let mut r = rng(5);
        let mut occ = Occurrences::new(pair_count(n));
        for _ in 0..40 {
            let k = r.random_range(0..5);
            occ.push((0..k).map(|_| r.random_range(0..pair_count(n))).collect()).unwrap();
        }
        let a = estimate_deltas(&occ, &fast, 0, &mut rng(0)).unwrap();
        let b = estimate_deltas(&occ, &slow, 0, &mut rng(0)).unwrap();
        assert!((a.delta1.value - b.delta1.value).abs() < 1e-12);
        assert!((a.delta2.value - b.delta2.value).abs() < 1e-12);
        assert!(a.delta2.value > 0.0);
    }

    #[test]
    fn f_vs_fhat_at_infinity() {
        let p = RegularityParams::new(101, 50).unwrap();
        let g = vec![(40, 10), (45, 12)];
        let h = vec![(41, 11)];
        let c = empirical_f_vs_fhat(&p, &g, &h, f64::INFINITY, f64::NEG_INFINITY, 50, &mut rng(0)).unwrap();
        assert_eq!((c.f, c.f_hat, c.difference.value), (1.0, 1.0, 0.0));
    }

    #[test]
    fn joint_ratio_near_certain_events() {
        let pairs: Vec<(u32, u32)> = (0..500).map(|k| (20 + k % 5, 22 + k % 3)).collect();
        let est = joint_ratio_estimate(&pairs, 0..=100, 0..=100, 50, &mut rng(0)).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(joint_ratio_estimate(&pairs, 0..=1, 0..=100, 50, &mut rng(0)).is_err());
    }
}
