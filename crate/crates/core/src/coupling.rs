//! Couplings between uniform graphs with `h` and `h ± 1` common neighbours.
//!
//! [`Coupler`] runs the bipartite coupling exactly on an explicit
//! [`BipartiteMetaGraph`]. For graphs too large to list, [`couple_step`]
//! works on the implicit meta-graph whose edges are the switchings of
//! [`enumerate_switchings`], and [`couple_to_h`] chains such steps.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{iter_bits, LabelledGraph, RegularityParams, Vertex};
use crate::oracle::all_graphs;
use crate::sampler::sample_conditional_with_rng;

/// Explicit bipartite graph between left states `0..left` and right states
/// `0..right`, optionally labelled per edge.
#[derive(Clone, Debug)]
pub struct BipartiteMetaGraph {
    left: usize,
    right: usize,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<Vertex>>,
    index: HashMap<(usize, usize), usize>,
    deg_left: Vec<usize>,
    deg_right: Vec<usize>,
}

impl BipartiteMetaGraph {
    pub fn new(left: usize, right: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(left, right, edges, None)
    }

    pub fn with_labels(
        left: usize,
        right: usize,
        edges: Vec<(usize, usize)>,
        labels: Vec<Vertex>,
    ) -> Result<Self> {
        if labels.len() != edges.len() {
            return Err(invalid("one label per edge required"));
        }
        Self::build(left, right, edges, Some(labels))
    }

    pub fn complete(left: usize, right: usize) -> Self {
        let edges = (0..left)
            .flat_map(|x| (0..right).map(move |y| (x, y)))
            .collect();
        Self::build(left, right, edges, None).expect("complete bipartite graph is valid")
    }

    fn build(
        left: usize,
        right: usize,
        edges: Vec<(usize, usize)>,
        labels: Option<Vec<Vertex>>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(edges.len());
        let mut deg_left = vec![0; left];
        let mut deg_right = vec![0; right];
        for (k, &(x, y)) in edges.iter().enumerate() {
            if x >= left || y >= right {
                return Err(invalid(format!("edge ({x},{y}) has an endpoint out of range")));
            }
            if index.insert((x, y), k).is_some() {
                return Err(invalid(format!("duplicate edge ({x},{y})")));
            }
            deg_left[x] += 1;
            deg_right[y] += 1;
        }
        Ok(BipartiteMetaGraph {
            left,
            right,
            edges,
            labels,
            index,
            deg_left,
            deg_right,
        })
    }

    pub fn left_len(&self) -> usize {
        self.left
    }

    pub fn right_len(&self) -> usize {
        self.right
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.index.contains_key(&(x, y))
    }

    pub fn label(&self, x: usize, y: usize) -> Option<Vertex> {
        let k = *self.index.get(&(x, y))?;
        self.labels.as_ref().map(|l| l[k])
    }

    pub fn deg_left(&self, x: usize) -> usize {
        self.deg_left[x]
    }

    pub fn deg_right(&self, y: usize) -> usize {
        self.deg_right[y]
    }
}

/// Left and right vertices whose degree is at least `(1-ε)` times the average.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoodSets {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

pub fn good_sets(meta: &BipartiteMetaGraph, eps: f64) -> Result<GoodSets> {
    let m = meta.edge_count() as f64;
    if m == 0.0 {
        return Err(invalid("meta-graph has no edges"));
    }
    let left = (0..meta.left)
        .filter(|&x| meta.deg_left[x] as f64 * meta.left as f64 >= (1.0 - eps) * m)
        .collect();
    let right = (0..meta.right)
        .filter(|&y| meta.deg_right[y] as f64 * meta.right as f64 >= (1.0 - eps) * m)
        .collect();
    Ok(GoodSets { left, right })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CouplingOutcome {
    pub x: usize,
    pub y: usize,
    pub in_d: bool,
    pub label: Option<Vertex>,
}

/// Reusable sampler for the coupling on a fixed meta-graph.
#[derive(Clone, Debug)]
pub struct Coupler<'a> {
    meta: &'a BipartiteMetaGraph,
    good: GoodSets,
    good_left: Vec<bool>,
    good_right: Vec<bool>,
    bad_left: Vec<usize>,
    bad_right: Vec<usize>,
    eps: f64,
}

impl<'a> Coupler<'a> {
    pub fn new(meta: &'a BipartiteMetaGraph, eps: f64, delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) || !(0.0..1.0).contains(&delta) {
            return Err(invalid("eps and delta must lie in [0, 1)"));
        }
        let good = good_sets(meta, eps)?;
        let delta_s = 1.0 - good.left.len() as f64 / meta.left as f64;
        let delta_t = 1.0 - good.right.len() as f64 / meta.right as f64;
        if delta_s > delta || delta_t > delta {
            return Err(Error::GoodSetPrecondition {
                delta_s,
                delta_t,
                delta,
            });
        }
        let mut good_left = vec![false; meta.left];
        good.left.iter().for_each(|&x| good_left[x] = true);
        let mut good_right = vec![false; meta.right];
        good.right.iter().for_each(|&y| good_right[y] = true);
        let bad_left = (0..meta.left).filter(|&x| !good_left[x]).collect();
        let bad_right = (0..meta.right).filter(|&y| !good_right[y]).collect();
        Ok(Coupler {
            meta,
            good,
            good_left,
            good_right,
            bad_left,
            bad_right,
            eps,
        })
    }

    pub fn good_sets(&self) -> &GoodSets {
        &self.good
    }

    /// Acceptance probability for a left endpoint in the good set.
    pub fn left_acceptance(&self, x: usize) -> f64 {
        let m = self.meta.edge_count() as f64;
        (1.0 - self.eps) * m / (self.meta.left as f64 * self.meta.deg_left[x] as f64)
    }

    pub fn right_acceptance(&self, y: usize) -> f64 {
        let m = self.meta.edge_count() as f64;
        (1.0 - self.eps) * m / (self.meta.right as f64 * self.meta.deg_right[y] as f64)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CouplingOutcome {
        let meta = self.meta;
        let (x_hat, y_hat) = meta.edges[rng.random_range(0..meta.edges.len())];
        let x_prime = self.good.left[rng.random_range(0..self.good.left.len())];
        let y_prime = self.good.right[rng.random_range(0..self.good.right.len())];

        let x_tilde = if self.good_left[x_hat] {
            let q = self.left_acceptance(x_hat);
            debug_assert!(q <= 1.0 + 1e-12);
            if rng.random_bool(q.min(1.0)) {
                x_hat
            } else {
                x_prime
            }
        } else {
            x_prime
        };
        let y_tilde = if self.good_right[y_hat] {
            let q = self.right_acceptance(y_hat);
            debug_assert!(q <= 1.0 + 1e-12);
            if rng.random_bool(q.min(1.0)) {
                y_hat
            } else {
                y_prime
            }
        } else {
            y_prime
        };

        let x = finish(&self.good.left, &self.bad_left, meta.left, x_tilde, rng);
        let y = finish(&self.good.right, &self.bad_right, meta.right, y_tilde, rng);
        let in_d = meta.contains(x, y);
        CouplingOutcome {
            x,
            y,
            in_d,
            label: meta.label(x, y),
        }
    }
}

/// Keeps the good-set sample with probability `|good|/|all|`, otherwise
/// draws uniformly from the complement.
fn finish<R: Rng + ?Sized>(good: &[usize], bad: &[usize], total: usize, tilde: usize, rng: &mut R) -> usize {
    if bad.is_empty() || rng.random_bool(good.len() as f64 / total as f64) {
        tilde
    } else {
        bad[rng.random_range(0..bad.len())]
    }
}

/// One draw of the coupling on `meta`.
pub fn couple<R: Rng + ?Sized>(
    meta: &BipartiteMetaGraph,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<CouplingOutcome> {
    Ok(Coupler::new(meta, eps, delta)?.sample(rng))
}

/// Upper bound on `Pr(XY ∉ D)`.
pub fn miss_bound(eps: f64, delta: f64) -> f64 {
    2.0 * eps + 4.0 * delta
}

/// Upper bound on `Pr(X = x, Y = y)` for `xy ∈ D`.
pub fn joint_cap(meta: &BipartiteMetaGraph, delta: f64) -> f64 {
    1.0 / meta.edge_count() as f64
        + 2.0 / ((1.0 - delta) * meta.left as f64 * meta.right as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// From `h` to `h + 1` common neighbours.
    Up,
    /// From `h` to `h - 1` common neighbours.
    Down,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

/// Vertices `u, v, w` of a switching that changes `X_ij` by one.
///
/// Up, from `G` to `G'`: `iu, jv, uw ∈ G` and `ju, iv, vw ∉ G`; the switching
/// removes `jv, uw` and adds `uj, vw`. Down is the inverse move, so the same
/// triple read in the other direction undoes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SwitchingTriple {
    pub u: Vertex,
    pub v: Vertex,
    pub w: Vertex,
}

struct Masks {
    words: usize,
    last: u64,
}

impl Masks {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        let rem = n % 64;
        Masks {
            words,
            last: if rem == 0 { !0 } else { (1u64 << rem) - 1 },
        }
    }

    fn clear(bits: &mut [u64], v: Vertex) {
        bits[v / 64] &= !(1u64 << (v % 64));
    }
}

/// Candidate `(u, v)` sets for the given direction.
fn role_sets(g: &LabelledGraph, i: Vertex, j: Vertex, dir: Direction) -> (Vec<u64>, Vec<u64>) {
    let masks = Masks::new(g.n());
    let (ri, rj) = (g.row(i), g.row(j));
    let mut us = vec![0u64; masks.words];
    let mut vs = vec![0u64; masks.words];
    for k in 0..masks.words {
        let full = if k + 1 == masks.words { masks.last } else { !0 };
        match dir {
            Direction::Up => {
                us[k] = ri[k] & !rj[k];
                vs[k] = rj[k] & !ri[k];
            }
            Direction::Down => {
                us[k] = ri[k] & rj[k];
                vs[k] = !ri[k] & !rj[k] & full;
            }
        }
    }
    for bits in [&mut us, &mut vs] {
        Masks::clear(bits, i);
        Masks::clear(bits, j);
    }
    (us, vs)
}

/// `w` candidates for a fixed `(u, v)`.
fn w_set(g: &LabelledGraph, i: Vertex, j: Vertex, u: Vertex, v: Vertex, dir: Direction, out: &mut [u64]) {
    let (ru, rv) = (g.row(u), g.row(v));
    for k in 0..out.len() {
        out[k] = match dir {
            Direction::Up => ru[k] & !rv[k],
            Direction::Down => rv[k] & !ru[k],
        };
    }
    for x in [i, j, u, v] {
        Masks::clear(out, x);
    }
}

/// Every switching of the given direction available at `g`.
pub fn enumerate_switchings(
    g: &LabelledGraph,
    i: Vertex,
    j: Vertex,
    dir: Direction,
) -> Vec<SwitchingTriple> {
    let (us, vs) = role_sets(g, i, j, dir);
    let mut ws = vec![0u64; g.words()];
    let mut out = Vec::new();
    for u in iter_bits(&us) {
        for v in iter_bits(&vs) {
            w_set(g, i, j, u, v, dir, &mut ws);
            out.extend(iter_bits(&ws).map(|w| SwitchingTriple { u, v, w }));
        }
    }
    out
}

/// Number of switchings available at `g`, i.e. its degree in the meta-graph.
pub fn count_switchings(g: &LabelledGraph, i: Vertex, j: Vertex, dir: Direction) -> u64 {
    let (us, vs) = role_sets(g, i, j, dir);
    let mut ws = vec![0u64; g.words()];
    let mut total = 0u64;
    for u in iter_bits(&us) {
        for v in iter_bits(&vs) {
            w_set(g, i, j, u, v, dir, &mut ws);
            total += ws.iter().map(|x| x.count_ones() as u64).sum::<u64>();
        }
    }
    total
}

/// Applies a triple returned by [`enumerate_switchings`] for the same
/// `(g, i, j, dir)`.
pub fn apply_switching(g: &mut LabelledGraph, j: Vertex, t: SwitchingTriple, dir: Direction) {
    let SwitchingTriple { u, v, w } = t;
    match dir {
        Direction::Up => {
            g.remove_edge(j, v);
            g.remove_edge(u, w);
            g.add_edge(u, j);
            g.add_edge(v, w);
        }
        Direction::Down => {
            g.remove_edge(u, j);
            g.remove_edge(v, w);
            g.add_edge(j, v);
            g.add_edge(u, w);
        }
    }
}

/// All switchings from `g` together with the graphs they produce.
pub fn h_switchings(
    g: &LabelledGraph,
    i: Vertex,
    j: Vertex,
    dir: Direction,
) -> Vec<(SwitchingTriple, LabelledGraph)> {
    enumerate_switchings(g, i, j, dir)
        .into_iter()
        .map(|t| {
            let mut h = g.clone();
            apply_switching(&mut h, j, t, dir);
            (t, h)
        })
        .collect()
}

/// Uniformly random switching, or `None` when there is none.
pub fn random_switching<R: Rng + ?Sized>(
    g: &LabelledGraph,
    i: Vertex,
    j: Vertex,
    dir: Direction,
    rng: &mut R,
) -> Option<SwitchingTriple> {
    let all = enumerate_switchings(g, i, j, dir);
    if all.is_empty() {
        None
    } else {
        Some(all[rng.random_range(0..all.len())])
    }
}

/// The meta-graph between `S^h` (left) and `S^{h+1}` (right) for tiny `n`,
/// with every edge labelled by its `w`.
#[derive(Clone, Debug)]
pub struct SwitchingMetaGraph {
    pub left: Vec<LabelledGraph>,
    pub right: Vec<LabelledGraph>,
    pub meta: BipartiteMetaGraph,
}

pub fn switching_meta_graph(
    params: &RegularityParams,
    i: Vertex,
    j: Vertex,
    h: u32,
) -> Result<SwitchingMetaGraph> {
    let ds = crate::graph::DegreeSequence::regular(params.n, params.d)?;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for g in all_graphs(&ds)? {
        let x = g.common_neighbours(i, j)?;
        if x == h {
            left.push(g);
        } else if x == h + 1 {
            right.push(g);
        }
    }
    let right_index: HashMap<&LabelledGraph, usize> =
        right.iter().enumerate().map(|(k, g)| (g, k)).collect();
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    for (x, g) in left.iter().enumerate() {
        for (t, g2) in h_switchings(g, i, j, Direction::Up) {
            edges.push((x, right_index[&g2]));
            labels.push(t.w);
        }
    }
    let meta = BipartiteMetaGraph::with_labels(left.len(), right.len(), edges, labels)?;
    Ok(SwitchingMetaGraph { left, right, meta })
}

/// Tuning of the implicit coupling step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepConfig {
    pub eps: f64,
    /// Average meta-graph degree `D̄`.
    pub mean_degree: f64,
    /// Burn-in of the restricted chain used for fallback resampling.
    pub fallback_burn_in: u64,
}

impl StepConfig {
    /// `ε = ln n / n`, mean degree `λ³(1-λ)³n³`, fallback burn-in as for
    /// the uniform sampler.
    pub fn for_params(params: &RegularityParams) -> Self {
        let n = params.n as f64;
        let lam = params.lambda();
        StepConfig {
            eps: n.ln() / n,
            mean_degree: (lam * (1.0 - lam)).powi(3) * n.powi(3),
            fallback_burn_in: crate::sampler::default_burn_in(params),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub graph: LabelledGraph,
    pub triple: Option<SwitchingTriple>,
    /// `true` when the output is joined to the input by a meta-graph edge.
    pub success: bool,
}

impl StepResult {
    pub fn label(&self) -> Option<Vertex> {
        self.triple.map(|t| t.w)
    }
}

/// One coupling step from `g` towards `X_ij ± 1`.
///
/// A uniform switching is proposed and kept with probability
/// `(1-ε)·D̄ / deg(g)`, where `deg(g)` is the number of switchings available
/// at `g`. Otherwise the partner is resampled from the restricted chain.
pub fn couple_step<R: Rng + ?Sized>(
    params: &RegularityParams,
    g: &LabelledGraph,
    i: Vertex,
    j: Vertex,
    dir: Direction,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<StepResult> {
    let all = enumerate_switchings(g, i, j, dir);
    if all.is_empty() {
        return Ok(StepResult {
            graph: g.clone(),
            triple: None,
            success: false,
        });
    }
    let t = all[rng.random_range(0..all.len())];
    let accept = ((1.0 - cfg.eps) * cfg.mean_degree / all.len() as f64).min(1.0);
    if rng.random_bool(accept) {
        let mut next = g.clone();
        apply_switching(&mut next, j, t, dir);
        return Ok(StepResult {
            graph: next,
            triple: Some(t),
            success: true,
        });
    }
    let h = match dir {
        Direction::Up => g.common_neighbours_unchecked(i, j) + 1,
        Direction::Down => g.common_neighbours_unchecked(i, j) - 1,
    };
    let graph = sample_conditional_with_rng(params, i, j, h, cfg.fallback_burn_in, rng)?;
    Ok(StepResult {
        graph,
        triple: None,
        success: false,
    })
}

/// Outcome of a chained coupling run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffReport {
    pub h_start: u32,
    pub h_target: u32,
    pub steps: usize,
    pub fallbacks: usize,
    /// The whole output was drawn independently of the input.
    pub independent: bool,
    /// `|N_k Δ N'_k|` for every vertex, zero at `i` and `j`.
    pub vertex_diff: Vec<u32>,
    pub max_vertex_diff: u32,
    /// Vertices that played `u` or `v` in more than one step.
    pub role_violations: usize,
    pub labels: Vec<Vertex>,
    pub degree_violation: bool,
}

#[derive(Clone, Debug)]
pub struct CoupleRun {
    pub graph: LabelledGraph,
    pub report: DiffReport,
}

/// Chains [`couple_step`] from `X_ij(g)` to `h_target`.
///
/// Falls back to an independent conditional sample when the gap exceeds
/// `√n ln n` or a step finds no switching.
pub fn couple_to_h<R: Rng + ?Sized>(
    params: &RegularityParams,
    g: &LabelledGraph,
    i: Vertex,
    j: Vertex,
    h_target: u32,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<CoupleRun> {
    let n = params.n;
    if i >= n || j >= n || i == j {
        return Err(invalid(format!("bad vertex pair ({i},{j})")));
    }
    if h_target as usize > params.d {
        return Err(invalid(format!("h = {h_target} exceeds d = {}", params.d)));
    }
    let h_start = g.common_neighbours(i, j)?;
    let gap = (h_start as f64 - h_target as f64).abs();
    let mut independent = gap > crate::theory::concentration_threshold(n);
    let dir = if h_target > h_start {
        Direction::Up
    } else {
        Direction::Down
    };

    let mut current = g.clone();
    let mut steps = 0;
    let mut fallbacks = 0;
    let mut labels = Vec::new();
    let mut role_uses = vec![0u32; n];
    if !independent {
        while current.common_neighbours_unchecked(i, j) != h_target {
            let step = couple_step(params, &current, i, j, dir, cfg, rng)?;
            steps += 1;
            match step.triple {
                Some(t) => {
                    role_uses[t.u] += 1;
                    role_uses[t.v] += 1;
                    labels.push(t.w);
                }
                None if step.graph == current => {
                    independent = true;
                    break;
                }
                None => fallbacks += 1,
            }
            current = step.graph;
        }
    }
    if independent {
        current = sample_conditional_with_rng(params, i, j, h_target, cfg.fallback_burn_in, rng)?;
    }

    let vertex_diff: Vec<u32> = (0..n)
        .map(|k| {
            if k == i || k == j {
                return 0;
            }
            g.row(k)
                .iter()
                .zip(current.row(k))
                .map(|(a, b)| (a ^ b).count_ones())
                .sum()
        })
        .collect();
    let max_vertex_diff = vertex_diff.iter().copied().max().unwrap_or(0);
    let report = DiffReport {
        h_start,
        h_target,
        steps,
        fallbacks,
        independent,
        max_vertex_diff,
        vertex_diff,
        role_violations: role_uses.iter().filter(|&&c| c > 1).count(),
        labels,
        degree_violation: !current.is_regular(params.d),
    };
    Ok(CoupleRun {
        graph: current,
        report,
    })
}
