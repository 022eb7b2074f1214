//! Exact enumeration and counting of labelled graphs with a prescribed degree
//! sequence, and the exact probabilities derived from those counts.
//!
//! Two independent routes are provided: [`enumerate_graphs`] builds every
//! graph vertex by vertex, while [`count_graphs`] counts without building,
//! memoised over sorted multisets of remaining degrees (the number of
//! labelled realisations depends only on the multiset).

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{is_graphical, DegreeSequence, LabelledGraph, RegularityParams, Vertex};
use crate::theory::{ln_choose, Condition};

/// Largest `n` for which graphs are visited one by one.
pub const DEFAULT_ENUMERATION_CAP: usize = 10;
/// Largest `n` for count-only queries.
pub const DEFAULT_COUNT_CAP: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnumerationResult {
    pub count: BigUint,
}

/// Visits every labelled simple graph realising `ds` exactly once.
pub fn enumerate_graphs<F>(ds: &DegreeSequence, visitor: F) -> Result<EnumerationResult>
where
    F: FnMut(&LabelledGraph),
{
    enumerate_graphs_with_cap(ds, DEFAULT_ENUMERATION_CAP, visitor)
}

pub fn enumerate_graphs_with_cap<F>(
    ds: &DegreeSequence,
    cap: usize,
    mut visitor: F,
) -> Result<EnumerationResult>
where
    F: FnMut(&LabelledGraph),
{
    let n = ds.n();
    if n > cap {
        return Err(Error::AboveCap { n, cap });
    }
    let mut state = Enumeration {
        n,
        remaining: ds.degrees().to_vec(),
        graph: LabelledGraph::empty(n),
        count: 0,
    };
    if is_graphical(&state.remaining) {
        state.visit_vertex(0, &mut visitor);
    }
    Ok(EnumerationResult {
        count: BigUint::from(state.count),
    })
}

/// Collects every realisation of `ds`.
pub fn all_graphs(ds: &DegreeSequence) -> Result<Vec<LabelledGraph>> {
    let mut out = Vec::new();
    enumerate_graphs(ds, |g| out.push(g.clone()))?;
    Ok(out)
}

struct Enumeration {
    n: usize,
    remaining: Vec<usize>,
    graph: LabelledGraph,
    count: u64,
}

impl Enumeration {
    fn visit_vertex<F: FnMut(&LabelledGraph)>(&mut self, v: usize, visitor: &mut F) {
        if v == self.n {
            self.count += 1;
            visitor(&self.graph);
            return;
        }
        let need = self.remaining[v];
        let candidates: Vec<usize> = (v + 1..self.n).filter(|&u| self.remaining[u] > 0).collect();
        if need > candidates.len() {
            return;
        }
        let mut chosen = Vec::with_capacity(need);
        self.choose(v, &candidates, 0, need, &mut chosen, visitor);
    }

    fn choose<F: FnMut(&LabelledGraph)>(
        &mut self,
        v: usize,
        candidates: &[usize],
        start: usize,
        need: usize,
        chosen: &mut Vec<usize>,
        visitor: &mut F,
    ) {
        if chosen.len() == need {
            for &u in chosen.iter() {
                self.remaining[u] -= 1;
                self.graph.add_edge(v, u);
            }
            let saved = self.remaining[v];
            self.remaining[v] = 0;
            if is_graphical(&self.remaining[v + 1..]) {
                self.visit_vertex(v + 1, visitor);
            }
            self.remaining[v] = saved;
            for &u in chosen.iter() {
                self.remaining[u] += 1;
                self.graph.remove_edge(v, u);
            }
            return;
        }
        let left = need - chosen.len();
        for k in start..=candidates.len().saturating_sub(left) {
            chosen.push(candidates[k]);
            self.choose(v, candidates, k + 1, need, chosen, visitor);
            chosen.pop();
        }
    }
}

/// Number of labelled simple graphs with degree sequence `ds`.
pub fn count_graphs(ds: &DegreeSequence) -> BigUint {
    GraphCounter::default().count(ds.degrees())
}

/// Memoised counter; reusable across many related queries.
#[derive(Default)]
pub struct GraphCounter {
    memo: HashMap<Vec<u16>, BigUint>,
}

impl GraphCounter {
    pub fn count(&mut self, degrees: &[usize]) -> BigUint {
        if degrees.iter().sum::<usize>() % 2 != 0 {
            return BigUint::zero();
        }
        let mut key: Vec<u16> = degrees
            .iter()
            .filter(|&&d| d > 0)
            .map(|&d| d as u16)
            .collect();
        key.sort_unstable_by(|a, b| b.cmp(a));
        self.count_sorted(key)
    }

    fn count_sorted(&mut self, key: Vec<u16>) -> BigUint {
        if key.is_empty() {
            return BigUint::from(1u32);
        }
        if let Some(c) = self.memo.get(&key) {
            return c.clone();
        }
        let result = if !is_graphical(&key.iter().map(|&d| d as usize).collect::<Vec<_>>()) {
            BigUint::zero()
        } else {
            let first = key[0] as usize;
            // Degree classes of the remaining vertices.
            let mut classes: Vec<(u16, usize)> = Vec::new();
            for &d in &key[1..] {
                match classes.last_mut() {
                    Some((v, c)) if *v == d => *c += 1,
                    _ => classes.push((d, 1)),
                }
            }
            let mut total = BigUint::zero();
            let mut take = vec![0usize; classes.len()];
            self.distribute(&classes, 0, first, &mut take, &mut total);
            total
        };
        self.memo.insert(key, result.clone());
        result
    }

    /// Chooses how many neighbours of the first vertex fall in each class.
    fn distribute(
        &mut self,
        classes: &[(u16, usize)],
        k: usize,
        left: usize,
        take: &mut Vec<usize>,
        total: &mut BigUint,
    ) {
        if k == classes.len() {
            if left > 0 {
                return;
            }
            let mut ways = BigUint::from(1u32);
            let mut next = Vec::new();
            for (&(value, mult), &t) in classes.iter().zip(take.iter()) {
                ways *= binomial(mult, t);
                next.extend(std::iter::repeat_n(value - 1, t).filter(|&x| x > 0));
                next.extend(std::iter::repeat_n(value, mult - t));
            }
            next.sort_unstable_by(|a, b| b.cmp(a));
            let sub = self.count_sorted(next);
            *total += ways * sub;
            return;
        }
        let room: usize = classes[k..].iter().map(|c| c.1).sum();
        if room < left {
            return;
        }
        let (_, mult) = classes[k];
        for t in 0..=mult.min(left) {
            take[k] = t;
            self.distribute(classes, k + 1, left - t, take, total);
        }
        take[k] = 0;
    }
}

fn binomial(n: usize, k: usize) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub(crate) fn ratio_f64(num: &BigUint, den: &BigUint) -> f64 {
    let scale = den.bits().saturating_sub(900);
    let num = (num >> scale).to_f64().unwrap_or(f64::INFINITY);
    let den = (den >> scale).to_f64().unwrap_or(f64::INFINITY);
    num / den
}

/// Right-hand side of McKay's asymptotic count, `ln` scale.
pub fn ln_mckay_asymptotic_count(ds: &DegreeSequence) -> Result<f64> {
    let n = ds.n();
    if n < 2 {
        return Err(invalid("need at least two vertices"));
    }
    let lam = ds.mean() / (n - 1) as f64;
    if !(lam > 0.0 && lam < 1.0) {
        return Err(invalid(format!("density {lam} is degenerate")));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let entropy = lam * lam.ln() + (1.0 - lam) * (1.0 - lam).ln();
    let binoms: f64 = ds
        .degrees()
        .iter()
        .map(|&d| ln_choose(n as i64 - 1, d as i64))
        .sum();
    Ok(0.5 * 2f64.ln() + 0.25 + pairs * entropy + binoms)
}

pub fn mckay_asymptotic_count(ds: &DegreeSequence) -> Result<f64> {
    ln_mckay_asymptotic_count(ds).map(f64::exp)
}

/// Exact distribution on `support_start ..`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactDistribution {
    pub support_start: i64,
    #[serde(skip)]
    pub weights: Vec<BigUint>,
    #[serde(skip)]
    pub total: BigUint,
    pub mass: Vec<f64>,
}

impl ExactDistribution {
    pub fn from_weights(support_start: i64, weights: Vec<BigUint>) -> Result<Self> {
        let total: BigUint = weights.iter().sum();
        if total.is_zero() {
            return Err(Error::UndefinedConditional("all weights are zero".into()));
        }
        let mass = weights.iter().map(|w| ratio_f64(w, &total)).collect();
        Ok(ExactDistribution {
            support_start,
            weights,
            total,
            mass,
        })
    }

    pub fn prob(&self, h: i64) -> f64 {
        let k = h - self.support_start;
        if k < 0 {
            return 0.0;
        }
        self.mass.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> std::ops::Range<i64> {
        self.support_start..self.support_start + self.mass.len() as i64
    }

    pub fn mean(&self) -> f64 {
        self.support()
            .zip(&self.mass)
            .map(|(h, p)| h as f64 * p)
            .sum()
    }
}

fn subsets(pool: &[Vertex], k: usize) -> Vec<Vec<Vertex>> {
    fn rec(pool: &[Vertex], k: usize, start: usize, cur: &mut Vec<Vertex>, out: &mut Vec<Vec<Vertex>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for idx in start..pool.len() {
            if pool.len() - idx < k - cur.len() {
                break;
            }
            cur.push(pool[idx]);
            rec(pool, k, idx + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= pool.len() {
        rec(pool, k, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn check_count_cap(n: usize) -> Result<()> {
    if n > DEFAULT_COUNT_CAP {
        Err(Error::AboveCap {
            n,
            cap: DEFAULT_COUNT_CAP,
        })
    } else {
        Ok(())
    }
}

/// `Pr(X_ij = h | condition)` for the uniform `d`-regular graph, computed by
/// enumerating the neighbourhoods of `i` and `j` and counting completions.
pub fn exact_common_neighbour_dist(
    params: &RegularityParams,
    i: Vertex,
    j: Vertex,
    condition: Condition,
) -> Result<ExactDistribution> {
    let ds = DegreeSequence::regular(params.n, params.d)?;
    exact_common_neighbour_dist_for(&ds, i, j, condition)
}

/// As [`exact_common_neighbour_dist`] for an arbitrary degree sequence.
pub fn exact_common_neighbour_dist_for(
    ds: &DegreeSequence,
    i: Vertex,
    j: Vertex,
    condition: Condition,
) -> Result<ExactDistribution> {
    let n = ds.n();
    check_count_cap(n)?;
    if i >= n || j >= n || i == j {
        return Err(invalid(format!("bad vertex pair ({i},{j})")));
    }
    let deg = ds.degrees();
    let others: Vec<Vertex> = (0..n).filter(|&k| k != i && k != j).collect();
    let max_h = deg[i].min(deg[j]);
    let mut weights = vec![BigUint::zero(); max_h + 1];
    let mut counter = GraphCounter::default();
    let edge_states: &[bool] = match condition {
        Condition::Edge => &[true],
        Condition::NonEdge => &[false],
        Condition::Unconditional => &[true, false],
    };
    for &edge in edge_states {
        let e = usize::from(edge);
        if deg[i] < e || deg[j] < e {
            continue;
        }
        let sets_i = subsets(&others, deg[i] - e);
        let sets_j = subsets(&others, deg[j] - e);
        let mut rest = vec![0usize; others.len()];
        for a in &sets_i {
            for b in &sets_j {
                let mut ok = true;
                let mut h = 0;
                for (slot, &k) in others.iter().enumerate() {
                    let in_a = a.binary_search(&k).is_ok();
                    let in_b = b.binary_search(&k).is_ok();
                    h += usize::from(in_a && in_b);
                    let used = usize::from(in_a) + usize::from(in_b);
                    if deg[k] < used {
                        ok = false;
                        break;
                    }
                    rest[slot] = deg[k] - used;
                }
                if ok {
                    weights[h] += counter.count(&rest);
                }
            }
        }
    }
    ExactDistribution::from_weights(0, weights).map_err(|_| {
        Error::UndefinedConditional(format!(
            "no graph with this degree sequence satisfies the {} condition",
            condition.as_str()
        ))
    })
}

/// Degree sequence on `[n] \ {i}` after removing `i` with neighbourhood `set`.
fn reduced_sequence(ds: &DegreeSequence, i: Vertex, set: &[Vertex]) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(ds.n() - 1);
    for (k, &d) in ds.degrees().iter().enumerate() {
        if k == i {
            continue;
        }
        if set.contains(&k) {
            out.push(d.checked_sub(1)?);
        } else {
            out.push(d);
        }
    }
    Some(out)
}

/// Exact `Pr(N_i = set)` as `N(n-1, d') / N(n, d)`.
pub fn exact_neighbourhood_prob(ds: &DegreeSequence, i: Vertex, set: &[Vertex]) -> Result<f64> {
    let n = ds.n();
    check_count_cap(n)?;
    if i >= n || set.iter().any(|&v| v >= n || v == i) {
        return Err(invalid("neighbourhood must avoid i and lie in [n]"));
    }
    if set.len() != ds.degrees()[i] {
        return Err(invalid(format!(
            "|A| = {} differs from d_i = {}",
            set.len(),
            ds.degrees()[i]
        )));
    }
    let mut counter = GraphCounter::default();
    let total = counter.count(ds.degrees());
    if total.is_zero() {
        return Err(Error::UndefinedConditional("degree sequence is not graphical".into()));
    }
    let num = match reduced_sequence(ds, i, set) {
        Some(r) => counter.count(&r),
        None => BigUint::zero(),
    };
    Ok(ratio_f64(&num, &total))
}

/// Exact `Pr(ij ∈ G_d)`.
pub fn exact_edge_prob(ds: &DegreeSequence, i: Vertex, j: Vertex) -> Result<f64> {
    let n = ds.n();
    check_count_cap(n)?;
    if i >= n || j >= n || i == j {
        return Err(invalid(format!("bad vertex pair ({i},{j})")));
    }
    let mut counter = GraphCounter::default();
    let total = counter.count(ds.degrees());
    if total.is_zero() {
        return Err(Error::UndefinedConditional("degree sequence is not graphical".into()));
    }
    let di = ds.degrees()[i];
    if di == 0 {
        return Ok(0.0);
    }
    let others: Vec<Vertex> = (0..n).filter(|&k| k != i && k != j).collect();
    let mut with_edge = BigUint::zero();
    for mut a in subsets(&others, di - 1) {
        a.push(j);
        if let Some(r) = reduced_sequence(ds, i, &a) {
            with_edge += counter.count(&r);
        }
    }
    Ok(ratio_f64(&with_edge, &total))
}
