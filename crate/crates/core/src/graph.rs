//! Bitset-backed labelled simple graphs and the statistics computed on them.
//!
//! Every vertex owns a fixed-width row of `u64` words; the common-neighbour
//! count of a pair is the popcount of the AND of two rows.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vertex = usize;

const WORD: usize = 64;

/// Index of the unordered pair `{i, j}` in the lexicographic order
/// `(0,1), (0,2), ..., (0,n-1), (1,2), ...`.
#[inline]
pub fn pair_index(n: usize, i: Vertex, j: Vertex) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(n: usize, mut idx: usize) -> (Vertex, Vertex) {
    let mut a = 0;
    loop {
        let row = n - a - 1;
        if idx < row {
            return (a, a + 1 + idx);
        }
        idx -= row;
        a += 1;
    }
}

#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LabelledGraph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl std::fmt::Debug for LabelledGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LabelledGraph")
            .field("n", &self.n)
            .field("edges", &self.edges())
            .finish()
    }
}

/// Which pairing a double-edge switch uses for `{a,b}, {c,d}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchOrientation {
    /// `{a,c}, {b,d}`
    Straight,
    /// `{a,d}, {b,c}`
    Crossed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchOutcome {
    Applied,
    Rejected,
}

impl LabelledGraph {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(WORD).max(1);
        LabelledGraph {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn from_edges(n: usize, edges: &[(Vertex, Vertex)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u},{v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(invalid(format!("loop at vertex {u}")));
            }
            if !g.add_edge(u, v) {
                return Err(invalid(format!("duplicate edge ({u},{v})")));
            }
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for u in 0..n {
            for v in u + 1..n {
                g.add_edge(u, v);
            }
        }
        g
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::empty(n);
        for u in 0..n {
            g.add_edge(u, (u + 1) % n);
        }
        g
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for k in 0..5 {
            edges.push((k, (k + 1) % 5));
            edges.push((k, k + 5));
            edges.push((k + 5, (k + 2) % 5 + 5));
        }
        Self::from_edges(10, &edges).expect("petersen edges are valid")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of `u64` words in each adjacency row.
    #[inline]
    pub fn words(&self) -> usize {
        self.words
    }

    #[inline]
    pub fn row(&self, u: Vertex) -> &[u64] {
        &self.bits[u * self.words..(u + 1) * self.words]
    }

    #[inline]
    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.bits[u * self.words + v / WORD] >> (v % WORD) & 1 == 1
    }

    #[inline]
    fn set_bit(&mut self, u: Vertex, v: Vertex) {
        self.bits[u * self.words + v / WORD] |= 1 << (v % WORD);
    }

    #[inline]
    fn clear_bit(&mut self, u: Vertex, v: Vertex) {
        self.bits[u * self.words + v / WORD] &= !(1 << (v % WORD));
    }

    /// Adds `{u,v}`; returns false if it was already present.
    pub fn add_edge(&mut self, u: Vertex, v: Vertex) -> bool {
        debug_assert!(u != v && u < self.n && v < self.n);
        if self.has_edge(u, v) {
            return false;
        }
        self.set_bit(u, v);
        self.set_bit(v, u);
        true
    }

    /// Removes `{u,v}`; returns false if it was absent.
    pub fn remove_edge(&mut self, u: Vertex, v: Vertex) -> bool {
        if !self.has_edge(u, v) {
            return false;
        }
        self.clear_bit(u, v);
        self.clear_bit(v, u);
        true
    }

    pub fn toggle_edge(&mut self, u: Vertex, v: Vertex) {
        if !self.remove_edge(u, v) {
            self.add_edge(u, v);
        }
    }

    #[inline]
    pub fn degree(&self, u: Vertex) -> usize {
        self.row(u).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|u| self.degree(u)).collect()
    }

    pub fn degree_sequence(&self) -> DegreeSequence {
        DegreeSequence {
            degrees: self.degrees(),
        }
    }

    pub fn is_regular(&self, d: usize) -> bool {
        (0..self.n).all(|u| self.degree(u) == d)
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum::<usize>() / 2
    }

    pub fn neighbours(&self, u: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        iter_bits(self.row(u))
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(Vertex, Vertex)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.n {
            out.extend(self.neighbours(u).filter(|&v| v > u).map(|v| (u, v)));
        }
        out
    }

    /// `|N_i ∩ N_j|`.
    pub fn common_neighbours(&self, i: Vertex, j: Vertex) -> Result<u32> {
        if i >= self.n || j >= self.n {
            return Err(invalid(format!("vertex out of range: ({i},{j}) with n = {}", self.n)));
        }
        if i == j {
            return Err(invalid(format!("common neighbours of a vertex with itself ({i})")));
        }
        Ok(self.common_neighbours_unchecked(i, j))
    }

    #[inline]
    pub fn common_neighbours_unchecked(&self, i: Vertex, j: Vertex) -> u32 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn common_neighbour_profile(&self) -> Result<CommonNeighbourProfile> {
        if self.n < 2 {
            return Err(invalid("profile needs at least two vertices"));
        }
        let mut values = Vec::with_capacity(pair_count(self.n));
        for i in 0..self.n {
            for j in i + 1..self.n {
                values.push(self.common_neighbours_unchecked(i, j));
            }
        }
        Ok(CommonNeighbourProfile::from_values(self.n, values))
    }

    /// Symmetry, empty diagonal and clean padding bits.
    pub fn check_invariants(&self) -> Result<()> {
        for u in 0..self.n {
            if self.has_edge(u, u) {
                return Err(invalid(format!("loop at {u}")));
            }
            for v in self.neighbours(u) {
                if v >= self.n {
                    return Err(invalid(format!("padding bit {v} set in row {u}")));
                }
                if !self.has_edge(v, u) {
                    return Err(invalid(format!("asymmetric adjacency ({u},{v})")));
                }
            }
        }
        Ok(())
    }

    pub fn complement(&self) -> Self {
        let mut g = Self::empty(self.n);
        for u in 0..self.n {
            for v in u + 1..self.n {
                if !self.has_edge(u, v) {
                    g.add_edge(u, v);
                }
            }
        }
        g
    }

    /// Compact key identifying the edge set; only defined for `n <= 16`.
    pub fn edge_key(&self) -> Option<u128> {
        if self.n > 16 {
            return None;
        }
        let mut key = 0u128;
        for (u, v) in self.edges() {
            key |= 1 << pair_index(self.n, u, v);
        }
        Some(key)
    }

    /// Degree-preserving switch of `e1 = {a,b}` and `e2 = {c,d}`.
    ///
    /// Rejected (graph unchanged) when the edges share a vertex or either
    /// replacement edge is already present.
    pub fn double_edge_switch(
        &mut self,
        e1: (Vertex, Vertex),
        e2: (Vertex, Vertex),
        orientation: SwitchOrientation,
    ) -> Result<SwitchOutcome> {
        let (a, b) = e1;
        let (c, d) = e2;
        for &(u, v) in &[e1, e2] {
            if u >= self.n || v >= self.n || u == v || !self.has_edge(u, v) {
                return Err(invalid(format!("({u},{v}) is not an edge")));
            }
        }
        Ok(self.switch_unchecked(a, b, c, d, orientation))
    }

    /// [`double_edge_switch`](Self::double_edge_switch) without the edge
    /// membership checks; the caller guarantees both are edges.
    #[inline]
    pub(crate) fn switch_unchecked(
        &mut self,
        a: Vertex,
        b: Vertex,
        c: Vertex,
        d: Vertex,
        orientation: SwitchOrientation,
    ) -> SwitchOutcome {
        if a == c || a == d || b == c || b == d {
            return SwitchOutcome::Rejected;
        }
        let (x1, y1, x2, y2) = match orientation {
            SwitchOrientation::Straight => (a, c, b, d),
            SwitchOrientation::Crossed => (a, d, b, c),
        };
        if self.has_edge(x1, y1) || self.has_edge(x2, y2) {
            return SwitchOutcome::Rejected;
        }
        self.remove_edge(a, b);
        self.remove_edge(c, d);
        self.add_edge(x1, y1);
        self.add_edge(x2, y2);
        SwitchOutcome::Applied
    }

    /// Edge-list text: header `n d`, then one `u v` per line, 0-indexed.
    pub fn to_edge_list(&self) -> Result<String> {
        let d = if self.n == 0 { 0 } else { self.degree(0) };
        if !self.is_regular(d) {
            return Err(invalid("edge-list export requires a regular graph"));
        }
        let mut out = String::new();
        writeln!(out, "{} {}", self.n, d).expect("writing to a String");
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}").expect("writing to a String");
        }
        Ok(out)
    }

    pub fn from_edge_list<R: BufRead>(reader: R) -> Result<(Self, usize)> {
        let mut header: Option<(usize, usize)> = None;
        let mut edges = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(|t| {
                t.parse::<usize>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })
            });
            let (x, y) = match (it.next(), it.next(), it.next()) {
                (Some(x), Some(y), None) => (x?, y?),
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: "expected two integers".into(),
                    })
                }
            };
            if header.is_none() {
                header = Some((x, y));
            } else {
                edges.push((x, y));
            }
        }
        let (n, d) = header.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        let g = Self::from_edges(n, &edges)?;
        if !g.is_regular(d) {
            return Err(invalid(format!("edge list is not {d}-regular")));
        }
        Ok((g, d))
    }
}

pub(crate) fn iter_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(k, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                None
            } else {
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * WORD + t)
            }
        })
    })
}

/// All `C(n,2)` common-neighbour counts plus their extremes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonNeighbourProfile {
    pub n: usize,
    /// Indexed by [`pair_index`].
    pub values: Vec<u32>,
    pub x_max: u32,
    pub x_min: u32,
}

impl CommonNeighbourProfile {
    pub fn from_values(n: usize, values: Vec<u32>) -> Self {
        assert_eq!(values.len(), pair_count(n));
        let x_max = values.iter().copied().max().unwrap_or(0);
        let x_min = values.iter().copied().min().unwrap_or(0);
        CommonNeighbourProfile {
            n,
            values,
            x_max,
            x_min,
        }
    }

    pub fn get(&self, i: Vertex, j: Vertex) -> u32 {
        self.values[pair_index(self.n, i, j)]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegreeSequence {
    degrees: Vec<usize>,
}

impl DegreeSequence {
    pub fn new(degrees: Vec<usize>) -> Result<Self> {
        let n = degrees.len();
        if let Some(&d) = degrees.iter().find(|&&d| d + 1 > n) {
            return Err(invalid(format!("degree {d} exceeds n - 1 = {}", n.saturating_sub(1))));
        }
        if degrees.iter().sum::<usize>() % 2 != 0 {
            return Err(invalid("degree sum is odd"));
        }
        Ok(DegreeSequence { degrees })
    }

    pub fn regular(n: usize, d: usize) -> Result<Self> {
        Self::new(vec![d; n])
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn sum(&self) -> usize {
        self.degrees.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() as f64 / self.n() as f64
    }

    /// `max_i |d_i - d| <= c`.
    pub fn is_almost_regular(&self, d: usize, c: usize) -> bool {
        self.degrees.iter().all(|&di| di.abs_diff(d) <= c)
    }

    /// Erdős–Gallai test.
    pub fn is_graphical(&self) -> bool {
        is_graphical(&self.degrees)
    }
}

/// Erdős–Gallai: a non-increasing sequence is graphical iff the sum is even
/// and for each k, `sum_{i<=k} d_i <= k(k-1) + sum_{i>k} min(d_i, k)`.
pub fn is_graphical(degrees: &[usize]) -> bool {
    let mut d: Vec<usize> = degrees.to_vec();
    d.sort_unstable_by(|a, b| b.cmp(a));
    let n = d.len();
    if d.iter().sum::<usize>() % 2 != 0 {
        return false;
    }
    if d.first().is_some_and(|&x| x + 1 > n) {
        return false;
    }
    let mut lhs = 0usize;
    for k in 1..=n {
        lhs += d[k - 1];
        let rhs = k * (k - 1) + d[k..].iter().map(|&x| x.min(k)).sum::<usize>();
        if lhs > rhs {
            return false;
        }
    }
    true
}

/// `(n, d)` with `d = λ(n-1)`, `nd` even and `0 < λ < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularityParams {
    pub n: usize,
    pub d: usize,
}

impl RegularityParams {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("n = {n} is too small")));
        }
        if d == 0 || d + 1 >= n {
            return Err(invalid(format!("need 0 < d < n - 1, got d = {d}, n = {n}")));
        }
        if !(n * d).is_multiple_of(2) {
            return Err(invalid(format!("n·d = {} is odd", n * d)));
        }
        Ok(RegularityParams { n, d })
    }

    /// Resolves `d = λ(n-1)`, which must be an integer.
    pub fn from_lambda(n: usize, lambda: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("n = {n} is too small")));
        }
        let d = lambda * (n - 1) as f64;
        let rounded = d.round();
        if (d - rounded).abs() > 1e-9 {
            return Err(invalid(format!("λ(n-1) = {d} is not an integer")));
        }
        Self::new(n, rounded as usize)
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.d as f64 / (self.n - 1) as f64
    }

    pub fn edge_count(&self) -> usize {
        self.n * self.d / 2
    }
}
