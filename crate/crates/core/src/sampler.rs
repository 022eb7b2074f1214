//! Uniform and conditional random regular graphs from the double-edge switch
//! chain, and the independent binomial surrogate for the extremes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{apply_switching, random_switching, Direction};
use crate::error::{invalid, Error, Result};
use crate::graph::{LabelledGraph, RegularityParams, SwitchOrientation, SwitchOutcome, Vertex};
use crate::theory::BinomApprox;

/// Independent stream `worker` of the generator seeded by `seed`.
pub fn worker_rng(seed: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// `20 m ln m` proposals with `m = nd/2`.
pub fn default_burn_in(params: &RegularityParams) -> u64 {
    let m = params.edge_count() as f64;
    (20.0 * m * m.ln()).ceil() as u64
}

/// `2m` proposals between retained samples.
pub fn default_thinning(params: &RegularityParams) -> u64 {
    2 * params.edge_count() as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(params: &RegularityParams, seed: u64) -> Self {
        ChainConfig {
            burn_in: default_burn_in(params),
            thinning: default_thinning(params),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(invalid("thinning must be at least 1"));
        }
        Ok(())
    }
}

/// Circulant start: `i ~ i±1, …, i±⌊d/2⌋`, plus `i + n/2` when `d` is odd.
pub fn initial_regular_graph(params: &RegularityParams) -> Result<LabelledGraph> {
    let RegularityParams { n, d } = *params;
    if d >= n || (n * d) % 2 != 0 {
        return Err(invalid(format!("no {d}-regular graph on {n} vertices")));
    }
    let mut g = LabelledGraph::empty(n);
    for i in 0..n {
        for k in 1..=d / 2 {
            g.add_edge(i, (i + k) % n);
        }
        if d % 2 == 1 {
            g.add_edge(i, (i + n / 2) % n);
        }
    }
    debug_assert!(g.is_regular(d));
    Ok(g)
}

/// The lazy double-edge switch chain.
///
/// Each step picks an ordered pair of distinct edges and an orientation
/// uniformly; a rejected switch still counts as a step.
#[derive(Clone, Debug)]
pub struct SwitchChain {
    graph: LabelledGraph,
    edges: Vec<(Vertex, Vertex)>,
    rng: ChaCha8Rng,
    steps: u64,
    applied: u64,
}

impl SwitchChain {
    /// Starts from the circulant graph on stream 0 of `seed`.
    ///
    /// # Panics
    /// If no `d`-regular graph on `n` vertices exists.
    pub fn new(params: RegularityParams, seed: u64) -> Self {
        let g = initial_regular_graph(&params).expect("parameters admit a regular graph");
        Self::from_graph(g, worker_rng(seed, 0))
    }

    pub fn from_graph(graph: LabelledGraph, rng: ChaCha8Rng) -> Self {
        let edges = graph.edges();
        SwitchChain {
            graph,
            edges,
            rng,
            steps: 0,
            applied: 0,
        }
    }

    #[inline]
    fn propose(&mut self) -> (usize, usize, SwitchOrientation) {
        let m = self.edges.len();
        let e1 = self.rng.random_range(0..m);
        let mut e2 = self.rng.random_range(0..m - 1);
        if e2 >= e1 {
            e2 += 1;
        }
        let o = if self.rng.random::<bool>() {
            SwitchOrientation::Straight
        } else {
            SwitchOrientation::Crossed
        };
        (e1, e2, o)
    }

    /// One proposal; returns whether the switch was applied.
    pub fn step(&mut self) -> bool {
        self.steps += 1;
        if self.edges.len() < 2 {
            return false;
        }
        let (e1, e2, o) = self.propose();
        let ((a, b), (c, d)) = (self.edges[e1], self.edges[e2]);
        match self.graph.switch_unchecked(a, b, c, d, o) {
            SwitchOutcome::Applied => {
                let (p, q) = match o {
                    SwitchOrientation::Straight => ((a, c), (b, d)),
                    SwitchOrientation::Crossed => ((a, d), (b, c)),
                };
                self.edges[e1] = p;
                self.edges[e2] = q;
                self.applied += 1;
                true
            }
            SwitchOutcome::Rejected => false,
        }
    }

    pub fn run(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn graph(&self) -> &LabelledGraph {
        &self.graph
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.applied as f64 / self.steps as f64
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// One approximately uniform graph after `cfg.burn_in` steps.
pub fn sample_uniform(params: &RegularityParams, cfg: &ChainConfig) -> Result<LabelledGraph> {
    cfg.validate()?;
    let mut chain = SwitchChain::from_graph(initial_regular_graph(params)?, worker_rng(cfg.seed, 0));
    chain.run(cfg.burn_in);
    Ok(chain.graph)
}

/// Retained graphs from one chain, with its acceptance rate.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub params: RegularityParams,
    pub graphs: Vec<LabelledGraph>,
    pub acceptance_rate: f64,
}

/// Runs chain `stream` of `cfg.seed`: burn-in, then `count` samples spaced by
/// `cfg.thinning`, each passed to `visit`.
pub fn sample_stream<F>(
    params: &RegularityParams,
    cfg: &ChainConfig,
    stream: u64,
    count: usize,
    mut visit: F,
) -> Result<f64>
where
    F: FnMut(&LabelledGraph),
{
    cfg.validate()?;
    let mut chain =
        SwitchChain::from_graph(initial_regular_graph(params)?, worker_rng(cfg.seed, stream));
    chain.run(cfg.burn_in);
    for k in 0..count {
        if k > 0 {
            chain.run(cfg.thinning);
        }
        debug_assert!(chain.graph.is_regular(params.d));
        visit(&chain.graph);
    }
    Ok(chain.acceptance_rate())
}

pub fn sample_batch(params: &RegularityParams, cfg: &ChainConfig, count: usize) -> Result<SampleBatch> {
    let mut graphs = Vec::with_capacity(count);
    let acceptance_rate = sample_stream(params, cfg, 0, count, |g| graphs.push(g.clone()))?;
    Ok(SampleBatch {
        params: *params,
        graphs,
        acceptance_rate,
    })
}

/// `total` statistics from `chains` independent chains run in parallel.
///
/// Chain `k` uses stream `k` and contributes a contiguous block of the
/// output, so the result does not depend on the thread count.
pub fn sample_parallel<T, F>(
    params: &RegularityParams,
    cfg: &ChainConfig,
    chains: usize,
    total: usize,
    stat: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&LabelledGraph) -> T + Sync,
{
    if chains == 0 {
        return Err(invalid("need at least one chain"));
    }
    let sizes: Vec<usize> = (0..chains)
        .map(|k| total / chains + usize::from(k < total % chains))
        .collect();
    let blocks: Result<Vec<Vec<T>>> = sizes
        .par_iter()
        .enumerate()
        .map(|(k, &size)| {
            let mut out = Vec::with_capacity(size);
            sample_stream(params, cfg, k as u64, size, |g| out.push(stat(g)))?;
            Ok(out)
        })
        .collect();
    Ok(blocks?.into_iter().flatten().collect())
}

/// Switch chain restricted to graphs with `X_ij = h`.
#[derive(Clone, Debug)]
pub struct ConditionalChain {
    inner: SwitchChain,
    i: Vertex,
    j: Vertex,
    h: u32,
}

impl ConditionalChain {
    /// Starts from `g`, which must already have `X_ij = h`.
    pub fn new(g: LabelledGraph, i: Vertex, j: Vertex, rng: ChaCha8Rng) -> Result<Self> {
        let h = g.common_neighbours(i, j)?;
        Ok(ConditionalChain {
            inner: SwitchChain::from_graph(g, rng),
            i,
            j,
            h,
        })
    }

    pub fn step(&mut self) -> bool {
        let c = &mut self.inner;
        c.steps += 1;
        if c.edges.len() < 2 {
            return false;
        }
        let (e1, e2, o) = c.propose();
        let ((a, b), (x, y)) = (c.edges[e1], c.edges[e2]);
        if c.graph.switch_unchecked(a, b, x, y, o) == SwitchOutcome::Rejected {
            return false;
        }
        let (p, q) = match o {
            SwitchOrientation::Straight => ((a, x), (b, y)),
            SwitchOrientation::Crossed => ((a, y), (b, x)),
        };
        let touched = [a, b, x, y].iter().any(|&v| v == self.i || v == self.j);
        if touched && c.graph.common_neighbours_unchecked(self.i, self.j) != self.h {
            c.graph.remove_edge(p.0, p.1);
            c.graph.remove_edge(q.0, q.1);
            c.graph.add_edge(a, b);
            c.graph.add_edge(x, y);
            return false;
        }
        c.edges[e1] = p;
        c.edges[e2] = q;
        c.applied += 1;
        true
    }

    pub fn run(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn graph(&self) -> &LabelledGraph {
        &self.inner.graph
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.inner.acceptance_rate()
    }
}

/// Drives `X_ij` of `g` to `h` with uniformly chosen switchings.
fn drive_to(
    g: &mut LabelledGraph,
    i: Vertex,
    j: Vertex,
    h: u32,
    budget: u64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut used = 0u64;
    loop {
        let x = g.common_neighbours_unchecked(i, j);
        if x == h {
            return Ok(());
        }
        let dir = if x < h { Direction::Up } else { Direction::Down };
        let t = match random_switching(g, i, j, dir, rng) {
            Some(t) if used < budget => t,
            _ => {
                return Err(Error::BudgetExhausted {
                    budget,
                    target: format!("X_{i}{j} = {h}"),
                })
            }
        };
        apply_switching(g, j, t, dir);
        used += 1;
    }
}

/// Approximately uniform graph with `X_ij = h`, drawing randomness from `rng`.
pub fn sample_conditional_with_rng<R: Rng + ?Sized>(
    params: &RegularityParams,
    i: Vertex,
    j: Vertex,
    h: u32,
    burn_in: u64,
    rng: &mut R,
) -> Result<LabelledGraph> {
    let cfg = ChainConfig {
        burn_in,
        thinning: 1,
        seed: rng.random(),
    };
    sample_conditional(params, i, j, h, &cfg)
}

/// Approximately uniform graph with `X_ij = h`.
///
/// Starts from a uniform-chain sample, switches `X_ij` to `h`, then runs the
/// restricted chain for `cfg.burn_in` steps.
pub fn sample_conditional(
    params: &RegularityParams,
    i: Vertex,
    j: Vertex,
    h: u32,
    cfg: &ChainConfig,
) -> Result<LabelledGraph> {
    let mut out = None;
    sample_conditional_stream(params, i, j, h, cfg, 1, |g| out = Some(g.clone()))?;
    Ok(out.expect("one sample requested"))
}

/// `count` samples from the restricted chain spaced by `cfg.thinning`.
pub fn sample_conditional_stream<F>(
    params: &RegularityParams,
    i: Vertex,
    j: Vertex,
    h: u32,
    cfg: &ChainConfig,
    count: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(&LabelledGraph),
{
    cfg.validate()?;
    let n = params.n;
    if i >= n || j >= n || i == j {
        return Err(invalid(format!("bad vertex pair ({i},{j})")));
    }
    let mut rng = worker_rng(cfg.seed, 0);
    let mut start = SwitchChain::from_graph(initial_regular_graph(params)?, rng.clone());
    start.run(cfg.burn_in);
    let mut g = start.graph;
    rng.set_stream(1);
    drive_to(&mut g, i, j, h, 4 * n as u64, &mut rng)?;
    let mut chain = ConditionalChain::new(g, i, j, rng)?;
    chain.run(cfg.burn_in);
    for k in 0..count {
        if k > 0 {
            chain.run(cfg.thinning);
        }
        assert_eq!(chain.graph().common_neighbours_unchecked(i, j), h);
        visit(chain.graph());
    }
    Ok(())
}

/// Maximum and minimum of `C(n,2)` independent `Bin(N, p)` draws.
pub fn sample_binomial_max<R: Rng + ?Sized>(n: usize, approx: &BinomApprox, rng: &mut R) -> (u64, u64) {
    assert!(approx.p < 1.0, "binomial surrogate needs p < 1");
    if approx.trials == 0 {
        return (0, 0);
    }
    let dist = Binomial::new(approx.trials, approx.p).expect("0 <= p < 1");
    let (mut max, mut min) = (0, u64::MAX);
    for _ in 0..crate::graph::pair_count(n) {
        let x = dist.sample(rng);
        max = max.max(x);
        min = min.min(x);
    }
    (max, min.min(max))
}
