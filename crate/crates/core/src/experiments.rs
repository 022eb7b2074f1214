//! Reproducible batch experiments and their JSON/CSV reports.
//!
//! A run is fully determined by its [`ExperimentConfig`]: work is split over a
//! fixed number of chains, each with its own seeded stream, and the results
//! are merged in chain order. The worker count only sets the thread pool size.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coupling::{couple_to_h, count_switchings, Direction, StepConfig};
use crate::error::{invalid, Error, Result};
use crate::extremal::{
    empirical_f_vs_fhat, estimate_deltas, estimate_phi, event_system_common_neighbours,
    extremal_bound, overlap_dependency_graph, Coefficients, Occurrences, DEFAULT_MIN_HITS,
};
use crate::graph::{pair_count, DegreeSequence, LabelledGraph, RegularityParams};
use crate::oracle::{
    all_graphs, count_graphs, exact_common_neighbour_dist, exact_edge_prob,
    exact_neighbourhood_prob, mckay_asymptotic_count, ratio_f64,
};
use crate::sampler::{
    default_burn_in, default_thinning, sample_binomial_max, sample_conditional_stream,
    sample_parallel, worker_rng, ChainConfig,
};
use crate::stats::{chi_square, ks_distance, ks_two_sample, mean, pearson, tv_distance, DEFAULT_RESAMPLES};
use crate::theory::{
    binom_approx_params, binom_max_constants, binomial_upper_tail, concentration_threshold,
    gumbel_cdf, local_limit_pmf, neighbourhood_prob_formula, scaling_constants,
    unconditional_window, Condition,
};

pub const SCHEMA_VERSION: u32 = 1;

// Offsets separating the seed families used inside one experiment.
const SURROGATE_SEED: u64 = 0x5355_5252;
const BOOTSTRAP_SEED: u64 = 0x424f_4f54;
const COUPLE_SEED: u64 = 0x434f_5550;
const META_SEED: u64 = 0x4d45_5441;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Gumbel,
    LocalLimit,
    Coupling,
    OracleValidation,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Gumbel => "gumbel",
            ExperimentKind::LocalLimit => "local-limit",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::OracleValidation => "oracle-validation",
        }
    }
}

/// Pass/fail thresholds. The shipped defaults are the acceptance tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ks_gumbel: f64,
    pub ks_surrogate: f64,
    pub max_abs_corr: f64,
    pub concentration: f64,
    pub f_gap: f64,
    pub tail_factor: f64,
    pub tv: f64,
    pub mean_sigmas: f64,
    pub coupling_fraction: f64,
    pub coupling_max_diff: u32,
    pub fallback_rate: f64,
    pub meta_degree_rel: f64,
    pub formula_rel_error: f64,
    pub chi_square_p: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ks_gumbel: 0.2,
            ks_surrogate: 0.1,
            max_abs_corr: 0.1,
            concentration: 1e-3,
            f_gap: 0.08,
            tail_factor: 2.0,
            tv: 0.05,
            mean_sigmas: 3.0,
            coupling_fraction: 0.95,
            coupling_max_diff: 8,
            fallback_rate: 0.05,
            meta_degree_rel: 0.2,
            formula_rel_error: 0.35,
            chi_square_p: 1e-3,
            identity: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub d: Option<usize>,
    pub lambda: Option<f64>,
    /// Graphs for gumbel and local-limit, runs for coupling.
    pub samples: usize,
    pub burn_in: Option<u64>,
    pub thinning: Option<u64>,
    pub seed: u64,
    pub workers: usize,
    pub chains: usize,
    pub i: usize,
    pub j: usize,
    /// Local-limit only: use exact enumeration instead of sampling.
    pub exact: bool,
    /// Coupling only: targets are drawn from `h ± max_h_offset`.
    pub max_h_offset: u32,
    /// Coupling only: conditional graphs used for the mean meta-degree.
    pub meta_degree_samples: usize,
    /// Oracle validation only: `(n, d)` instances.
    pub oracle_sizes: Vec<(usize, usize)>,
    pub out: Option<PathBuf>,
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    /// Shipped defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let (n, samples) = match kind {
            ExperimentKind::Gumbel => (201, 2000),
            ExperimentKind::LocalLimit => (201, 10_000),
            ExperimentKind::Coupling => (101, 200),
            ExperimentKind::OracleValidation => (8, 0),
        };
        ExperimentConfig {
            experiment: kind,
            n,
            d: None,
            lambda: Some(0.5),
            samples,
            burn_in: None,
            thinning: None,
            seed: 1,
            workers: 1,
            chains: 8,
            i: 0,
            j: 1,
            exact: false,
            max_h_offset: 10,
            meta_degree_samples: 200,
            oracle_sizes: vec![(5, 2), (6, 3), (8, 4), (10, 5)],
            out: None,
            tolerances: Tolerances::default(),
        }
    }

    /// Parses a JSON document; missing fields take the defaults of its
    /// `experiment` kind.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let kind: ExperimentKind = serde_json::from_value(
            doc.get("experiment")
                .cloned()
                .ok_or_else(|| invalid("config lacks the \"experiment\" field"))?,
        )?;
        let mut base = serde_json::to_value(Self::defaults(kind))?;
        merge(&mut base, doc);
        Ok(serde_json::from_value(base)?)
    }

    /// Fills `d`, `burn_in` and `thinning` and checks the parameters.
    pub fn resolve(mut self) -> Result<Self> {
        if self.workers == 0 || self.chains == 0 {
            return Err(invalid("workers and chains must be positive"));
        }
        if self.experiment == ExperimentKind::OracleValidation {
            if self.oracle_sizes.is_empty() {
                return Err(invalid("oracle validation needs at least one size"));
            }
            return Ok(self);
        }
        let params = match (self.d, self.lambda) {
            (Some(d), _) => RegularityParams::new(self.n, d)?,
            (None, Some(l)) => RegularityParams::from_lambda(self.n, l)?,
            (None, None) => return Err(invalid("give d or lambda")),
        };
        let lam = params.lambda();
        if !(0.1..=0.9).contains(&lam) {
            return Err(invalid(format!("lambda = {lam:.4} lies outside [0.1, 0.9]")));
        }
        if self.i >= self.n || self.j >= self.n || self.i == self.j {
            return Err(invalid(format!("bad vertex pair ({}, {})", self.i, self.j)));
        }
        if self.samples == 0 {
            return Err(invalid("samples must be positive"));
        }
        self.d = Some(params.d);
        self.burn_in.get_or_insert(default_burn_in(&params));
        self.thinning.get_or_insert(default_thinning(&params));
        ChainConfig {
            burn_in: self.burn_in.unwrap_or(0),
            thinning: self.thinning.unwrap_or(0),
            seed: self.seed,
        }
        .validate()?;
        Ok(self)
    }

    /// Regularity parameters of a resolved config.
    pub fn params(&self) -> Result<RegularityParams> {
        RegularityParams::new(self.n, self.d.ok_or_else(|| invalid("config not resolved"))?)
    }

    fn chain(&self) -> ChainConfig {
        ChainConfig {
            burn_in: self.burn_in.unwrap_or(0),
            thinning: self.thinning.unwrap_or(1),
            seed: self.seed,
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: "<=",
            tolerance,
            pass: value <= tolerance,
        }
    }

    fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: ">=",
            tolerance,
            pass: value >= tolerance,
        }
    }

    fn less(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: "<",
            tolerance,
            pass: value < tolerance,
        }
    }
}

/// Per-sample records as a string table.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV with a leading `# schema_version: N` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# schema_version: {SCHEMA_VERSION}")?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub records: Table,
}

impl Report {
    fn new(config: &ExperimentConfig, records: Table) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            experiment: config.experiment,
            config: config.clone(),
            summary: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
            records,
        }
    }

    fn note(&mut self, key: &str, value: f64) {
        self.summary.insert(key.into(), value);
    }

    fn check(&mut self, c: Check) {
        self.passed &= c.pass;
        self.checks.push(c);
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))
}

/// Dispatches on `cfg.experiment`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment {
        ExperimentKind::Gumbel => run_gumbel_experiment(cfg),
        ExperimentKind::LocalLimit => run_local_limit_experiment(cfg),
        ExperimentKind::Coupling => run_coupling_experiment(cfg),
        ExperimentKind::OracleValidation => run_oracle_validation(cfg),
    }
}

fn require(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentConfig> {
    if cfg.experiment != kind {
        return Err(invalid(format!(
            "config is for {}, not {}",
            cfg.experiment.as_str(),
            kind.as_str()
        )));
    }
    cfg.clone().resolve()
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Extremes of a graph's common-neighbour counts and the number of pairs
/// above each threshold.
struct GraphStat {
    x_max: u32,
    x_min: u32,
    x_ij: u32,
    above: [u32; 2],
}

/// Extremes of the common-neighbour counts against the Gumbel limit and the
/// independent binomial surrogate.
pub fn run_gumbel_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let cfg = require(cfg, ExperimentKind::Gumbel)?;
    let params = cfg.params()?;
    let s = scaling_constants(&params)?;
    let thresholds = [s.a, s.a + s.b];
    let (i, j) = (cfg.i, cfg.j);
    let pool = pool(cfg.workers)?;

    let stats = pool.install(|| {
        sample_parallel(&params, &cfg.chain(), cfg.chains, cfg.samples, |g| {
            let prof = g.common_neighbour_profile().expect("regular graph");
            let above = thresholds.map(|t| prof.values.iter().filter(|&&v| v as f64 > t).count() as u32);
            GraphStat {
                x_max: prof.x_max,
                x_min: prof.x_min,
                x_ij: prof.get(i, j),
                above,
            }
        })
    })?;
    let approx = binom_approx_params(&params);
    let surrogate: Vec<(u64, u64)> = pool.install(|| {
        chunks(cfg.samples, cfg.chains)
            .into_par_iter()
            .enumerate()
            .flat_map_iter(|(k, size)| {
                let mut rng = worker_rng(cfg.seed.wrapping_add(SURROGATE_SEED), k as u64);
                (0..size)
                    .map(|_| sample_binomial_max(params.n, &approx, &mut rng))
                    .collect::<Vec<_>>()
            })
            .collect()
    });

    let scaled_max: Vec<f64> = stats.iter().map(|t| s.scale_max(t.x_max as f64)).collect();
    let scaled_min: Vec<f64> = stats.iter().map(|t| s.scale_min(&params, t.x_min as f64)).collect();
    let sur_max: Vec<f64> = surrogate.iter().map(|t| s.scale_max(t.0 as f64)).collect();
    let sur_min: Vec<f64> = surrogate.iter().map(|t| s.scale_min(&params, t.1 as f64)).collect();

    let mut records = Table::new(&[
        "sample", "x_max", "x_min", "x_ij", "scaled_max", "scaled_min", "surrogate_max", "surrogate_min",
    ]);
    for (k, (t, u)) in stats.iter().zip(&surrogate).enumerate() {
        records.push(vec![
            k.to_string(),
            t.x_max.to_string(),
            t.x_min.to_string(),
            t.x_ij.to_string(),
            fmt(scaled_max[k]),
            fmt(scaled_min[k]),
            u.0.to_string(),
            u.1.to_string(),
        ]);
    }
    let mut report = Report::new(&cfg, records);
    let tol = cfg.tolerances.clone();

    let ks_gumbel = ks_distance(&scaled_max, gumbel_cdf)?;
    let ks_gumbel_min = ks_distance(&scaled_min, gumbel_cdf)?;
    let ks_surrogate = ks_two_sample(&scaled_max, &sur_max)?;
    let ks_surrogate_min = ks_two_sample(&scaled_min, &sur_min)?;
    let corr = pearson(&scaled_max, &scaled_min);
    let conc = crate::theory::hypergeom_tail_bound_check(
        &params,
        &stats.iter().map(|t| t.x_ij).collect::<Vec<_>>(),
    );
    let pairs = |v: &[(u64, u64)]| -> Vec<(u32, u32)> { v.iter().map(|&(a, b)| (a as u32, b as u32)).collect() };
    let graph_pairs: Vec<(u32, u32)> = stats.iter().map(|t| (t.x_max, t.x_min)).collect();
    let mut boot = worker_rng(cfg.seed.wrapping_add(BOOTSTRAP_SEED), 0);
    let f = empirical_f_vs_fhat(
        &params,
        &graph_pairs,
        &pairs(&surrogate),
        0.0,
        0.0,
        DEFAULT_RESAMPLES,
        &mut boot,
    )?;
    let m = pair_count(params.n) as f64;
    let bmax = binom_max_constants(approx.trials, m as u64, approx.p)?;

    report.note("a", s.a);
    report.note("b", s.b);
    report.note("a_star", bmax.a_star);
    report.note("b_star", bmax.b_star);
    report.note("ks_gumbel_min", ks_gumbel_min);
    report.note("ks_surrogate_min", ks_surrogate_min);
    report.note("mean_scaled_max", mean(&scaled_max));
    report.note("mean_scaled_min", mean(&scaled_min));
    report.note("f", f.f);
    report.note("f_hat", f.f_hat);
    report.note("f_gap_ci_low", f.difference.ci_low);
    report.note("f_gap_ci_high", f.difference.ci_high);
    report.note("concentration_binomial_tail", conc.binomial_tail);
    report.check(Check::at_most("ks_surrogate", ks_surrogate, tol.ks_surrogate));
    report.check(Check::at_most("ks_gumbel", ks_gumbel, tol.ks_gumbel));
    report.check(Check::at_most("abs_corr", corr.abs(), tol.max_abs_corr));
    report.check(Check::at_most("concentration_frequency", conc.frequency, tol.concentration));
    report.check(Check::at_most("f_gap", f.difference.value.abs(), tol.f_gap));
    for (k, x) in [0.0f64, 1.0].into_iter().enumerate() {
        // Mean number of pairs above a + bx estimates C(n,2)·Pr(X_12 > a + bx).
        let mc = stats.iter().map(|t| t.above[k] as f64).sum::<f64>() / stats.len() as f64;
        let bin = m * binomial_upper_tail(approx.trials, approx.p, thresholds[k]);
        let target = (-x).exp();
        report.note(&format!("tail_binomial_x{k}"), bin);
        report.note(&format!("tail_monte_carlo_x{k}"), mc);
        report.note(&format!("tail_limit_x{k}"), target);
        report.check(Check::at_most(
            &format!("tail_factor_x{k}"),
            factor(bin, target),
            tol.tail_factor,
        ));
    }
    Ok(report)
}

/// `max(a/b, b/a)`, infinite when either side vanishes.
pub fn factor(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        f64::INFINITY
    } else {
        (a / b).max(b / a)
    }
}

fn chunks(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|k| total / parts + usize::from(k < total % parts))
        .collect()
}

/// Integer window `|h - λ²n| <= n^0.6`, clipped to `0..=d`.
pub fn central_window(params: &RegularityParams) -> std::ops::RangeInclusive<usize> {
    let (lo, hi) = unconditional_window(params);
    (lo.ceil().max(0.0) as usize)..=(hi.floor() as usize).min(params.d)
}

/// `½ Σ_{h ∈ window} |p(h) - q(h)|`.
fn window_tv(p: &[f64], q: &[f64], window: &std::ops::RangeInclusive<usize>) -> f64 {
    let pw: Vec<f64> = window.clone().map(|h| p.get(h).copied().unwrap_or(0.0)).collect();
    let qw: Vec<f64> = window.clone().map(|h| q.get(h).copied().unwrap_or(0.0)).collect();
    tv_distance(&pw, &qw)
}

/// The pmf of `X_ij` against the local limit formula and `Bin(N, p)`.
pub fn run_local_limit_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let cfg = require(cfg, ExperimentKind::LocalLimit)?;
    let params = cfg.params()?;
    let d = params.d;
    let approx = binom_approx_params(&params);
    let binom: Vec<f64> = (0..=d as i64).map(|h| approx.pmf(h)).collect();
    let formula = local_limit_pmf(&params, Condition::Unconditional);
    let window = central_window(&params);

    let (observed, values) = if cfg.exact {
        let dist = exact_common_neighbour_dist(&params, cfg.i, cfg.j, Condition::Unconditional)?;
        ((0..=d as i64).map(|h| dist.prob(h)).collect::<Vec<f64>>(), None)
    } else {
        let (i, j) = (cfg.i, cfg.j);
        let values = pool(cfg.workers)?.install(|| {
            sample_parallel(&params, &cfg.chain(), cfg.chains, cfg.samples, |g| {
                g.common_neighbours_unchecked(i, j)
            })
        })?;
        (crate::stats::empirical_pmf(&values, d + 1), Some(values))
    };

    let mut records = Table::new(&["h", "observed_prob", "formula_prob", "binomial_prob"]);
    for h in 0..=d {
        records.push(vec![h.to_string(), fmt(observed[h]), fmt(formula[h]), fmt(binom[h])]);
    }
    let mut report = Report::new(&cfg, records);
    let tol = cfg.tolerances.clone();
    let tv_binomial = window_tv(&observed, &binom, &window);
    let tv_formula = window_tv(&observed, &formula, &window);
    report.note("window_low", *window.start() as f64);
    report.note("window_high", *window.end() as f64);
    report.note("tv_formula", tv_formula);
    report.note("binomial_trials", approx.trials as f64);
    report.note("binomial_p", approx.p);
    report.check(Check::at_most("tv_binomial", tv_binomial, tol.tv));
    if let Some(values) = values {
        let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let centre = params.lambda().powi(2) * params.n as f64;
        let sigma = approx.variance().sqrt();
        let m = mean(&xs);
        report.note("mean", m);
        report.note("exact_mean", (d * (d - 1)) as f64 / (params.n - 1) as f64);
        report.note("sigma", sigma);
        report.check(Check::at_most(
            "mean_offset_sigmas",
            (m - centre).abs() / sigma,
            tol.mean_sigmas,
        ));
    }
    Ok(report)
}

/// Repeated chained couplings from uniform graphs to nearby targets, plus the
/// mean meta-graph degree at the centre.
pub fn run_coupling_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let cfg = require(cfg, ExperimentKind::Coupling)?;
    let params = cfg.params()?;
    let (i, j) = (cfg.i, cfg.j);
    let step = StepConfig::for_params(&params);
    let pool = pool(cfg.workers)?;

    let starts: Vec<LabelledGraph> = pool.install(|| {
        sample_parallel(&params, &cfg.chain(), cfg.chains, cfg.samples, |g| g.clone())
    })?;
    let runs: Vec<Result<crate::coupling::DiffReport>> = pool.install(|| {
        starts
            .par_iter()
            .enumerate()
            .map(|(r, g)| {
                let mut rng = worker_rng(cfg.seed.wrapping_add(COUPLE_SEED), r as u64);
                let h = g.common_neighbours_unchecked(i, j) as i64;
                let off = cfg.max_h_offset as i64;
                let target = (h + rng.random_range(-off..=off)).clamp(0, params.d as i64) as u32;
                Ok(couple_to_h(&params, g, i, j, target, &step, &mut rng)?.report)
            })
            .collect()
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;

    let mut records = Table::new(&[
        "run",
        "h_start",
        "h_target",
        "steps",
        "max_vertex_diff",
        "fallbacks",
        "independent",
        "role_violations",
        "distinct_labels",
        "degree_violation",
    ]);
    for (r, d) in runs.iter().enumerate() {
        records.push(vec![
            r.to_string(),
            d.h_start.to_string(),
            d.h_target.to_string(),
            d.steps.to_string(),
            d.max_vertex_diff.to_string(),
            d.fallbacks.to_string(),
            d.independent.to_string(),
            d.role_violations.to_string(),
            label_summary(&d.labels),
            d.degree_violation.to_string(),
        ]);
    }

    let h_centre = (params.lambda().powi(2) * params.n as f64).round() as u32;
    let meta_degrees = mean_meta_degree(&cfg, &params, h_centre, &pool)?;

    let mut report = Report::new(&cfg, records);
    let tol = cfg.tolerances.clone();
    let runs_f = runs.len() as f64;
    let ok = runs.iter().filter(|d| d.max_vertex_diff <= tol.coupling_max_diff).count() as f64;
    let steps: usize = runs.iter().map(|d| d.steps).sum();
    let fallbacks: usize = runs.iter().map(|d| d.fallbacks).sum();
    let fallback_rate = if steps == 0 { 0.0 } else { fallbacks as f64 / steps as f64 };
    let degree_violations = runs.iter().filter(|d| d.degree_violation).count();
    report.note("independent_runs", runs.iter().filter(|d| d.independent).count() as f64);
    report.note(
        "role_violations",
        runs.iter().map(|d| d.role_violations).sum::<usize>() as f64,
    );
    report.note("total_steps", steps as f64);
    let predicted = step.mean_degree;
    report.note("meta_degree_h", h_centre as f64);
    report.note("meta_degree_mean", meta_degrees);
    report.note("meta_degree_predicted", predicted);
    report.check(Check::at_least("fraction_within_max_diff", ok / runs_f, tol.coupling_fraction));
    report.check(Check::at_most("fallback_rate", fallback_rate, tol.fallback_rate));
    report.check(Check::at_most("degree_violations", degree_violations as f64, 0.0));
    report.check(Check::at_most(
        "meta_degree_rel_error",
        (meta_degrees / predicted - 1.0).abs(),
        tol.meta_degree_rel,
    ));
    Ok(report)
}

/// `distinct:max_repeat` over the `w` labels of one run.
pub fn label_summary(labels: &[usize]) -> String {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &w in labels {
        *counts.entry(w).or_default() += 1;
    }
    format!(
        "{}:{}",
        counts.len(),
        counts.values().copied().max().unwrap_or(0)
    )
}

/// Mean number of up-switchings over conditional graphs with `X_ij = h`.
fn mean_meta_degree(
    cfg: &ExperimentConfig,
    params: &RegularityParams,
    h: u32,
    pool: &rayon::ThreadPool,
) -> Result<f64> {
    if cfg.meta_degree_samples == 0 {
        return Ok(f64::NAN);
    }
    let (i, j) = (cfg.i, cfg.j);
    let parts: Vec<Result<Vec<u64>>> = pool.install(|| {
        chunks(cfg.meta_degree_samples, cfg.chains)
            .into_par_iter()
            .enumerate()
            .map(|(k, size)| {
                let mut out = Vec::with_capacity(size);
                if size == 0 {
                    return Ok(out);
                }
                let chain = ChainConfig {
                    seed: cfg.seed.wrapping_add(META_SEED).wrapping_add(k as u64),
                    ..cfg.chain()
                };
                sample_conditional_stream(params, i, j, h, &chain, size, |g| {
                    out.push(count_switchings(g, i, j, Direction::Up))
                })?;
                Ok(out)
            })
            .collect()
    });
    let mut all = Vec::new();
    for p in parts {
        all.extend(p?);
    }
    Ok(all.iter().map(|&x| x as f64).sum::<f64>() / all.len() as f64)
}

/// Every exact-versus-formula comparison on small instances.
///
/// Records hold `(n, d, condition, h, exact_prob, formula_prob, rel_error)`.
pub fn run_oracle_validation(cfg: &ExperimentConfig) -> Result<Report> {
    let cfg = require(cfg, ExperimentKind::OracleValidation)?;
    let tol = cfg.tolerances.clone();
    let mut records = Table::new(&["n", "d", "condition", "h", "exact_prob", "formula_prob", "rel_error"]);
    let mut summary: Vec<(String, f64)> = Vec::new();
    let mut checks = Vec::new();
    let mut mckay_dev: Vec<(usize, f64)> = Vec::new();
    let mut window_errors: Vec<(usize, f64)> = Vec::new();

    for &(n, d) in &cfg.oracle_sizes {
        let params = RegularityParams { n, d };
        if n < 2 || d == 0 || d + 1 >= n || (n * d) % 2 != 0 {
            return Err(invalid(format!("oracle size ({n}, {d}) is not a valid regular instance")));
        }
        let ds = DegreeSequence::regular(n, d)?;
        let tag = format!("n{n}_d{d}");
        let counted = count_graphs(&ds);
        summary.push((format!("{tag}_count"), ratio_f64(&counted, &1u32.into())));
        let mckay = mckay_asymptotic_count(&ds)?;
        let dev = (mckay / ratio_f64(&counted, &1u32.into()) - 1.0).abs();
        summary.push((format!("{tag}_mckay_deviation"), dev));
        if n >= 6 {
            mckay_dev.push((n, dev));
        }

        let dists: Vec<_> = Condition::ALL
            .iter()
            .map(|&c| exact_common_neighbour_dist(&params, 0, 1, c).map(|e| (c, e)))
            .collect::<Result<_>>()?;
        let window = central_window(&params);
        let mut worst = 0.0f64;
        for (c, dist) in &dists {
            let formula = local_limit_pmf(&params, *c);
            for h in dist.support() {
                let e = dist.prob(h);
                let f = formula.get(h as usize).copied().unwrap_or(0.0);
                let rel = if e > 0.0 { (f - e).abs() / e } else { f64::NAN };
                if e > 0.0 && window.contains(&(h as usize)) {
                    worst = worst.max(rel);
                }
                records.push(vec![
                    n.to_string(),
                    d.to_string(),
                    c.as_str().to_string(),
                    h.to_string(),
                    fmt(e),
                    fmt(f),
                    fmt(rel),
                ]);
            }
        }
        summary.push((format!("{tag}_max_window_rel_error"), worst));
        window_errors.push((n, worst));

        // Total probability: Pr(X = h) = q Pr(X = h | edge) + (1-q) Pr(X = h | non-edge).
        let q = exact_edge_prob(&ds, 0, 1)?;
        let lookup = |c: Condition| &dists.iter().find(|x| x.0 == c).expect("all conditions").1;
        let (ue, ee, ne) = (
            lookup(Condition::Unconditional),
            lookup(Condition::Edge),
            lookup(Condition::NonEdge),
        );
        let identity = (0..=d as i64)
            .map(|h| (ue.prob(h) - q * ee.prob(h) - (1.0 - q) * ne.prob(h)).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most(&format!("{tag}_total_probability"), identity, tol.identity));
        checks.push(Check::at_most(
            &format!("{tag}_edge_probability"),
            (q - d as f64 / (n - 1) as f64).abs(),
            tol.identity,
        ));
        let set: Vec<usize> = (1..=d).collect();
        let exact_nb = exact_neighbourhood_prob(&ds, 0, &set)?;
        let formula_nb = neighbourhood_prob_formula(&ds, 0, &set)?;
        summary.push((format!("{tag}_neighbourhood_rel_error"), (formula_nb - exact_nb).abs() / exact_nb));

        if n <= 6 {
            let (stat, p, enumerated) = uniformity(&params, &cfg)?;
            summary.push((format!("{tag}_enumerated"), enumerated as f64));
            summary.push((format!("{tag}_chi_square"), stat));
            checks.push(Check::at_least(
                &format!("{tag}_enumeration_matches_count"),
                f64::from(u8::from(counted == enumerated.into())),
                1.0,
            ));
            checks.push(Check::at_least(&format!("{tag}_uniformity_p"), p, tol.chi_square_p));
        }
    }
    for w in mckay_dev.windows(2) {
        checks.push(Check::less(
            &format!("mckay_deviation_n{}_below_n{}", w[1].0, w[0].0),
            w[1].1,
            w[0].1,
        ));
    }
    if let Some(&(n0, e0)) = window_errors.iter().find(|x| x.0 == 8) {
        checks.push(Check::at_most(&format!("n{n0}_max_window_rel_error"), e0, tol.formula_rel_error));
    }
    for w in window_errors.windows(2) {
        if w[0].0 >= 8 {
            checks.push(Check::less(
                &format!("window_rel_error_n{}_below_n{}", w[1].0, w[0].0),
                w[1].1,
                w[0].1,
            ));
        }
    }

    let mut report = Report::new(&cfg, records);
    for (k, v) in summary {
        report.note(&k, v);
    }
    for c in checks {
        report.check(c);
    }
    Ok(report)
}

/// Chi-square of switch-chain samples over all labelled graphs, with
/// `1000·count` samples.
fn uniformity(params: &RegularityParams, cfg: &ExperimentConfig) -> Result<(f64, f64, u64)> {
    let ds = DegreeSequence::regular(params.n, params.d)?;
    let graphs = all_graphs(&ds)?;
    let mut keys: Vec<u128> = graphs.iter().map(|g| g.edge_key().expect("n <= 16")).collect();
    keys.sort_unstable();
    let total = 1000 * graphs.len();
    let chain = ChainConfig::new(params, cfg.seed);
    let drawn = pool(cfg.workers)?.install(|| {
        sample_parallel(params, &chain, cfg.chains, total, |g| g.edge_key().expect("n <= 16"))
    })?;
    let mut observed = vec![0u64; keys.len()];
    for k in drawn {
        let pos = keys
            .binary_search(&k)
            .map_err(|_| Error::InvalidArgument("sampled graph missing from enumeration".into()))?;
        observed[pos] += 1;
    }
    let expected = vec![1000.0; keys.len()];
    let (stat, p) = chi_square(&observed, &expected)?;
    Ok((stat, p, graphs.len() as u64))
}

/// Monte Carlo extremal-independence coefficients for the common-neighbour
/// events at `(x, x′)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub n: usize,
    pub d: usize,
    pub x: f64,
    pub x_prime: f64,
    pub samples: usize,
    pub phi: Option<f64>,
    pub delta1: f64,
    pub delta2: f64,
    /// Bound with `φ` replaced by its trivial upper bound 1 when undefined.
    pub bound: f64,
    pub skipped_events: Vec<usize>,
    pub fired_total: usize,
}

pub fn estimate_coefficients(
    params: &RegularityParams,
    x: f64,
    x_prime: f64,
    chain: &ChainConfig,
    chains: usize,
    samples: usize,
    workers: usize,
) -> Result<CoefficientReport> {
    let events = event_system_common_neighbours(x, x_prime, params)?;
    let dep = overlap_dependency_graph(params.n)?;
    let fired = pool(workers)?.install(|| {
        sample_parallel(params, chain, chains, samples, |g| events.fired(g))
    })?;
    let mut occ = Occurrences::new(events.len());
    let mut fired_total = 0;
    for f in fired {
        fired_total += f.len();
        occ.push(f)?;
    }
    let mut rng = worker_rng(chain.seed.wrapping_add(BOOTSTRAP_SEED), 0);
    let deltas = estimate_deltas(&occ, &dep, DEFAULT_RESAMPLES, &mut rng)?;
    let (phi, skipped_events) = if fired_total == 0 {
        (Some(0.0), Vec::new())
    } else {
        let est = estimate_phi(&occ, &dep, DEFAULT_MIN_HITS, DEFAULT_RESAMPLES, &mut rng)?;
        (est.phi.map(|e| e.value), est.skipped_events)
    };
    let coeffs = Coefficients {
        phi: phi.unwrap_or(1.0),
        delta1: deltas.delta1.value,
        delta2: deltas.delta2.value,
    };
    let bound = extremal_bound(&coeffs, &occ.marginals())?;
    Ok(CoefficientReport {
        n: params.n,
        d: params.d,
        x,
        x_prime,
        samples,
        phi,
        delta1: coeffs.delta1,
        delta2: coeffs.delta2,
        bound,
        skipped_events,
        fired_total,
    })
}

/// Scaling constants and surrogate constants at `params`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheorySummary {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "N")]
    pub trials: u64,
    pub p: f64,
    pub a_star: f64,
    pub b_star: f64,
    pub concentration_threshold: f64,
}

pub fn theory_summary(params: &RegularityParams) -> Result<TheorySummary> {
    let s = scaling_constants(params)?;
    let approx = binom_approx_params(params);
    let star = binom_max_constants(approx.trials, pair_count(params.n) as u64, approx.p)?;
    Ok(TheorySummary {
        n: params.n,
        d: params.d,
        lambda: params.lambda(),
        a: s.a,
        b: s.b,
        trials: approx.trials,
        p: approx.p,
        a_star: star.a_star,
        b_star: star.b_star,
        concentration_threshold: concentration_threshold(params.n),
    })
}
