//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::sync::OnceLock;

use cnrr::coupling::{miss_bound, BipartiteMetaGraph, Coupler};
use cnrr::experiments::{
    estimate_coefficients, run_experiment, CoefficientReport, ExperimentConfig, ExperimentKind,
    Report,
};
use cnrr::extremal::{extremal_bound, DependencyDigraph, JointLaw};
use cnrr::oracle::{count_graphs, enumerate_graphs, mckay_asymptotic_count};
use cnrr::sampler::{worker_rng, ChainConfig};
use cnrr::stats::chi_square;
use cnrr::{DegreeSequence, RegularityParams};
use num_bigint::BigUint;
use rand::Rng;

fn verdict(k: u32, pass: bool, detail: String) {
    println!("criterion {k}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {k} failed: {detail}");
}

fn cached(cell: &'static OnceLock<Report>, cfg: impl FnOnce() -> ExperimentConfig) -> &'static Report {
    cell.get_or_init(|| run_experiment(&cfg()).expect("experiment runs"))
}

fn oracle_report() -> &'static Report {
    static CELL: OnceLock<Report> = OnceLock::new();
    cached(&CELL, || ExperimentConfig::defaults(ExperimentKind::OracleValidation))
}

fn gumbel(n: usize) -> &'static Report {
    static C101: OnceLock<Report> = OnceLock::new();
    static C201: OnceLock<Report> = OnceLock::new();
    static C401: OnceLock<Report> = OnceLock::new();
    let cell = match n {
        101 => &C101,
        201 => &C201,
        401 => &C401,
        _ => unreachable!(),
    };
    cached(cell, || {
        let mut c = ExperimentConfig::defaults(ExperimentKind::Gumbel);
        c.n = n;
        c
    })
}

fn coupling_report() -> &'static Report {
    static CELL: OnceLock<Report> = OnceLock::new();
    cached(&CELL, || ExperimentConfig::defaults(ExperimentKind::Coupling))
}

fn check(r: &Report, name: &str) -> (bool, f64) {
    let c = r.check_named(name).unwrap_or_else(|| panic!("no check {name}"));
    (c.pass, c.value)
}

/// Regular graphs on `n <= 6` vertices by testing every edge subset.
fn brute_force_count(n: usize, d: usize) -> u64 {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    (0u32..1 << pairs.len())
        .filter(|mask| {
            let mut deg = vec![0; n];
            for (k, &(a, b)) in pairs.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    deg[a] += 1;
                    deg[b] += 1;
                }
            }
            deg.iter().all(|&x| x == d)
        })
        .count() as u64
}

#[test]
fn criterion_01_exact_counts() {
    let start = std::time::Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, d, expected) in [(4, 3, 1u64), (5, 2, 12), (6, 3, 70)] {
        let ds = DegreeSequence::new(vec![d; n]).unwrap();
        let enumerated = enumerate_graphs(&ds, |_| {}).unwrap().count;
        let counted = count_graphs(&ds);
        let brute = brute_force_count(n, d);
        ok &= enumerated == BigUint::from(expected) && counted == enumerated && brute == expected;
        parts.push(format!("({n},{d})={enumerated}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 1.0;
    verdict(1, ok, format!("{} in {secs:.2}s", parts.join(" ")));
}

#[test]
fn criterion_02_mckay_ratio() {
    let devs: Vec<f64> = [(6, 3), (8, 4), (10, 5)]
        .iter()
        .map(|&(n, d)| {
            let ds = DegreeSequence::regular(n, d).unwrap();
            let exact = if n <= 8 {
                enumerate_graphs(&ds, |_| {}).unwrap().count
            } else {
                count_graphs(&ds)
            };
            let exact: f64 = exact.to_string().parse().unwrap();
            (mckay_asymptotic_count(&ds).unwrap() / exact - 1.0).abs()
        })
        .collect();
    let ok = devs[1] < devs[0] && devs[2] < devs[1];
    verdict(2, ok, format!("|ratio-1| = {devs:.4?}"));
}

#[test]
fn criterion_03_local_limit_formulas_exact() {
    let r = oracle_report();
    let (p8, e8) = check(r, "n8_max_window_rel_error");
    let (p10, e10) = check(r, "window_rel_error_n10_below_n8");
    verdict(
        3,
        p8 && p10,
        format!("max rel error n=8: {e8:.4} (tol 0.35), n=10: {e10:.4}"),
    );
}

#[test]
fn criterion_04_sampler_uniformity() {
    let r = oracle_report();
    let (a, pa) = check(r, "n5_d2_uniformity_p");
    let (b, pb) = check(r, "n6_d3_uniformity_p");
    verdict(4, a && b, format!("chi-square p: (5,2) {pa:.4}, (6,3) {pb:.4}"));
}

#[test]
fn criterion_05_binomial_local_limit() {
    let r = run_experiment(&ExperimentConfig::defaults(ExperimentKind::LocalLimit)).unwrap();
    let (ok, tv) = check(&r, "tv_binomial");
    verdict(5, ok, format!("TV on central window = {tv:.4} (tol 0.05)"));
}

#[test]
fn criterion_06_extremal_independence_proxy() {
    let r = gumbel(201);
    let (a, gap) = check(r, "f_gap");
    let (b, ks) = check(r, "ks_surrogate");
    verdict(6, a && b, format!("|F - F^| = {gap:.4} (tol 0.08), KS vs surrogate = {ks:.4} (tol 0.1)"));
}

#[test]
fn criterion_07_gumbel_limit() {
    let ks: Vec<f64> = [101, 201, 401].iter().map(|&n| check(gumbel(n), "ks_gumbel").1).collect();
    let (c_ok, corr) = check(gumbel(201), "abs_corr");
    let ok = ks[1] <= 0.2 && ks[1] <= ks[0] && ks[2] <= ks[1] && c_ok;
    verdict(7, ok, format!("KS(n=101,201,401) = {ks:.4?}, |corr| = {corr:.4}"));
}

#[test]
fn criterion_08_single_pair_tail() {
    let r = gumbel(401);
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 0..2 {
        let bin = r.summary[&format!("tail_binomial_x{k}")];
        let mc = r.summary[&format!("tail_monte_carlo_x{k}")];
        let lim = r.summary[&format!("tail_limit_x{k}")];
        let within = |v: f64| v > 0.0 && v / lim <= 2.0 && lim / v <= 2.0;
        ok &= within(bin) && within(mc);
        parts.push(format!("x={k}: binomial {bin:.4}, monte carlo {mc:.4}, limit {lim:.4}"));
    }
    verdict(8, ok, parts.join("; "));
}

#[test]
fn criterion_09_switching_coupling() {
    let r = coupling_report();
    let (a, frac) = check(r, "fraction_within_max_diff");
    let (b, viol) = check(r, "degree_violations");
    verdict(9, a && b, format!("fraction with max diff <= 8: {frac:.3} (tol 0.95), degree violations {viol}"));
}

#[test]
fn criterion_10_meta_degree() {
    let r = coupling_report();
    let (ok, rel) = check(r, "meta_degree_rel_error");
    verdict(
        10,
        ok,
        format!(
            "mean up-degree {:.1} vs predicted {:.1}, rel error {rel:.4} (tol 0.2)",
            r.summary["meta_degree_mean"], r.summary["meta_degree_predicted"]
        ),
    );
}

/// Exact law of the coupling output, computed from its definition.
fn coupling_law(meta: &BipartiteMetaGraph, eps: f64) -> Vec<Vec<f64>> {
    let (s, t) = (meta.left_len(), meta.right_len());
    let m = meta.edge_count() as f64;
    let good_l: Vec<bool> = (0..s).map(|x| meta.deg_left(x) as f64 * s as f64 >= (1.0 - eps) * m).collect();
    let good_r: Vec<bool> = (0..t).map(|y| meta.deg_right(y) as f64 * t as f64 >= (1.0 - eps) * m).collect();
    // Law of one coordinate given the edge endpoint `hat`.
    let side = |hat: usize, len: usize, good: &[bool], deg: &dyn Fn(usize) -> usize| -> Vec<f64> {
        let g = good.iter().filter(|&&b| b).count() as f64;
        let mut tilde = vec![0.0; len];
        let keep = if good[hat] { (1.0 - eps) * m / (len as f64 * deg(hat) as f64) } else { 0.0 };
        tilde[hat] += keep;
        for (v, &gv) in good.iter().enumerate() {
            if gv {
                tilde[v] += (1.0 - keep) / g;
            }
        }
        let bad = len as f64 - g;
        (0..len)
            .map(|v| {
                if bad == 0.0 {
                    tilde[v]
                } else if good[v] {
                    tilde[v] * g / len as f64
                } else {
                    (1.0 - g / len as f64) / bad
                }
            })
            .collect()
    };
    let mut law = vec![vec![0.0; t]; s];
    for &(xh, yh) in meta.edges() {
        let lx = side(xh, s, &good_l, &|x| meta.deg_left(x));
        let ly = side(yh, t, &good_r, &|y| meta.deg_right(y));
        for x in 0..s {
            for y in 0..t {
                law[x][y] += lx[x] * ly[y] / m;
            }
        }
    }
    law
}

#[test]
fn criterion_11_explicit_coupling() {
    let missing = [(0, 0), (0, 1), (1, 0)];
    let k44_minus = BipartiteMetaGraph::new(
        4,
        4,
        (0..4)
            .flat_map(|x| (0..4).map(move |y| (x, y)))
            .filter(|e| !missing.contains(e))
            .collect(),
    )
    .unwrap();
    let k35 = BipartiteMetaGraph::complete(3, 5);
    let instances = [
        ("4x4 eps=0.4", &k44_minus, 0.4, 0.0),
        ("4x4 eps=0.1", &k44_minus, 0.1, 0.25),
        ("K35", &k35, 0.1, 0.0),
    ];
    let runs = 100_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, meta, eps, delta)) in instances.into_iter().enumerate() {
        let coupler = Coupler::new(meta, eps, delta).unwrap();
        let mut rng = worker_rng(11, k as u64);
        let (s, t) = (meta.left_len(), meta.right_len());
        let mut cx = vec![0u64; s];
        let mut cy = vec![0u64; t];
        let mut miss = 0u64;
        for _ in 0..runs {
            let o = coupler.sample(&mut rng);
            cx[o.x] += 1;
            cy[o.y] += 1;
            miss += u64::from(!o.in_d);
        }
        let (_, px) = chi_square(&cx, &vec![runs as f64 / s as f64; s]).unwrap();
        let (_, py) = chi_square(&cy, &vec![runs as f64 / t as f64; t]).unwrap();
        let rate = miss as f64 / runs as f64;
        let law = coupling_law(meta, eps);
        let exact_miss: f64 = (0..s)
            .flat_map(|x| (0..t).map(move |y| (x, y)))
            .filter(|&(x, y)| !meta.contains(x, y))
            .map(|(x, y)| law[x][y])
            .sum();
        let se = (exact_miss * (1.0 - exact_miss) / runs as f64).sqrt().max(1e-9);
        let bound = miss_bound(eps, delta);
        let pass = px > 1e-3 && py > 1e-3 && rate <= bound && (rate - exact_miss).abs() <= 5.0 * se + 1e-12;
        ok &= pass;
        parts.push(format!(
            "{name}: p=({px:.3},{py:.3}) miss {rate:.4} exact {exact_miss:.4} bound {bound:.2}"
        ));
    }
    verdict(11, ok, parts.join("; "));
}

/// `φ`, `Δ₁`, `Δ₂` straight from the definitions over all `2^m` outcomes.
fn brute_coefficients(m: usize, probs: &[f64], dep: &[Vec<bool>]) -> (f64, f64, f64) {
    let pr = |pred: &dyn Fn(usize) -> bool| -> f64 { (0..1 << m).filter(|&s| pred(s)).map(|s| probs[s]).sum() };
    let marg: Vec<f64> = (0..m).map(|i| pr(&|s| s >> i & 1 == 1)).collect();
    let mut phi = 0.0f64;
    let (mut d1, mut d2) = (0.0, 0.0);
    for i in 0..m {
        let far: Vec<usize> = (0..i).filter(|&j| !dep[i][j]).collect();
        let union = |s: usize| far.iter().any(|&j| s >> j & 1 == 1);
        let both = pr(&|s| s >> i & 1 == 1 && union(s));
        phi = phi.max((both / marg[i] - pr(&|s| union(s))).abs());
        for j in 0..i {
            if dep[i][j] {
                d1 += pr(&|s| s >> i & 1 == 1 && s >> j & 1 == 1);
                d2 += marg[i] * marg[j];
            }
        }
    }
    (phi, d1, d2)
}

fn coefficients(n: usize) -> CoefficientReport {
    let params = RegularityParams::from_lambda(n, 0.5).unwrap();
    let chain = ChainConfig::new(&params, 1);
    estimate_coefficients(&params, 0.0, 0.0, &chain, 8, 2000, 1).unwrap()
}

#[test]
fn criterion_12_coefficients() {
    let (a, b) = (coefficients(101), coefficients(201));
    let (c101, c201) = (101.0 * a.delta2, 201.0 * b.delta2);
    let stable = c101 > 0.0 && c201 > 0.0 && (c101 / c201).max(c201 / c101) <= 2.0;

    let mut rng = worker_rng(12, 0);
    let mut dominated = 0;
    let mut instances = 0;
    let mut worst_slack = f64::INFINITY;
    for m in 2..=10usize {
        for _ in 0..20 {
            // Sparse random law with every event possible.
            let mut probs = vec![0.0; 1 << m];
            let support = 1 + rng.random_range(0..(1usize << m).min(40));
            for _ in 0..support {
                probs[rng.random_range(0..1usize << m)] += rng.random::<f64>();
            }
            for i in 0..m {
                probs[1 << i] += 0.05 * rng.random::<f64>() + 1e-3;
            }
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            let dep: Vec<Vec<bool>> = (0..m)
                .map(|i| (0..m).map(|j| i == j || rng.random_bool(0.3)).collect())
                .collect();
            let law = JointLaw::new(
                m,
                probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (s as u32, p)).collect(),
            )
            .unwrap();
            let digraph = DependencyDigraph::explicit(
                dep.iter()
                    .map(|row| row.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect())
                    .collect(),
            )
            .unwrap();
            let lib = law.coefficients(&digraph).unwrap();
            let (phi, d1, d2) = brute_coefficients(m, &probs, &dep);
            assert!((lib.phi - phi).abs() < 1e-9 && (lib.delta1 - d1).abs() < 1e-9 && (lib.delta2 - d2).abs() < 1e-9);
            let bound = extremal_bound(&lib, &law.marginals()).unwrap();
            let disc = law.discrepancy();
            instances += 1;
            if disc <= bound + 1e-12 {
                dominated += 1;
            }
            worst_slack = worst_slack.min(bound - disc);
        }
    }
    let ok = stable && dominated == instances;
    verdict(
        12,
        ok,
        format!(
            "n*Delta2 = {c101:.3} (n=101), {c201:.3} (n=201); bound dominates {dominated}/{instances} synthetic instances (min slack {worst_slack:.3e})"
        ),
    );
}

#[test]
fn criterion_13_determinism() {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [
        ExperimentKind::Gumbel,
        ExperimentKind::LocalLimit,
        ExperimentKind::Coupling,
        ExperimentKind::OracleValidation,
    ] {
        let mut c = ExperimentConfig::defaults(kind);
        if kind != ExperimentKind::OracleValidation {
            c.n = 41;
            c.samples = 100;
            c.max_h_offset = 3;
            c.meta_degree_samples = 8;
        } else {
            c.oracle_sizes = vec![(5, 2), (6, 3), (8, 4)];
        }
        let render = |c: &ExperimentConfig| {
            let r = run_experiment(c).unwrap();
            let mut csv = Vec::new();
            r.records.write_csv(&mut csv).unwrap();
            (r.to_json().unwrap(), csv)
        };
        let same = render(&c) == render(&c);
        ok &= same;
        parts.push(format!("{}={}", kind.as_str(), if same { "identical" } else { "differs" }));
    }
    verdict(13, ok, parts.join(" "));
}
