//! Closed-form quantities: centring and scaling constants, local limit
//! probabilities, the binomial approximation, Gumbel laws and tail
//! asymptotics. Binomial coefficients are evaluated through `ln Γ` and
//! exponentiated once per probability.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::graph::{pair_count, DegreeSequence, RegularityParams, Vertex};

/// `ln C(n, k)`, or `-inf` outside `0 <= k <= n`.
pub fn ln_choose(n: i64, k: i64) -> f64 {
    if n < 0 || k < 0 || k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// Centring `a_{n,d}` and scale `b_{n,d}` for the extreme common-neighbour counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub a: f64,
    pub b: f64,
}

impl ScalingConstants {
    /// `(X_max - a) / b`.
    pub fn scale_max(&self, x_max: f64) -> f64 {
        (x_max - self.a) / self.b
    }

    /// `(2λ²n - a - X_min) / b`.
    pub fn scale_min(&self, params: &RegularityParams, x_min: f64) -> f64 {
        (2.0 * params.lambda().powi(2) * params.n as f64 - self.a - x_min) / self.b
    }
}

pub fn scaling_constants(params: &RegularityParams) -> Result<ScalingConstants> {
    let n = params.n;
    if n < 3 {
        return Err(invalid(format!("scaling constants need n >= 3, got {n}")));
    }
    let nf = n as f64;
    let lam = params.lambda();
    let ln_n = nf.ln();
    let bracket = 1.0
        - ln_n.ln() / (8.0 * ln_n)
        - (32.0 * std::f64::consts::PI).ln() / (8.0 * ln_n);
    let a = lam * lam * nf + 2.0 * lam * (1.0 - lam) * (nf * ln_n).sqrt() * bracket;
    let b = 0.5 * lam * (1.0 - lam) * (nf / ln_n).sqrt();
    Ok(ScalingConstants { a, b })
}

/// Centring/scaling for the maximum of `m` iid `Bin(trials, p)` variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomMaxConstants {
    pub a_star: f64,
    pub b_star: f64,
    pub trials: u64,
    pub m: u64,
    pub p: f64,
}

pub fn binom_max_constants(trials: u64, m: u64, p: f64) -> Result<BinomMaxConstants> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p = {p} is outside (0,1)")));
    }
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    if m < 2 {
        return Err(invalid(format!("need m >= 2, got {m}")));
    }
    let nf = trials as f64;
    let ln_m = (m as f64).ln();
    let var = nf * p * (1.0 - p);
    let bracket = 1.0
        - ln_m.ln() / (4.0 * ln_m)
        - (2.0 * std::f64::consts::PI.sqrt()).ln() / (2.0 * ln_m);
    Ok(BinomMaxConstants {
        a_star: p * nf + (2.0 * var * ln_m).sqrt() * bracket,
        b_star: (var / (2.0 * ln_m)).sqrt(),
        trials,
        m,
        p,
    })
}

/// `Bin(N, p)` with `N = ⌊λn/(2-λ)⌋`, `p = λ(2-λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomApprox {
    pub trials: u64,
    pub p: f64,
}

impl BinomApprox {
    pub fn mean(&self) -> f64 {
        self.trials as f64 * self.p
    }

    pub fn variance(&self) -> f64 {
        self.mean() * (1.0 - self.p)
    }

    pub fn pmf(&self, k: i64) -> f64 {
        binomial_pmf(self.trials, self.p, k)
    }
}

pub fn binom_approx_params(params: &RegularityParams) -> BinomApprox {
    let lam = params.lambda();
    let trials = (lam / (2.0 - lam) * params.n as f64).floor() as u64;
    let p = lam * (2.0 - lam);
    debug_assert!(p > 0.0 && p < 1.0);
    BinomApprox { trials, p }
}

pub fn binomial_ln_pmf(trials: u64, p: f64, k: i64) -> f64 {
    if k < 0 || k as u64 > trials {
        return f64::NEG_INFINITY;
    }
    let n = trials as i64;
    ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
}

pub fn binomial_pmf(trials: u64, p: f64, k: i64) -> f64 {
    binomial_ln_pmf(trials, p, k).exp()
}

/// `Pr(ξ > t)` for `ξ ~ Bin(trials, p)`, summed exactly.
pub fn binomial_upper_tail(trials: u64, p: f64, t: f64) -> f64 {
    let start = if t < 0.0 { 0 } else { t.floor() as i64 + 1 };
    (start.max(0)..=trials as i64)
        .map(|k| binomial_pmf(trials, p, k))
        .fold(0.0, |acc, q| acc + q)
        .min(1.0)
}

/// `Pr(ξ < t)` for `ξ ~ Bin(trials, p)`.
pub fn binomial_lower_tail(trials: u64, p: f64, t: f64) -> f64 {
    let end = (t.ceil() as i64 - 1).min(trials as i64);
    (0..=end)
        .map(|k| binomial_pmf(trials, p, k))
        .fold(0.0, |acc, q| acc + q)
        .min(1.0)
}

/// What `X_ij` is conditioned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Edge,
    NonEdge,
    Unconditional,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Edge, Condition::NonEdge, Condition::Unconditional];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Edge => "edge",
            Condition::NonEdge => "non-edge",
            Condition::Unconditional => "unconditional",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge" => Ok(Condition::Edge),
            "non-edge" | "nonedge" => Ok(Condition::NonEdge),
            "unconditional" => Ok(Condition::Unconditional),
            other => Err(invalid(format!("unknown condition {other:?}"))),
        }
    }
}

/// Window `|h - λ²n| <= n^0.6` inside which the unconditional formula is trusted.
pub fn unconditional_window(params: &RegularityParams) -> (f64, f64) {
    let centre = params.lambda().powi(2) * params.n as f64;
    let half = (params.n as f64).powf(0.6);
    (centre - half, centre + half)
}

/// Local limit approximation of `Pr(X_ij = h | condition)`.
///
/// Values of `h` outside `0..=d` get probability zero. The unconditional
/// formula logs a warning outside [`unconditional_window`].
pub fn local_limit_prob(params: &RegularityParams, h: i64, condition: Condition) -> f64 {
    local_limit_ln_prob(params, h, condition).exp()
}

pub fn local_limit_ln_prob(params: &RegularityParams, h: i64, condition: Condition) -> f64 {
    let n = params.n as i64;
    let d = params.d as i64;
    if h < 0 || h > d {
        return f64::NEG_INFINITY;
    }
    let lam = params.lambda();
    let tilt = lam / (1.0 - lam) - h as f64 / (lam * (1.0 - lam) * n as f64);
    match condition {
        Condition::NonEdge => {
            ln_choose(d, h) + ln_choose(n - d - 2, d - h) - ln_choose(n - 2, d) + tilt
        }
        Condition::Edge => {
            ln_choose(d - 1, h) + ln_choose(n - d - 1, d - h - 1) - ln_choose(n - 2, d - 1) + tilt
        }
        Condition::Unconditional => {
            let (lo, hi) = unconditional_window(params);
            if (h as f64) < lo || (h as f64) > hi {
                log::warn!(
                    "h = {h} lies outside the validity window [{lo:.1}, {hi:.1}] for n = {n}"
                );
            }
            ln_choose(d, h) + ln_choose(n - 1 - d, d - h) - ln_choose(n - 1, d)
        }
    }
}

/// The formula evaluated at every `h` in `0..=d`.
pub fn local_limit_pmf(params: &RegularityParams, condition: Condition) -> Vec<f64> {
    (0..=params.d as i64)
        .map(|h| match condition {
            // Skip the window warning when tabulating the whole support.
            Condition::Unconditional => {
                let (n, d) = (params.n as i64, params.d as i64);
                (ln_choose(d, h) + ln_choose(n - 1 - d, d - h) - ln_choose(n - 1, d)).exp()
            }
            c => local_limit_prob(params, h, c),
        })
        .collect()
}

/// Standard Gumbel cdf `exp(-exp(-x))`.
pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// Limit of the scaled (max, min) pair: `exp(-exp(-x) - exp(x'))`.
pub fn joint_limit_cdf(x: f64, x_prime: f64) -> f64 {
    (-(-x).exp() - x_prime.exp()).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// Asymptotic single-pair tail: `e^{-x}/C(n,2)` (upper) or `e^{x}/C(n,2)` (lower).
pub fn tail_prob_asymptotic(params: &RegularityParams, x: f64, side: Side) -> f64 {
    let m = pair_count(params.n) as f64;
    match side {
        Side::Upper => (-x).exp() / m,
        Side::Lower => x.exp() / m,
    }
}

/// Deviation threshold `√n · ln n`.
pub fn concentration_threshold(n: usize) -> f64 {
    let nf = n as f64;
    nf.sqrt() * nf.ln()
}

/// Frequency of `|X - λ²n| > √n ln n` among observed counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub centre: f64,
    pub threshold: f64,
    pub samples: usize,
    pub exceedances: usize,
    pub frequency: f64,
    /// `Pr(|ξ - λ²n| > threshold)` for the binomial approximation.
    pub binomial_tail: f64,
}

pub fn hypergeom_tail_bound_check(
    params: &RegularityParams,
    observed: &[u32],
) -> ConcentrationReport {
    let centre = params.lambda().powi(2) * params.n as f64;
    let threshold = concentration_threshold(params.n);
    let exceedances = observed
        .iter()
        .filter(|&&x| (x as f64 - centre).abs() > threshold)
        .count();
    let approx = binom_approx_params(params);
    let binomial_tail = binomial_upper_tail(approx.trials, approx.p, centre + threshold)
        + binomial_lower_tail(approx.trials, approx.p, centre - threshold);
    ConcentrationReport {
        centre,
        threshold,
        samples: observed.len(),
        exceedances,
        frequency: if observed.is_empty() {
            0.0
        } else {
            exceedances as f64 / observed.len() as f64
        },
        binomial_tail,
    }
}

/// Asymptotic probability that the neighbourhood of `i` is exactly `set`
/// under a uniform graph with degree sequence `ds`:
/// `√(2πλ(1-λ)n) Π_{j∈A} d_j/(n-1) Π_{j∉A∪{i}} (1 - d_j/(n-1))`,
/// with `λ = d̄/(n-1)`.
pub fn neighbourhood_prob_formula(ds: &DegreeSequence, i: Vertex, set: &[Vertex]) -> Result<f64> {
    let n = ds.n();
    if i >= n || set.iter().any(|&v| v >= n || v == i) {
        return Err(invalid("neighbourhood set must avoid i and lie in [n]"));
    }
    if set.len() != ds.degrees()[i] {
        return Err(invalid(format!(
            "|A| = {} differs from d_i = {}",
            set.len(),
            ds.degrees()[i]
        )));
    }
    let nf = n as f64;
    let lam = ds.mean() / (nf - 1.0);
    if !(lam > 0.0 && lam < 1.0) {
        return Err(invalid("density must lie strictly inside (0,1)"));
    }
    let mut in_set = vec![false; n];
    for &v in set {
        in_set[v] = true;
    }
    let mut ln_p = 0.5 * (2.0 * std::f64::consts::PI * lam * (1.0 - lam) * nf).ln();
    for (j, &dj) in ds.degrees().iter().enumerate() {
        if j == i {
            continue;
        }
        let q = dj as f64 / (nf - 1.0);
        ln_p += if in_set[j] { q.ln() } else { (1.0 - q).ln() };
    }
    Ok(ln_p.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half(n: usize) -> RegularityParams {
        RegularityParams::from_lambda(n, 0.5).unwrap()
    }

    #[test]
    fn ln_choose_small_values() {
        assert!((ln_choose(5, 2) - 10f64.ln()).abs() < 1e-13);
        assert!((ln_choose(8, 4) - 70f64.ln()).abs() < 1e-13);
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
        assert_eq!(ln_choose(3, -1), f64::NEG_INFINITY);
        assert_eq!(ln_choose(-2, 0), f64::NEG_INFINITY);
    }

    #[test]
    fn scaling_constants_second_evaluation() {
        // Term-by-term re-evaluation at λ = 1/2, n = 401.
        let p = half(401);
        let s = scaling_constants(&p).unwrap();
        let n = 401f64;
        let l = n.ln();
        let ll = l.ln();
        let c = (32.0 * std::f64::consts::PI).ln();
        let a = 0.25 * n + 0.5 * (n * l).sqrt() * (1.0 - ll / (8.0 * l) - c / (8.0 * l));
        let b = 0.125 * (n / l).sqrt();
        assert!((s.a - a).abs() < 1e-12);
        assert!((s.b - b).abs() < 1e-12);
        // Frozen values (independently computed in double precision).
        assert!((s.a - 121.490_816_388_621_23).abs() < 1e-9);
        assert!((s.b - 1.022_410_326_807_606_8).abs() < 1e-12);
    }

    #[test]
    fn scale_ratio_and_positive_shift() {
        // λ = 1/3 keeps d integral at both n = 100 and n = 400.
        let b = |n: usize| {
            let p = RegularityParams::from_lambda(n, 1.0 / 3.0).unwrap();
            scaling_constants(&p).unwrap().b
        };
        let expected = 2.0 * (100f64.ln() / 400f64.ln()).sqrt();
        assert!((b(400) / b(100) - expected).abs() < 1e-12);
        for n in (101..2000).step_by(4) {
            let p = half(n);
            let s = scaling_constants(&p).unwrap();
            assert!(s.a - 0.25 * n as f64 > 0.0, "n = {n}");
            assert!(s.b > 0.0);
        }
    }

    #[test]
    fn binom_max_symmetry_at_fixed_point() {
        let (n, m, p) = (100, 45, 0.3);
        let lo = binom_max_constants(n, m, p).unwrap();
        let hi = binom_max_constants(n, m, 1.0 - p).unwrap();
        assert!((hi.a_star - (lo.a_star + (1.0 - 2.0 * p) * n as f64)).abs() < 1e-12);
        assert!((hi.b_star - lo.b_star).abs() < 1e-12);
        let half = binom_max_constants(n, m, 0.5).unwrap();
        let mirrored = binom_max_constants(n, m, 0.5).unwrap();
        assert_eq!(half.a_star, mirrored.a_star);
        assert!(binom_max_constants(n, m, 1.0).is_err());
        assert!(binom_max_constants(n, m, 0.0).is_err());
    }

    #[test]
    fn binomial_approximation_parameters() {
        let a = binom_approx_params(&half(9));
        assert_eq!(a.trials, 3);
        assert!((a.p - 0.75).abs() < 1e-15);
        let a = binom_approx_params(&half(401));
        assert_eq!(a.trials, 133);
        assert!((a.mean() - 99.75).abs() < 1e-12);
        assert!((a.mean() - 0.25 * 401.0).abs() <= 1.0);
    }

    #[test]
    fn hand_computed_unconditional_value() {
        let p = half(9);
        let v = local_limit_prob(&p, 2, Condition::Unconditional);
        assert!((v - 36.0 / 70.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_of_support() {
        // d < (n-2)/2: h = d uses C(n-d-2, 0) = 1.
        let p = RegularityParams::new(12, 3).unwrap();
        assert!(local_limit_prob(&p, 3, Condition::NonEdge) > 0.0);
        assert_eq!(local_limit_prob(&p, 4, Condition::NonEdge), 0.0);
        assert_eq!(local_limit_prob(&p, -1, Condition::Edge), 0.0);
        // Edge case: h = d is impossible (i would need d common neighbours plus j).
        assert_eq!(local_limit_prob(&p, 3, Condition::Edge), 0.0);
    }

    #[test]
    fn gumbel_values() {
        assert!((gumbel_cdf(0.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((joint_limit_cdf(0.0, 0.0) - (-2f64).exp()).abs() < 1e-15);
        for x in [-2.0, 0.0, 1.5] {
            assert_eq!(joint_limit_cdf(x, f64::NEG_INFINITY), gumbel_cdf(x));
        }
        assert_eq!(gumbel_cdf(f64::INFINITY), 1.0);
        assert_eq!(gumbel_cdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn tail_asymptotics() {
        let p = half(401);
        let m = pair_count(401) as f64;
        assert!((tail_prob_asymptotic(&p, 0.0, Side::Upper) - 1.0 / m).abs() < 1e-18);
        assert_eq!(
            tail_prob_asymptotic(&p, 0.0, Side::Upper),
            tail_prob_asymptotic(&p, 0.0, Side::Lower)
        );
    }

    #[test]
    fn concentration_threshold_value() {
        let t = concentration_threshold(401);
        assert!((t - 401f64.sqrt() * 401f64.ln()).abs() < 1e-12);
        assert!((t - 120.0).abs() < 0.2);
        let p = half(401);
        let report = hypergeom_tail_bound_check(&p, &[100, 101, 250]);
        assert_eq!(report.exceedances, 1);
        assert!(report.binomial_tail <= 1e-4);
    }

    #[test]
    fn binomial_tails_sum_to_one() {
        let (n, p) = (67, 0.75);
        for t in [10.0, 49.5, 50.0, 66.2] {
            let total = binomial_upper_tail(n, p, t)
                + binomial_lower_tail(n, p, t)
                + if t.fract() == 0.0 {
                    binomial_pmf(n, p, t as i64)
                } else {
                    0.0
                };
            assert!((total - 1.0).abs() < 1e-12, "t = {t}: {total}");
        }
    }

    /// Worst relative gap between `λ·(b) + (1-λ)·(a)` and `(c)` within two
    /// standard deviations of the centre.
    fn mixture_gap(n: usize) -> f64 {
        let p = RegularityParams::from_lambda(n, 1.0 / 3.0).unwrap();
        let lam = p.lambda();
        let centre = lam * lam * p.n as f64;
        let half_width = 2.0 * (lam * lam * (1.0 - lam * lam) * p.n as f64).sqrt();
        let mut worst = 0.0f64;
        for h in (centre - half_width).ceil() as i64..=(centre + half_width).floor() as i64 {
            let mix = lam * local_limit_prob(&p, h, Condition::Edge)
                + (1.0 - lam) * local_limit_prob(&p, h, Condition::NonEdge);
            let c = local_limit_prob(&p, h, Condition::Unconditional);
            worst = worst.max((mix / c - 1.0).abs());
        }
        worst
    }

    #[test]
    fn total_probability_identity() {
        let p = RegularityParams::from_lambda(1000, 1.0 / 3.0).unwrap();
        let lam = p.lambda();
        let centre = (lam * lam * p.n as f64).round() as i64;
        for h in centre - 1..=centre + 1 {
            let mix = lam * local_limit_prob(&p, h, Condition::Edge)
                + (1.0 - lam) * local_limit_prob(&p, h, Condition::NonEdge);
            let c = local_limit_prob(&p, h, Condition::Unconditional);
            assert!((mix / c - 1.0).abs() < 1e-2, "h = {h}: {mix} vs {c}");
        }
        // The exponential tilt skews the conditional formulas by O(n^{-1/2})
        // across the bulk, so the two-sigma gap only shrinks slowly.
        let (g1, g4) = (mixture_gap(1000), mixture_gap(4000));
        assert!(g1 < 0.15 && g4 < 0.6 * g1, "{g1} {g4}");
    }

    #[test]
    fn unconditional_matches_binomial_near_centre() {
        let p = half(10_001);
        let approx = binom_approx_params(&p);
        let centre = 0.25 * p.n as f64;
        let w = 3.0 * approx.variance().sqrt();
        for h in (centre - w).ceil() as i64..=(centre + w).floor() as i64 {
            let r = local_limit_prob(&p, h, Condition::Unconditional) / approx.pmf(h);
            assert!((0.9..=1.1).contains(&r), "h = {h}: ratio {r}");
        }
    }

    #[test]
    fn neighbourhood_formula_requires_matching_size() {
        let ds = DegreeSequence::regular(8, 3).unwrap();
        assert!(neighbourhood_prob_formula(&ds, 0, &[1, 2]).is_err());
        assert!(neighbourhood_prob_formula(&ds, 0, &[0, 1, 2]).is_err());
        let v = neighbourhood_prob_formula(&ds, 0, &[1, 2, 3]).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }

    proptest! {
        #[test]
        fn binom_max_symmetry(n in 1u64..10_000, m in 2u64..1_000_000, p in 0.01f64..0.99) {
            let lo = binom_max_constants(n, m, p).unwrap();
            let hi = binom_max_constants(n, m, 1.0 - p).unwrap();
            let scale = lo.a_star.abs().max(1.0);
            prop_assert!((hi.a_star - lo.a_star - (1.0 - 2.0 * p) * n as f64).abs() <= 1e-12 * scale);
            prop_assert!((hi.b_star - lo.b_star).abs() <= 1e-12 * lo.b_star.max(1.0));
        }

        #[test]
        fn probabilities_are_finite_and_bounded(
            k in 1usize..60,
            lam_idx in 1usize..9,
            h in 0i64..200,
        ) {
            let n = 2 * k * 5 + 1; // n-1 divisible by 10
            let d = lam_idx * (n - 1) / 10;
            if let Ok(p) = RegularityParams::new(n, d) {
                for c in Condition::ALL {
                    let v = local_limit_pmf(&p, c).get(h as usize).copied().unwrap_or(0.0);
                    prop_assert!(v.is_finite() && v >= 0.0);
                    if c == Condition::Unconditional {
                        prop_assert!(v <= 1.0 + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn gumbel_monotone(x in -10f64..10.0, dx in 0f64..5.0, y in -10f64..10.0) {
            prop_assert!(gumbel_cdf(x + dx) >= gumbel_cdf(x));
            prop_assert!(joint_limit_cdf(x + dx, y) >= joint_limit_cdf(x, y));
            prop_assert!(joint_limit_cdf(x, y + dx) <= joint_limit_cdf(x, y));
            let v = joint_limit_cdf(x, y);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
