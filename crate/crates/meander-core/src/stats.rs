//! Statistical test machinery for the Monte Carlo verification harness:
//! Kolmogorov–Smirnov one- and two-sample tests with asymptotic p-values,
//! normal-CDF utilities, a nested-event log-log slope fit for survival
//! curves, and an exact small-n Spearman trend test.
//!
//! # References
//! - Press et al., *Numerical Recipes* (3rd ed.), §6.14 (Kolmogorov
//!   distribution and the effective-n correction √n + 0.12 + 0.11/√n).
//! - Kolmogorov's asymptotic law Q(t) = 2 Σ (−1)^{k−1} e^{−2k²t²} and its
//!   theta-function dual for small t.

use crate::error::{Error, Result};

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    /// Supremum distance between the compared distribution functions.
    pub statistic: f64,
    /// Asymptotic p-value (probability of a distance at least this large
    /// under the null).
    pub p_value: f64,
    /// Effective sample size entering the asymptotic formula.
    pub n_effective: f64,
}

/// Complementary CDF Q(t) = P(K > t) of the Kolmogorov distribution.
///
/// Uses the alternating-exponential series for t ≥ 1.18 and the
/// theta-function representation below (both converge to machine precision
/// with three terms in their regions; the crossover follows the standard
/// Numerical Recipes split).
pub fn kolmogorov_q(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        let y = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * t * t)).exp();
        let p = (2.0 * std::f64::consts::PI).sqrt() / t * (y + y.powi(9) + y.powi(25) + y.powi(49));
        1.0 - p
    } else {
        let y = (-2.0 * t * t).exp();
        (2.0 * (y - y.powi(4) + y.powi(9) - y.powi(16))).clamp(0.0, 1.0)
    }
}

/// KS p-value from a distance `d` at effective sample size `ne`, with the
/// finite-n correction (√ne + 0.12 + 0.11/√ne)·d.
fn ks_p_value(d: f64, ne: f64) -> f64 {
    let sqrt_ne = ne.sqrt();
    kolmogorov_q((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d)
}

/// Typical KS distance scale under the null at sample size n: E[D_n] ≈
/// 0.8687/√n. Used as a noise floor when asking whether distances are
/// "statistically zero".
pub fn ks_noise_floor(n: usize) -> f64 {
    0.8687 / (n as f64).sqrt()
}

/// One-sample KS test of `sample` against the continuous CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsTest> {
    if sample.is_empty() {
        return Err(Error::domain("KS test needs a non-empty sample"));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("sample values must be comparable"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        if !(0.0..=1.0 + 1e-12).contains(&f) {
            return Err(Error::domain(format!(
                "cdf returned {f} outside [0, 1] at x = {x}"
            )));
        }
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(KsTest {
        statistic: d,
        p_value: ks_p_value(d, n),
        n_effective: n,
    })
}

/// Two-sample KS test; the asymptotic p-value uses the effective size
/// n₁n₂/(n₁+n₂).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS test needs two non-empty samples"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).expect("sample values must be comparable"));
    ys.sort_by(|p, q| p.partial_cmp(q).expect("sample values must be comparable"));
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    // Sweep the merged order; on ties advance both sides before comparing,
    // so identical samples give distance 0.
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsTest {
        statistic: d,
        p_value: ks_p_value(d, ne),
        n_effective: ne,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// Binomial standard error √(p(1−p)/n) of an empirical fraction.
pub fn binomial_stderr(p_hat: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// |estimate − expected| / stderr, the z-statistic of a point estimate.
pub fn z_score(estimate: f64, expected: f64, stderr: f64) -> f64 {
    ((estimate - expected) / stderr).abs()
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Pearson correlation coefficient of two equal-length samples.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::domain(
            "correlation needs two equal-length samples (n ≥ 2)",
        ));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Weighted least-squares slope of ln S against ln t for survival fractions
/// S(t) estimated from one ensemble of n paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
}

/// Fit the log-log slope of a survival curve S(t) measured at increasing
/// times on a single ensemble of `n` paths.
///
/// Because the survival events are nested (surviving to t_j implies
/// surviving to t_i ≤ t_j), the estimates are positively correlated:
/// cov(Ŝ_i, Ŝ_j) = S_j(1 − S_i)/n for t_i ≤ t_j. The slope variance uses
/// this full covariance under the delta method ln Ŝ ≈ ln S + (Ŝ − S)/S.
pub fn survival_loglog_slope(ts: &[f64], survival: &[f64], n: u64) -> Result<SlopeFit> {
    if ts.len() != survival.len() || ts.len() < 2 {
        return Err(Error::domain("slope fit needs at least two (t, S) points"));
    }
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("times must be strictly increasing"));
    }
    if survival.iter().any(|s| !(0.0 < *s && *s <= 1.0)) {
        return Err(Error::domain("survival fractions must lie in (0, 1]"));
    }
    let m = ts.len();
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = survival.iter().map(|s| s.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * y).sum::<f64>() / sxx;

    // var(slope) = aᵀ Σ a with a_i = (x_i − x̄)/Sxx. For nested events,
    // cov(Ŝ_i, Ŝ_j) = S_late(1 − S_early)/n, so after the delta method
    // Σ_ij = cov(ln Ŝ_i, ln Ŝ_j) ≈ (1 − S_early) / (n · S_early) with
    // "early" the smaller of the two times.
    let nf = n as f64;
    let mut var = 0.0;
    for i in 0..m {
        for j in 0..m {
            let s_early = survival[i.min(j)];
            let cov = (1.0 - s_early) / (nf * s_early);
            var += (xs[i] - xbar) * (xs[j] - xbar) * cov;
        }
    }
    var /= sxx * sxx;
    Ok(SlopeFit {
        slope,
        stderr: var.max(0.0).sqrt(),
    })
}

/// Exact permutation p-value for a decreasing trend: the probability, under
/// a uniformly random ordering, of a Spearman rank correlation with the
/// index sequence at most as large as the observed one. Perfectly decreasing
/// data of length k gives p = 1/k!.
///
/// Ties are not expected (statistics of continuous data); they are resolved
/// by position, which is conservative for trend detection.
pub fn spearman_decreasing_p(xs: &[f64]) -> Result<f64> {
    let k = xs.len();
    if k < 3 {
        return Err(Error::domain("trend test needs at least 3 points"));
    }
    if k > 8 {
        return Err(Error::domain("exact permutation test limited to 8 points"));
    }
    // Rank correlation with the index 0..k reduces to the sum Σ i·rank_i;
    // smaller sums mean more decreasing arrangements.
    let ranks = rank_by_position(xs);
    let observed = trend_statistic(&ranks);

    let mut perm: Vec<usize> = (0..k).collect();
    let (mut at_most, mut total) = (0u64, 0u64);
    permute(&mut perm, 0, &mut |p: &[usize]| {
        total += 1;
        let stat: i64 = p.iter().enumerate().map(|(i, &r)| (i * r) as i64).sum();
        if stat <= observed {
            at_most += 1;
        }
    });
    Ok(at_most as f64 / total as f64)
}

fn rank_by_position(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("comparable values"));
    let mut ranks = vec![0usize; xs.len()];
    for (rank, &i) in idx.iter().enumerate() {
        ranks[i] = rank;
    }
    ranks
}

fn trend_statistic(ranks: &[usize]) -> i64 {
    ranks.iter().enumerate().map(|(i, &r)| (i * r) as i64).sum()
}

fn permute(arr: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == arr.len() {
        visit(arr);
        return;
    }
    for i in k..arr.len() {
        arr.swap(k, i);
        permute(arr, k + 1, visit);
        arr.swap(k, i);
    }
}
