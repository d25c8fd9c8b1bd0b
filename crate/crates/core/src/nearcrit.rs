//! Off-critical quantities: correlation length, the one-arm and cluster
//! size proxies of θ and χ, log-log exponent fits, Russo's formula and the
//! scaling-relation table.

use std::collections::HashSet;
use std::sync::Arc;

use crate::arms::{crossing_strands, horizontal_crossing, pivotal_count};
use crate::connectivity::origin_reach;
use crate::error::{Error, Result};
use crate::lattice::{AxialCoord, Region, NONE};
use crate::sampler::{sample, Configuration, LazyConfig, SiteColors};
use crate::stats::{count_true, count_true_with, derive_seed, sums, sums_with};

pub use crate::stats::Estimate;

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("p = {p} outside [0, 1]")))
    }
}

fn check_samples(samples: u64) -> Result<()> {
    if samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    Ok(())
}

fn ball(n: u32) -> Result<Arc<Region>> {
    Ok(Arc::new(Region::ball(n)?))
}

/// `ℙ_p([0, n]² is crossed horizontally by an open path)` on the rhombus.
pub fn crossing_estimate(p: f64, n: u32, samples: u64, seed: u64) -> Result<Estimate> {
    crossing_estimate_rect(p, n, n, samples, seed)
}

/// `ℙ_p([0, w] × [0, h] is crossed horizontally)`, the crossing joining the
/// sides at distance `w`.
pub fn crossing_estimate_rect(p: f64, w: u32, h: u32, samples: u64, seed: u64) -> Result<Estimate> {
    check_p(p)?;
    check_samples(samples)?;
    let r = Arc::new(Region::rhombus(w, h)?);
    let hits = count_true(samples, |i| horizontal_crossing(&sample(&r, p, seed, i)).unwrap());
    Ok(Estimate::from_successes(hits, samples, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CorrLength {
    Finite(u32),
    /// No scale up to the bound had crossing probability at most `ε`.
    AtLeast(u32),
}

impl CorrLength {
    pub fn value(self) -> u32 {
        match self {
            CorrLength::Finite(n) | CorrLength::AtLeast(n) => n,
        }
    }

    pub fn is_capped(self) -> bool {
        matches!(self, CorrLength::AtLeast(_))
    }
}

/// Result of a correlation-length search with every probed scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrLengthScan {
    pub length: CorrLength,
    pub probes: Vec<(u32, Estimate)>,
}

/// Smallest `n` whose estimated crossing probability is at most `eps`,
/// by doubling then bisection; each scale gets its own seed. For `p > 1/2`
/// the search runs at `1 − p`.
pub fn correlation_length(p: f64, eps: f64, n_max: u32, samples: u64, seed: u64) -> Result<CorrLengthScan> {
    correlation_length_rect(p, eps, 1, n_max, samples, seed)
}

/// [`correlation_length`] for the crossing of `[0, n] × [0, aspect · n]`;
/// the decay bound below criticality is stated for `aspect = 2`.
pub fn correlation_length_rect(
    p: f64,
    eps: f64,
    aspect: u32,
    n_max: u32,
    samples: u64,
    seed: u64,
) -> Result<CorrLengthScan> {
    check_p(p)?;
    if aspect == 0 {
        return Err(Error::domain("aspect must be positive"));
    }
    check_samples(samples)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("ε = {eps} outside (0, 1)")));
    }
    if n_max == 0 {
        return Err(Error::domain("n_max must be positive"));
    }
    let q = if p > 0.5 { 1.0 - p } else { p };
    let mut probes = Vec::new();
    let small = |n: u32, probes: &mut Vec<(u32, Estimate)>| -> Result<bool> {
        let e = crossing_estimate_rect(q, n, aspect * n, samples, derive_seed(seed, n as u64))?;
        probes.push((n, e));
        Ok(e.mean <= eps)
    };
    let (mut lo, mut hi) = (0u32, 1u32);
    loop {
        if small(hi, &mut probes)? {
            break;
        }
        if hi >= n_max {
            return Ok(CorrLengthScan { length: CorrLength::AtLeast(n_max), probes });
        }
        lo = hi;
        hi = (2 * hi).min(n_max);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if small(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CorrLengthScan { length: CorrLength::Finite(hi), probes })
}

/// `ℙ_p(0 ↔ ∂Λ_n)`, exploring only the cluster of the origin.
pub fn theta_estimate(p: f64, n: u32, samples: u64, seed: u64) -> Result<Estimate> {
    check_p(p)?;
    check_samples(samples)?;
    if n == 0 {
        return Err(Error::domain("θ proxy needs n >= 1"));
    }
    let r = ball(n)?;
    let hits = count_true_with(
        samples,
        || (LazyConfig::new(&r, p, seed, 0), Vec::new()),
        |(c, scratch), i| {
            c.reset(i);
            origin_reach(c, n, scratch) == Some(n)
        },
    );
    Ok(Estimate::from_successes(hits, samples, seed))
}

/// Size of the open cluster of the origin inside the region.
/// The visited set is hashed so the cost follows the cluster, not the region.
pub fn origin_cluster_size<C: SiteColors>(colors: &mut C, stack: &mut Vec<u32>, seen: &mut HashSet<u32>) -> u64 {
    let Some(o) = colors.region().ordinal(AxialCoord::ORIGIN) else {
        return 0;
    };
    if !colors.open(o) {
        return 0;
    }
    seen.clear();
    stack.clear();
    stack.push(o as u32);
    seen.insert(o as u32);
    let mut size = 0;
    while let Some(u) = stack.pop() {
        size += 1;
        for d in 0..6 {
            let v = colors.region().adjacency()[u as usize][d];
            if v != NONE && !seen.contains(&v) && colors.open(v as usize) {
                seen.insert(v);
                stack.push(v);
            }
        }
    }
    size
}

/// Mean of `|C(0) ∩ Λ_n|`, the truncated susceptibility.
pub fn chi_estimate(p: f64, n: u32, samples: u64, seed: u64) -> Result<Estimate> {
    check_p(p)?;
    check_samples(samples)?;
    let r = ball(n)?;
    let s = sums_with(
        samples,
        || (LazyConfig::new(&r, p, seed, 0), Vec::new(), HashSet::new()),
        |(c, stack, seen), i| {
            c.reset(i);
            origin_cluster_size(c, stack, seen)
        },
    );
    Ok(Estimate::from_sums(s, seed))
}

/// `ℙ_p(A_1010(N))`: four alternating arms from the first ring to `Λ_N`.
pub fn four_arm_estimate(p: f64, big_n: u32, samples: u64, seed: u64) -> Result<Estimate> {
    check_p(p)?;
    check_samples(samples)?;
    if big_n < 2 {
        return Err(Error::domain("four-arm event needs N >= 2"));
    }
    let r = ball(big_n)?;
    let hits = count_true_with(
        samples,
        || LazyConfig::new(&r, p, seed, 0),
        |c, i| {
            c.reset(i);
            crossing_strands(c, 1, big_n, false).unwrap().count() >= 4
        },
    );
    Ok(Estimate::from_successes(hits, samples, seed))
}

/// Weighted least-squares fit of `log y` against `log x`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    /// `(log x, log y, stderr of log y)`.
    pub points: Vec<(f64, f64, f64)>,
}

/// Fits `log mean = intercept + slope · log x` with weights from the delta
/// method, `stderr(log y) = stderr / mean`. Without any error bars the fit
/// is unweighted and the slope error comes from the residuals.
pub fn fit_exponent(points: &[(f64, Estimate)]) -> Result<ExponentFit> {
    if points.len() < 2 {
        return Err(Error::domain("an exponent fit needs at least two points"));
    }
    let mut pts = Vec::with_capacity(points.len());
    for (x, e) in points {
        if !(e.mean > 0.0) || !(*x > 0.0) {
            return Err(Error::domain(format!("fit needs positive data, got ({x}, {})", e.mean)));
        }
        pts.push((x.ln(), e.mean.ln(), e.stderr / e.mean));
    }
    let weighted = pts.iter().all(|p| p.2 > 0.0);
    let w: Vec<f64> = pts.iter().map(|p| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let mx = pts.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else if pts.len() > 2 {
        (rss / (pts.len() - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(ExponentFit { slope, intercept, slope_stderr, r_squared, points: pts })
}

/// One row of the scaling-relation table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub p: f64,
    pub l_p: CorrLength,
    pub theta: Estimate,
    pub one_arm: Estimate,
    pub four_arm: Estimate,
    /// `(p − 1/2) L_p² ℙ_{1/2}[A_1010(L_p)]`.
    pub product: f64,
    /// `θ̂(p) / ℙ_{1/2}[A_1(L_p)]`.
    pub ratio: f64,
}

/// Parameters of [`scaling_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub eps: f64,
    pub n_max: u32,
    /// Samples per correlation-length probe.
    pub corr_samples: u64,
    /// Samples per arm or θ estimate.
    pub samples: u64,
    /// θ(p) is read off `ℙ_p(0 ↔ ∂Λ_n)` at `n = theta_factor · L_p`.
    pub theta_factor: u32,
    pub seed: u64,
}

pub fn scaling_table(ps: &[f64], params: &ScalingParams) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(ps.len());
    for (k, &p) in ps.iter().enumerate() {
        if !(p > 0.5 && p < 1.0) {
            return Err(Error::domain(format!("scaling table needs p in (1/2, 1), got {p}")));
        }
        let seed = derive_seed(params.seed, k as u64);
        let scan = correlation_length(p, params.eps, params.n_max, params.corr_samples, derive_seed(seed, 1))?;
        let l = scan.length.value().max(2);
        let theta = theta_estimate(p, params.theta_factor.max(1) * l, params.samples, derive_seed(seed, 2))?;
        let one_arm = theta_estimate(0.5, l, params.samples, derive_seed(seed, 3))?;
        let four_arm = four_arm_estimate(0.5, l, params.samples, derive_seed(seed, 4))?;
        let product = (p - 0.5) * (l as f64).powi(2) * four_arm.mean;
        let ratio = theta.mean / one_arm.mean;
        rows.push(ScalingRow { p, l_p: scan.length, theta, one_arm, four_arm, product, ratio });
    }
    Ok(rows)
}

/// Finite difference of an event probability against the expected number
/// of pivotal sites.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RussoReport {
    pub derivative: f64,
    pub derivative_stderr: f64,
    pub pivotal_sum: f64,
    pub pivotal_stderr: f64,
}

impl RussoReport {
    pub fn combined_stderr(&self) -> f64 {
        self.derivative_stderr.hypot(self.pivotal_stderr)
    }

    /// Whether the two sides agree within `k` combined standard errors.
    pub fn agrees(&self, k: f64) -> bool {
        (self.derivative - self.pivotal_sum).abs() <= k * self.combined_stderr() + 1e-12
    }
}

/// Russo's formula for any increasing event: the central difference uses
/// monotonically coupled samples at `p ± step`, the pivotal count samples
/// at `p`.
pub fn russo_check_event<E, P>(
    region: &Arc<Region>,
    p: f64,
    step: f64,
    samples: u64,
    seed: u64,
    event: E,
    pivotals: P,
) -> Result<RussoReport>
where
    E: Fn(&Configuration) -> bool + Sync + Send,
    P: Fn(&Configuration) -> u64 + Sync + Send,
{
    check_samples(samples)?;
    if !(step > 0.0 && 0.0 < p - step && p + step < 1.0) {
        return Err(Error::domain(format!("need 0 < p - step < p + step < 1, got p = {p}, step = {step}")));
    }
    // the coupled difference is an indicator: the event holds at p + step
    // and fails at p - step
    let diff = count_true(samples, |i| {
        let up = event(&sample(region, p + step, seed, i));
        up && !event(&sample(region, p - step, seed, i))
    });
    let d = Estimate::from_successes(diff, samples, seed);
    let piv = Estimate::from_sums(sums(samples, |i| pivotals(&sample(region, p, derive_seed(seed, 1), i))), seed);
    Ok(RussoReport {
        derivative: d.mean / (2.0 * step),
        derivative_stderr: d.stderr / (2.0 * step),
        pivotal_sum: piv.mean,
        pivotal_stderr: piv.stderr,
    })
}

/// Number of sites whose flip changes `event`.
pub fn pivotal_count_by_flip(c: &Configuration, event: impl Fn(&Configuration) -> bool) -> u64 {
    let base = event(c);
    let mut c = c.clone();
    let mut count = 0;
    for i in 0..c.len() {
        let was = c.is_open(i);
        c.set(i, !was);
        if event(&c) != base {
            count += 1;
        }
        c.set(i, was);
    }
    count
}

/// Russo's formula for the horizontal crossing of `Rhombus(w, h)`.
pub fn russo_check(w: u32, h: u32, p: f64, step: f64, samples: u64, seed: u64) -> Result<RussoReport> {
    let r = Arc::new(Region::rhombus(w, h)?);
    russo_check_event(
        &r,
        p,
        step,
        samples,
        seed,
        |c| horizontal_crossing(c).unwrap(),
        |c| pivotal_count(c).unwrap() as u64,
    )
}

/// Whether `A ⊆ B` colorwise: every site open in `a` is open in `b`.
pub fn dominated(a: &Configuration, b: &Configuration) -> bool {
    a.words().iter().zip(b.words()).all(|(x, y)| x & !y == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::enumerate_configs;

    #[test]
    fn trivial_values() {
        assert_eq!(theta_estimate(1.0, 5, 10, 0).unwrap().mean, 1.0);
        assert_eq!(theta_estimate(0.0, 5, 10, 0).unwrap().mean, 0.0);
        assert_eq!(chi_estimate(0.0, 5, 10, 0).unwrap().mean, 0.0);
        let scan = correlation_length(0.0, 0.02, 64, 50, 1).unwrap();
        assert_eq!(scan.length, CorrLength::Finite(1));
        assert!(correlation_length(0.3, 0.0, 64, 50, 1).is_err());
        assert!(correlation_length(0.3, 1.0, 64, 50, 1).is_err());
    }

    #[test]
    fn critical_length_is_unbounded() {
        let scan = correlation_length(0.5, 0.02, 32, 400, 2).unwrap();
        assert_eq!(scan.length, CorrLength::AtLeast(32));
        // reflection: p and 1 - p share the search
        let a = correlation_length(0.3, 0.02, 256, 300, 4).unwrap();
        let b = correlation_length(0.7, 0.02, 256, 300, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chi_matches_exhaustive_ball() {
        let r = Arc::new(Region::ball(2).unwrap());
        let p = 0.01;
        let mut exact = 0.0;
        let (mut stack, mut seen) = (Vec::new(), HashSet::new());
        for w in enumerate_configs(&r).unwrap() {
            let mut c = w.config.clone();
            exact += w.weight(p) * origin_cluster_size(&mut c, &mut stack, &mut seen) as f64;
        }
        // independent bitmask enumeration: 0.010618059982057
        assert!((exact - 0.010618059982057).abs() < 1e-13, "{exact}");
        assert!((exact - (p + 6.0 * p * p)).abs() < 1e-4, "{exact}");
        let e = chi_estimate(p, 2, 200_000, 9).unwrap();
        assert!(e.within(exact, 4.0), "{e:?} vs {exact}");
    }

    #[test]
    fn fit_exact_power_law() {
        let pts: Vec<(f64, Estimate)> = [2.0f64, 4.0, 8.0, 16.0]
            .iter()
            .map(|&x| (x, Estimate { mean: x.powf(-1.25), stderr: 0.0, n_samples: 1, seed: 0 }))
            .collect();
        let f = fit_exponent(&pts).unwrap();
        assert!((f.slope + 1.25).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let two = fit_exponent(&[
            (3.0, Estimate { mean: 0.5, stderr: 0.01, n_samples: 1, seed: 0 }),
            (7.0, Estimate { mean: 0.2, stderr: 0.03, n_samples: 1, seed: 0 }),
        ])
        .unwrap();
        assert!((two.slope - (0.2f64 / 0.5).ln() / (7.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(fit_exponent(&pts[..1]).is_err());
    }

    #[test]
    fn fit_recovers_noisy_slope() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut inside = 0;
        let runs = 400;
        for run in 0..runs {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run);
            let pts: Vec<(f64, Estimate)> = [4.0f64, 8.0, 16.0, 32.0, 64.0]
                .iter()
                .map(|&x| {
                    let y = 0.8 * x.powf(-0.6);
                    let se = 0.03 * y;
                    let noisy = y + Normal::new(0.0, se).unwrap().sample(&mut rng);
                    (x, Estimate { mean: noisy, stderr: se, n_samples: 1, seed: run })
                })
                .collect();
            let f = fit_exponent(&pts).unwrap();
            if (f.slope + 0.6).abs() <= 2.0 * f.slope_stderr {
                inside += 1;
            }
        }
        let frac = inside as f64 / runs as f64;
        assert!(frac > 0.92 && frac < 0.98, "{frac}");
    }

    #[test]
    fn russo_on_simple_events() {
        let r = Arc::new(Region::rhombus(2, 2).unwrap());
        let one = |c: &Configuration| c.is_open(0);
        let rep = russo_check_event(&r, 0.4, 0.01, 20_000, 3, one, |c| pivotal_count_by_flip(c, one)).unwrap();
        assert!((rep.pivotal_sum - 1.0).abs() < 1e-12);
        assert!(rep.agrees(4.0), "{rep:?}");
        let two = |c: &Configuration| c.is_open(0) && c.is_open(1);
        let rep = russo_check_event(&r, 0.4, 0.01, 40_000, 3, two, |c| pivotal_count_by_flip(c, two)).unwrap();
        assert!((rep.pivotal_sum - 0.8).abs() < 4.0 * rep.pivotal_stderr);
        assert!(rep.agrees(4.0), "{rep:?}");
    }

    #[test]
    fn monotone_coupling() {
        let r = Arc::new(Region::rhombus(6, 6).unwrap());
        let ps = [0.1, 0.3, 0.5, 0.7, 0.9];
        for i in 0..200 {
            let cs: Vec<Configuration> = ps.iter().map(|&p| sample(&r, p, 17, i)).collect();
            for k in 1..cs.len() {
                assert!(dominated(&cs[k - 1], &cs[k]));
                assert!(horizontal_crossing(&cs[k - 1]).unwrap() <= horizontal_crossing(&cs[k]).unwrap());
            }
        }
    }

    #[test]
    fn estimates_are_deterministic() {
        let a = theta_estimate(0.5, 8, 500, 5).unwrap();
        let b = theta_estimate(0.5, 8, 500, 5).unwrap();
        assert_eq!(a, b);
        let c = four_arm_estimate(0.5, 8, 300, 5).unwrap();
        assert!(c.mean > 0.0 && c.mean < a.mean);
    }
}
