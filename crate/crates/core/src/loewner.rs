//! Chordal Loewner chains in the upper half-plane, discretized by vertical
//! slits, and the driving functions of exploration paths.
//!
//! The elementary map of a vertical slit from `x` to `x + iy` is
//! `g(z) = x + sqrt((z − x)² + y²)`, which is hydrodynamically normalized
//! with half-plane capacity `y²/4`.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::explorer::{explore_with, Dobrushin};
use crate::lattice::{AxialCoord, DualVertex, Region, Shape, SQRT3};
use crate::sampler::Configuration;

/// A driving function sampled at increasing capacity times, starting at
/// `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DrivingSample {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let d = DrivingSample { times, values };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() || self.times.is_empty() {
            return Err(Error::Contract("driving needs equally many times and values, at least one".into()));
        }
        if self.times[0] != 0.0 || self.values[0] != 0.0 {
            return Err(Error::Contract("driving must start at (0, 0)".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Contract("driving times must increase strictly".into()));
        }
        if self.times.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(Error::Contract("driving has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn total_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.len() <= 1
    }

    /// Linear interpolation; `None` past the last time.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if !(t >= 0.0) || t > self.total_time() {
            return None;
        }
        let j = self.times.partition_point(|&s| s < t);
        if j == 0 {
            return Some(self.values[0]);
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let (w0, w1) = (self.values[j - 1], self.values[j]);
        Some(w0 + (w1 - w0) * (t - t0) / (t1 - t0))
    }

    /// Times scaled by `λ²` and values by `λ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        DrivingSample {
            times: self.times.iter().map(|t| t * lambda * lambda).collect(),
            values: self.values.iter().map(|w| w * lambda).collect(),
        }
    }

    /// Two columns `t W` per line, 12 significant digits.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (t, w) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:.11e} {w:.11e}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(t), Some(w), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::parse(format!("line {}: expected two columns", i + 1)));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(format!("line {}: bad number {s:?}", i + 1)))
            };
            times.push(num(t)?);
            values.push(num(w)?);
        }
        DrivingSample::new(times, values).map_err(|e| Error::parse(e.to_string()))
    }
}

/// A polygonal curve in the closed upper half-plane from `0`, strictly
/// inside after its first point.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfPlanePolyline {
    pub points: Vec<Complex64>,
}

impl HalfPlanePolyline {
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        let p = HalfPlanePolyline { points };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self.points.first() {
            Some(z) if *z == Complex64::new(0.0, 0.0) => {}
            _ => return Err(Error::Contract("polyline must start at 0".into())),
        }
        for (i, z) in self.points.iter().enumerate().skip(1) {
            if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Contract(format!("point {i} = {z} is not in the open upper half-plane")));
            }
            if *z == self.points[i - 1] {
                return Err(Error::Contract(format!("points {} and {i} coincide", i - 1)));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        HalfPlanePolyline { points: self.points.iter().map(|z| z * lambda).collect() }
    }

    pub fn reflected(&self) -> Self {
        HalfPlanePolyline { points: self.points.iter().map(|z| Complex64::new(-z.re, z.im)).collect() }
    }
}

/// Square root on the branch with nonnegative imaginary part; on the real
/// line the sign follows `sign`.
fn upper_sqrt(w: Complex64, sign: f64) -> Complex64 {
    let s = w.sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re * sign < 0.0) {
        -s
    } else {
        s
    }
}

/// Inverse of the slit map of capacity `dt` centred at `w`.
fn slit_inverse(u: Complex64, w: f64, dt: f64) -> Complex64 {
    let v = u - w;
    w + upper_sqrt(v * v - 4.0 * dt, v.re)
}

/// Tips of the chain driven by `d` at times `dt, 2dt, …` up to the total
/// time. Step `k` uses the driving value at the middle of its interval.
pub fn forward_trace(d: &DrivingSample, dt: f64) -> Result<HalfPlanePolyline> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Contract(format!("time step must be positive, got {dt}")));
    }
    d.validate()?;
    let steps = (d.total_time() / dt + 1e-9).floor() as usize;
    let drive: Vec<f64> = (0..steps)
        .map(|k| d.value_at((k as f64 + 0.5) * dt).unwrap())
        .collect();
    let mut points = vec![Complex64::new(0.0, 0.0)];
    let tip = 2.0 * dt.sqrt();
    for k in 0..steps {
        let mut z = Complex64::new(drive[k], tip);
        for j in (0..k).rev() {
            z = slit_inverse(z, drive[j], dt);
        }
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Numerical(format!("trace blew up at step {k}")));
        }
        if !(z.im > 0.0) {
            return Err(Error::Numerical(format!("trace point {k} fell onto the real line")));
        }
        points.push(z);
    }
    Ok(HalfPlanePolyline { points })
}

/// Driving function of a polyline by the zipper: each vertex in turn is
/// mapped to the origin by a vertical slit map followed by a real shift.
/// The recorded value is the accumulated shift, the time the accumulated
/// capacity.
pub fn zipper_extract(path: &HalfPlanePolyline) -> Result<DrivingSample> {
    path.validate()?;
    let mut pts: Vec<Complex64> = path.points[1..].to_vec();
    let mut times = vec![0.0];
    let mut values = vec![0.0];
    let (mut t, mut w) = (0.0, 0.0);
    for k in 0..pts.len() {
        let tip = pts[k];
        if !(tip.im > 0.0) || !tip.re.is_finite() || !tip.im.is_finite() {
            return Err(Error::Numerical(format!("vertex {} mapped to {tip}, off the upper half-plane", k + 1)));
        }
        let (x, y2) = (tip.re, tip.im * tip.im);
        t += y2 / 4.0;
        w += x;
        // an increment below the resolution of `t` merges into the last sample
        if t > *times.last().unwrap() {
            times.push(t);
            values.push(w);
        } else if times.len() > 1 {
            *values.last_mut().unwrap() = w;
        }
        for z in &mut pts[k + 1..] {
            let v = *z - x;
            *z = upper_sqrt(v * v + y2, v.re);
        }
    }
    DrivingSample::new(times, values)
}

/// Exploration domain for drivings: the half-hexagon `Λ_R ∩ {l ≥ 1}`. The
/// real axis runs through the centres of the exterior row `l = 0`.
pub fn exploration_region(r: u32) -> Result<Arc<Region>> {
    Ok(Arc::new(Region::new(Shape::HalfPlaneAnnulus { inner: 0, outer: r })?))
}

fn exploration_boundary(region: &Region) -> Result<Dobrushin> {
    let cycle = region.boundary().ok_or_else(|| Error::domain("region has no boundary"))?;
    let Shape::HalfPlaneAnnulus { inner: 0, outer } = *region.shape() else {
        return Err(Error::domain("explorations run in a half-hexagon"));
    };
    // the vertex between exterior faces (-1, 0) and (0, 0)
    let a = DualVertex::from_sites(AxialCoord { k: -1, l: 0 }, AxialCoord { k: 0, l: 0 }, AxialCoord { k: -1, l: 1 });
    let top = Complex64::new(0.0, outer as f64 * SQRT3 / 2.0);
    let b = cycle
        .nearest_transition(region, top)
        .map(|i| cycle.vertices[i])
        .ok_or_else(|| Error::domain("no transition vertex near the top"))?;
    Dobrushin::new(region, a, b)
}

/// Driving function of the exploration from `0` (positive axis open,
/// negative axis closed), truncated on leaving `Λ_{ρR}` and rescaled by
/// `1/(ρR)`.
pub fn exploration_driving(c: &Configuration, rho: f64) -> Result<DrivingSample> {
    let region = c.region();
    let Shape::HalfPlaneAnnulus { inner: 0, outer } = *region.shape() else {
        return Err(Error::domain("explorations run in a half-hexagon"));
    };
    if outer < 32 {
        return Err(Error::domain(format!("exploration radius must be at least 32, got {outer}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(format!("truncation fraction {rho} outside (0, 1)")));
    }
    let bc = exploration_boundary(region)?;
    let path = explore_with(c, &bc, None)?;
    let limit = (rho * outer as f64).floor().max(1.0);
    let origin = Complex64::new(-0.5, 0.0);
    let mut points = vec![Complex64::new(0.0, 0.0)];
    for &v in &path.vertices {
        let z = v.embed() - origin;
        points.push(z / limit);
        if v.sites().iter().any(|s| s.norm() as f64 > limit) {
            break;
        }
    }
    zipper_extract(&HalfPlanePolyline::new(points)?)
}

/// Running sums of driving values on a fixed time grid; merging is exact
/// and order independent up to floating addition.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingMoments {
    pub grid: Vec<f64>,
    pub count: u64,
    pub short: u64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl DrivingMoments {
    pub fn new(grid: Vec<f64>) -> Self {
        let n = grid.len();
        DrivingMoments { grid, count: 0, short: 0, sum: vec![0.0; n], sum_sq: vec![0.0; n] }
    }

    /// Adds a sample interpolated on the grid; samples ending before the
    /// last grid time are only counted as short.
    pub fn push(&mut self, d: &DrivingSample) {
        let vals: Option<Vec<f64>> = self.grid.iter().map(|&t| d.value_at(t)).collect();
        let Some(vals) = vals else {
            self.short += 1;
            return;
        };
        self.count += 1;
        for (i, w) in vals.into_iter().enumerate() {
            self.sum[i] += w;
            self.sum_sq[i] += w * w;
        }
    }

    pub fn merge(&mut self, other: &DrivingMoments) {
        assert_eq!(self.grid, other.grid, "merging moments on different grids");
        self.count += other.count;
        self.short += other.short;
        for i in 0..self.grid.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.count as f64
    }

    /// Unbiased sample variance at grid point `i`.
    pub fn variance(&self, i: usize) -> f64 {
        let n = self.count as f64;
        let m = self.mean(i);
        (self.sum_sq[i] - n * m * m) / (n - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn brownian(steps: usize, total: f64, kappa: f64, seed: u64) -> DrivingSample {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = total / steps as f64;
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        for k in 1..=steps {
            let g: f64 = StandardNormal.sample(&mut rng);
            times.push(k as f64 * h);
            values.push(values[k - 1] + (kappa * h).sqrt() * g);
        }
        DrivingSample::new(times, values).unwrap()
    }

    #[test]
    fn vertical_segment() {
        for y in [0.5, 1.0, 3.0] {
            let d = zipper_extract(&HalfPlanePolyline::new(vec![c(0.0, 0.0), c(0.0, y)]).unwrap()).unwrap();
            assert_eq!(d.values, vec![0.0, 0.0]);
            assert!((d.total_time() - y * y / 4.0).abs() < 1e-15);
        }
        let empty = zipper_extract(&HalfPlanePolyline::new(vec![c(0.0, 0.0)]).unwrap()).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.times, vec![0.0]);
    }

    #[test]
    fn constant_driving_traces_a_segment() {
        let t = 2.0;
        let d = DrivingSample::new(vec![0.0, t], vec![0.0, 0.0]).unwrap();
        let p = forward_trace(&d, 0.01).unwrap();
        let tip = *p.points.last().unwrap();
        assert!((tip - c(0.0, 2.0 * t.sqrt())).norm() < 1e-9);
        for z in &p.points {
            assert!(z.re.abs() < 1e-12);
        }
        let shifted = DrivingSample::new(vec![0.0, 1e-9, t], vec![0.0, 0.7, 0.7]).unwrap();
        let q = forward_trace(&shifted, 0.01).unwrap();
        for (a, b) in p.points.iter().zip(&q.points).skip(1) {
            assert!((b - a - 0.7).norm() < 1e-9);
        }
    }

    #[test]
    fn three_segment_fixture() {
        // 0 -> i -> 1 + 2i -> 1 + 3i, frozen from an independent evaluation
        let p = HalfPlanePolyline::new(vec![c(0.0, 0.0), c(0.0, 1.0), c(1.0, 2.0), c(1.0, 3.0)]).unwrap();
        let d = zipper_extract(&p).unwrap();
        let want_t = [0.0, 0.25, 0.25 + 0.809_016_994_374_947_5, 0.25 + 0.809_016_994_374_947_5 + 1.218_990_166_056_480_6];
        let want_w = [0.0, 0.0, 1.111_785_940_502_842_3, 1.111_785_940_502_842_3 - 0.075_223_974_818_021_22];
        for i in 0..4 {
            assert!((d.times[i] - want_t[i]).abs() < 1e-12, "t{i} = {}", d.times[i]);
            assert!((d.values[i] - want_w[i]).abs() < 1e-12, "w{i} = {}", d.values[i]);
        }
    }

    #[test]
    fn scaling_and_reflection() {
        let p = HalfPlanePolyline::new(vec![c(0.0, 0.0), c(0.3, 0.8), c(-0.2, 1.5), c(0.9, 1.1), c(1.4, 2.0)]).unwrap();
        let d = zipper_extract(&p).unwrap();
        for lambda in [0.1, 2.5, 7.0] {
            let s = zipper_extract(&p.scaled(lambda)).unwrap();
            let want = d.scaled(lambda);
            for i in 0..d.len() {
                assert!((s.times[i] - want.times[i]).abs() < 1e-12 * lambda * lambda);
                assert!((s.values[i] - want.values[i]).abs() < 1e-12 * lambda);
            }
        }
        let r = zipper_extract(&p.reflected()).unwrap();
        for i in 0..d.len() {
            assert_eq!(r.times[i], d.times[i]);
            assert_eq!(r.values[i], -d.values[i]);
        }
    }

    #[test]
    fn refinement_of_vertical_segments() {
        let coarse = zipper_extract(&HalfPlanePolyline::new(vec![c(0.0, 0.0), c(0.0, 2.0)]).unwrap()).unwrap();
        let fine_pts: Vec<Complex64> = (0..=16).map(|k| c(0.0, k as f64 / 8.0)).collect();
        let fine = zipper_extract(&HalfPlanePolyline::new(fine_pts).unwrap()).unwrap();
        assert!((coarse.total_time() - fine.total_time()).abs() < 1e-9);
        // sum of increments equals the total
        let incr: f64 = fine.times.windows(2).map(|w| w[1] - w[0]).sum();
        assert!((incr - fine.total_time()).abs() < 1e-12);
    }

    #[test]
    fn refinement_converges_for_tilted_paths() {
        let corners = [c(0.0, 0.0), c(0.5, 1.0), c(-0.4, 1.6), c(0.2, 2.3)];
        let total = |m: usize| {
            let mut pts = vec![corners[0]];
            for w in corners.windows(2) {
                for j in 1..=m {
                    pts.push(w[0] + (w[1] - w[0]) * (j as f64 / m as f64));
                }
            }
            zipper_extract(&HalfPlanePolyline::new(pts).unwrap()).unwrap().total_time()
        };
        let (a, b, c4) = (total(8), total(16), total(32));
        assert!((c4 - b).abs() < (b - a).abs());
    }

    #[test]
    fn round_trip_error_halves() {
        let d = brownian(64, 1.0, 6.0, 11);
        let err = |dt: f64| {
            let back = zipper_extract(&forward_trace(&d, dt).unwrap()).unwrap();
            back.times
                .iter()
                .zip(&back.values)
                .map(|(&t, &w)| (w - d.value_at(t.min(d.total_time())).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1.0 / 512.0), err(1.0 / 1024.0));
        assert!(e2 <= 0.55 * e1, "{e1} {e2}");
        assert!(e2 < 0.05);
    }

    #[test]
    fn export_round_trip() {
        let d = brownian(10, 1.0, 6.0, 3);
        let text = d.export();
        let back = DrivingSample::parse(&text).unwrap();
        for i in 0..d.len() {
            assert!((back.times[i] - d.times[i]).abs() <= 1e-11 * d.times[i].abs());
            assert!((back.values[i] - d.values[i]).abs() <= 1e-11 * d.values[i].abs());
        }
        assert!(DrivingSample::parse("0 0\n1 x\n").is_err());
        assert!(DrivingSample::parse("0 0\n0 1\n").is_err());
        assert!(DrivingSample::parse("1 0\n").is_err());
    }

    #[test]
    fn exploration_driving_runs() {
        let r = exploration_region(32).unwrap();
        for i in 0..4 {
            let cfg = crate::sampler::sample(&r, 0.5, 5, i);
            let d = exploration_driving(&cfg, 0.5).unwrap();
            assert!(d.len() > 2 && d.total_time() > 0.0);
        }
        let all_open = Configuration::all(&r, true);
        let d = exploration_driving(&all_open, 0.5).unwrap();
        // with every site open the path hugs the closed negative axis
        assert!(d.values.last().unwrap() < &0.0);
    }

    #[test]
    fn moments_merge() {
        let grid = vec![0.1, 0.2];
        let samples: Vec<DrivingSample> = (0..6).map(|s| brownian(50, 0.5, 6.0, s)).collect();
        let mut all = DrivingMoments::new(grid.clone());
        samples.iter().for_each(|d| all.push(d));
        let mut a = DrivingMoments::new(grid.clone());
        let mut b = DrivingMoments::new(grid);
        samples[..2].iter().for_each(|d| a.push(d));
        samples[2..].iter().for_each(|d| b.push(d));
        b.merge(&a);
        assert_eq!(b.count, all.count);
        for i in 0..2 {
            assert!((b.sum[i] - all.sum[i]).abs() < 1e-12);
        }
    }
}
