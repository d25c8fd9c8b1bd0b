//! Crossing probabilities in the scaling limit and the separation events
//! whose probabilities converge to them.
//!
//! `F(η) = I_η(1/3, 1/3)` is the normalized integral of `[z(1 - z)]^{-2/3}`
//! over `[0, η]`. It is evaluated by Gauss-Kronrod quadrature after the
//! substitution `z = u³` and, independently, by the continued fraction of
//! the regularized incomplete beta function.

use std::collections::HashSet;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::connectivity::{connected, Color};
use crate::lattice::{discretize_domain, unit_triangle, AxialCoord, DualVertex, Region, SQRT3};
use crate::explorer::{explore_with, Dobrushin};
use crate::sampler::Configuration;

/// Largest disagreement tolerated between the two evaluations of `F`.
pub const AGREEMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CrossRatio(f64);

impl CrossRatio {
    pub fn new(eta: f64) -> Result<Self> {
        if eta > 0.0 && eta < 1.0 {
            Ok(CrossRatio(eta))
        } else {
            Err(Error::domain(format!("cross-ratio must lie in (0, 1), got {eta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicTriple {
    pub h_a: f64,
    pub h_b: f64,
    pub h_c: f64,
}

impl HarmonicTriple {
    pub fn sum(&self) -> f64 {
        self.h_a + self.h_b + self.h_c
    }

    /// `h_A + τ h_B + τ² h_C` with `τ = e^{2iπ/3}`.
    pub fn complex(&self) -> Complex64 {
        let tau = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
        self.h_a + tau * self.h_b + tau * tau * self.h_c
    }

    pub fn get(&self, corner: Corner) -> f64 {
        match corner {
            Corner::A => self.h_a,
            Corner::B => self.h_b,
            Corner::C => self.h_c,
        }
    }
}

// ---------------------------------------------------------------------------
// Analytic side

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for the odd-indexed Kronrod nodes (7-point rule).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * KRONROD_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += KRONROD_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7, 15) quadrature of a smooth integrand.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut stack = vec![(a, b, tol)];
    let mut total = 0.0;
    let mut pieces = 0usize;
    while let Some((lo, hi, eps)) = stack.pop() {
        let (value, err) = kronrod15(&f, lo, hi);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        if err <= eps || hi - lo < 1e-12 * (b - a).abs().max(1.0) {
            total += value;
            continue;
        }
        pieces += 1;
        if pieces > 100_000 {
            return Err(Error::Numerical("quadrature did not converge".into()));
        }
        let mid = 0.5 * (lo + hi);
        stack.push((lo, mid, 0.5 * eps));
        stack.push((mid, hi, 0.5 * eps));
    }
    Ok(total)
}

/// `∫₀^η [z(1-z)]^{-2/3} dz` for `η ≤ 1/2`, with `z = u³`.
fn half_integral(eta: f64) -> Result<f64> {
    debug_assert!(eta <= 0.5);
    integrate(|u| 3.0 * (1.0 - u * u * u).powf(-2.0 / 3.0), 0.0, eta.cbrt(), 1e-15)
}

/// `F(η)` by quadrature of the defining integral.
pub fn cardy_quadrature(eta: CrossRatio) -> Result<f64> {
    let eta = eta.value();
    let total = 2.0 * half_integral(0.5)?;
    if eta == 0.5 {
        return Ok(0.5);
    }
    if eta < 0.5 {
        Ok(half_integral(eta)? / total)
    } else {
        Ok(1.0 - half_integral(1.0 - eta)? / total)
    }
}

/// `F(η) = I_η(1/3, 1/3)` by the incomplete-beta continued fraction.
pub fn cardy_beta(eta: CrossRatio) -> f64 {
    let eta = eta.value();
    if eta == 0.5 {
        return 0.5;
    }
    // The continued fraction converges fastest below the mean 1/2.
    if eta <= 0.5 {
        statrs::function::beta::beta_reg(1.0 / 3.0, 1.0 / 3.0, eta)
    } else {
        1.0 - statrs::function::beta::beta_reg(1.0 / 3.0, 1.0 / 3.0, 1.0 - eta)
    }
}

/// Scaling-limit crossing probability of a conformal rectangle of
/// cross-ratio `η`, checked across both evaluations.
pub fn cardy_probability(eta: CrossRatio) -> Result<f64> {
    let q = cardy_quadrature(eta)?;
    let b = cardy_beta(eta);
    if (q - b).abs() > AGREEMENT {
        return Err(Error::Numerical(format!("F({}) evaluations disagree: {q} vs {b}", eta.value())));
    }
    Ok(b)
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let (x, y) = (0.5 * (a + b), (a * b).sqrt());
        if (x - y).abs() <= 1e-16 * x {
            return x;
        }
        a = x;
        b = y;
    }
    a
}

/// Complete elliptic integral of the first kind, `K(k) = π / (2 agm(1, k'))`,
/// given the complementary modulus.
pub fn elliptic_k_complement(k_prime: f64) -> f64 {
    PI / (2.0 * agm(1.0, k_prime))
}

/// Cross-ratio of a `ρ : 1` rectangle: `F(η)` is the probability of
/// crossing between the two sides of length `ρ`.
///
/// The rectangle `[-K, K] × [0, K']` maps to the half-plane under
/// `sn(·, k)` with corners at `±1, ±1/k`; `ρ = 2K/K'` fixes `k`, and the
/// corners have cross-ratio `η = 4k / (1 + k)²`.
pub fn rect_cross_ratio(rho: f64) -> Result<CrossRatio> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::domain(format!("aspect ratio must be positive, got {rho}")));
    }
    // k = sin t; 2K(k)/K(k') = 2 agm(1, k) / agm(1, k') increases in t.
    let ratio = |t: f64| 2.0 * agm(1.0, t.sin()) / agm(1.0, t.cos());
    let (mut lo, mut hi) = (0.0f64, PI / 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let (k, k_prime) = (t.sin(), t.cos());
    // 1 - η = ((1 - k)/(1 + k))², written to keep precision near k = 1.
    let one_minus_k = k_prime * k_prime / (1.0 + k);
    let eta = 1.0 - (one_minus_k / (1.0 + k)).powi(2);
    CrossRatio::new(eta).map_err(|_| Error::Numerical(format!("aspect ratio {rho} is beyond f64 resolution")))
}

/// A point where the scaling-limit triple is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetPoint {
    /// `λ ∈ [0, 1]` on the boundary segment between `A = 0` and `B = 1` of
    /// the half-plane with `C = ∞`.
    Boundary(f64),
    /// A point of the reference triangle with vertices `1, τ, τ²`.
    Triangle(Complex64),
}

/// The limit of `(H_A, H_B, H_C)`: barycentric coordinates of the image
/// point in the triangle `(1, τ, τ²)`.
pub fn h_abc_target(p: TargetPoint) -> Result<HarmonicTriple> {
    match p {
        TargetPoint::Boundary(lambda) => {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::domain(format!("boundary parameter must lie in [0, 1], got {lambda}")));
            }
            let f = if lambda == 0.0 {
                0.0
            } else if lambda == 1.0 {
                1.0
            } else {
                cardy_probability(CrossRatio::new(lambda)?)?
            };
            Ok(HarmonicTriple { h_a: 1.0 - f, h_b: f, h_c: 0.0 })
        }
        TargetPoint::Triangle(w) => {
            let tau = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
            let t = barycentric(w, Complex64::new(1.0, 0.0), tau, tau * tau);
            let tol = 1e-12;
            if t.iter().any(|&x| x < -tol || !x.is_finite()) {
                return Err(Error::domain(format!("{w} lies outside the reference triangle")));
            }
            let t = t.map(|x| x.clamp(0.0, 1.0));
            let s = t[0] + t[1] + t[2];
            Ok(HarmonicTriple { h_a: t[0] / s, h_b: t[1] / s, h_c: t[2] / s })
        }
    }
}

/// Barycentric coordinates of `z` in the triangle `(a, b, c)`.
pub fn barycentric(z: Complex64, a: Complex64, b: Complex64, c: Complex64) -> [f64; 3] {
    let cross = |u: Complex64, v: Complex64| u.re * v.im - u.im * v.re;
    let area = cross(b - a, c - a);
    [cross(b - z, c - z) / area, cross(c - z, a - z) / area, cross(a - z, b - z) / area]
}

/// The triple for a point of the equilateral triangle `A = 0, B = 1,
/// C = e^{iπ/3}`, whose conformal map to the reference triangle is affine.
pub fn equilateral_target(z: Complex64) -> Result<HarmonicTriple> {
    let t = barycentric(z, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.5 * SQRT3));
    let tau = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    h_abc_target(TargetPoint::Triangle(t[0] + tau * t[1] + tau * tau * t[2]))
}

/// The unit equilateral triangle with a fourth mark `D = C + t (A − C)` on
/// side `CA`. Arcs run `AB`, `BC`, `CD`, `DA`.
pub fn carleson_triangle(delta: f64, t: f64) -> Result<Region> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!("mark position {t} outside (0, 1)")));
    }
    let tri = unit_triangle();
    let d = tri[2] + t * (tri[0] - tri[2]);
    discretize_domain(tri.clone(), delta, vec![tri[0], tri[1], tri[2], d])
}

/// Open crossing between boundary arcs `from` and `to` of a marked domain.
pub fn arc_crossing(c: &Configuration, from: usize, to: usize) -> Result<bool> {
    let region = c.region();
    let m = region.boundary().map_or(0, |b| b.marks.len());
    if from >= m || to >= m {
        return Err(Error::domain(format!("domain has {m} arcs, asked for {from} and {to}")));
    }
    connected(c, &region.arc_sites(from), &region.arc_sites(to), Color::Open)
}

// ---------------------------------------------------------------------------
// Separation events

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corner {
    A,
    B,
    C,
}

impl Corner {
    pub const ALL: [Corner; 3] = [Corner::A, Corner::B, Corner::C];

    fn index(self) -> usize {
        self as usize
    }

    /// Arcs joined by the separating path, and the arc it cuts off. Arc
    /// `i` runs from mark `i` to mark `i + 1`, so arcs are `AB, BC, CA`.
    fn arcs(self) -> (usize, usize, usize) {
        let i = self.index();
        (i, (i + 2) % 3, (i + 1) % 3)
    }
}

/// Arc membership of a marked triangular domain.
struct Arcs {
    on: [Vec<bool>; 3],
    /// Sites of each arc in boundary order, with a direction pointing out
    /// of the domain across the arc.
    sites: [Vec<(usize, usize)>; 3],
    ghosts: [HashSet<AxialCoord>; 3],
}

impl Arcs {
    fn new(region: &Region) -> Result<Self> {
        let b = region
            .boundary()
            .filter(|b| b.marks.len() == 3)
            .ok_or_else(|| Error::domain("separation events need a domain with 3 marks"))?;
        let mut on: [Vec<bool>; 3] = Default::default();
        let mut sites: [Vec<(usize, usize)>; 3] = Default::default();
        let mut ghosts: [HashSet<AxialCoord>; 3] = Default::default();
        for i in 0..3 {
            on[i] = vec![false; region.len()];
            for e in b.arc_edges(b.marks[i], b.marks[(i + 1) % 3]) {
                let (inner, outer) = b.edges[e];
                ghosts[i].insert(outer);
                let k = region.ordinal(inner).unwrap();
                if !on[i][k] {
                    on[i][k] = true;
                    sites[i].push((k, inner.direction_to(outer).unwrap()));
                }
            }
        }
        Ok(Arcs { on, sites, ghosts })
    }
}

/// The open crossing from the arc leaving the corner to the arc entering
/// it that lies closest to the far arc, found by a right-hand depth-first
/// search started from the far end of the first arc. Crossings meet each
/// arc only at their ends.
fn extremal_crossing(c: &Configuration, arcs: &Arcs, corner: Corner) -> Option<Vec<usize>> {
    let region = c.region();
    let adj = region.adjacency();
    let (near1, near2, _) = corner.arcs();
    let mut visited = vec![false; region.len()];
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for &(s, out) in arcs.sites[near1].iter().rev() {
        if visited[s] || !c.is_open(s) {
            continue;
        }
        visited[s] = true;
        if arcs.on[near2][s] {
            return Some(vec![s]);
        }
        stack.clear();
        stack.push((s, out, 1));
        while let Some(top) = stack.last_mut() {
            if top.2 > 5 {
                stack.pop();
                continue;
            }
            let (u, d) = (top.0, (top.1 + top.2) % 6);
            top.2 += 1;
            let v = adj[u][d];
            if v == crate::lattice::NONE || visited[v as usize] || arcs.on[near1][v as usize] || !c.is_open(v as usize) {
                continue;
            }
            let v = v as usize;
            visited[v] = true;
            if arcs.on[near2][v] {
                let mut path: Vec<usize> = stack.iter().map(|e| e.0).collect();
                path.push(v);
                return Some(path);
            }
            stack.push((v, (d + 3) % 6, 1));
        }
    }
    None
}

fn flood(region: &Region, removed: &[bool], seeds: &[bool]) -> Vec<bool> {
    let mut reach = vec![false; region.len()];
    let mut stack: Vec<usize> = (0..region.len()).filter(|&i| seeds[i] && !removed[i]).collect();
    for &s in &stack {
        reach[s] = true;
    }
    while let Some(u) = stack.pop() {
        for &v in &region.adjacency()[u] {
            if v != crate::lattice::NONE && !removed[v as usize] && !reach[v as usize] {
                reach[v as usize] = true;
                stack.push(v as usize);
            }
        }
    }
    reach
}

fn ordinal_of(region: &Region, z: AxialCoord) -> Result<usize> {
    region.ordinal(z).ok_or_else(|| Error::domain(format!("{z} is not in the domain")))
}

/// Sites separated from the far arc: those on the extremal crossing or
/// cut off by it. Every crossing lies on the corner side of the extremal
/// one, so no other crossing separates more.
fn separated_sites(c: &Configuration, corner: Corner) -> Result<Vec<bool>> {
    let region = c.region();
    let arcs = Arcs::new(region)?;
    let Some(path) = extremal_crossing(c, &arcs, corner) else {
        return Ok(vec![false; region.len()]);
    };
    let mut on_path = vec![false; region.len()];
    for &p in &path {
        on_path[p] = true;
    }
    let reach = flood(region, &on_path, &arcs.on[corner.arcs().2]);
    Ok((0..region.len()).map(|i| on_path[i] || !reach[i]).collect())
}

/// `E_A(z)`: an open simple path from arc `AB` to arc `CA` separates `z`
/// from arc `BC`. A site `z` on such a path counts as separated.
pub fn detect_separation(c: &Configuration, z: AxialCoord) -> Result<bool> {
    separation_event(c, Corner::A, z)
}

/// `E_A`, `E_B` or `E_C` at a site, with letters permuted cyclically.
pub fn separation_event(c: &Configuration, corner: Corner, z: AxialCoord) -> Result<bool> {
    let zi = ordinal_of(c.region(), z)?;
    Ok(separated_sites(c, corner)?[zi])
}

/// The events at every site of the domain.
pub fn separation_map(c: &Configuration, corner: Corner) -> Result<Vec<bool>> {
    separated_sites(c, corner)
}

/// Events at dual vertices with three sites in the domain: the point is
/// separated when each of its hexagons is.
pub fn vertex_separation(c: &Configuration, corner: Corner, vertices: &[DualVertex]) -> Result<Vec<bool>> {
    let region = c.region();
    let map = separated_sites(c, corner)?;
    vertices
        .iter()
        .map(|v| {
            let mut all = true;
            for s in v.sites() {
                all &= map[ordinal_of(region, s)?];
            }
            Ok(all)
        })
        .collect()
}

/// The increment `E(y) \ E(x)` across the dual edge from `x` to `y`, read
/// as three disjoint arms from the faces around `x`: with `a, b, c` in
/// counterclockwise order and `b` the face not shared with `y`, an open arm
/// from `a` to the arc leaving the corner, a closed arm from `b` to the far
/// arc and an open arm from `c` to the arc entering the corner.
///
/// The arms from `c` and `b` exist iff the interface started where the far
/// arc meets the entering arc crosses `c | b` into `x` before it meets the
/// leaving arc; the arm from `a` must then avoid every face the interface
/// has seen.
pub fn edge_increment(c: &Configuration, corner: Corner, x: DualVertex, y: DualVertex) -> Result<bool> {
    Ok(edge_increments(c, corner, &[(x, y)])?[0])
}

/// [`edge_increment`] for many edges, sharing one exploration.
pub fn edge_increments(c: &Configuration, corner: Corner, edges: &[(DualVertex, DualVertex)]) -> Result<Vec<bool>> {
    let region = c.region();
    let arcs = Arcs::new(region)?;
    let (near1, _, _) = corner.arcs();
    let i = corner as usize;
    let bc = Dobrushin::between_marks(region, (i + 2) % 3, (i + 1) % 3)?;
    let path = explore_with(c, &bc, None)?;
    // step at which each triangle is entered, before the leaving arc is met
    let mut entered = std::collections::HashMap::new();
    for (k, &(o, _)) in path.edges.iter().enumerate() {
        if arcs.ghosts[near1].contains(&o) {
            break;
        }
        entered.insert(path.vertices[k + 1], k);
    }
    let mut out = Vec::with_capacity(edges.len());
    for &(x, y) in edges {
        let (fa, fb, fc) = edge_faces(region, x, y)?;
        let Some(&k) = entered.get(&x) else {
            out.push(false);
            continue;
        };
        let seen: HashSet<AxialCoord> = path.edges[..=k].iter().flat_map(|&(o, cl)| [o, cl]).collect();
        if path.edges[k] != (fc, fb) || seen.contains(&fa) || !c.is_open(ordinal_of(region, fa)?) {
            out.push(false);
            continue;
        }
        let blocked: Vec<bool> = (0..region.len()).map(|s| !c.is_open(s) || seen.contains(&region.site(s))).collect();
        let mut seed = vec![false; region.len()];
        seed[ordinal_of(region, fa)?] = true;
        let reach = flood(region, &blocked, &seed);
        out.push((0..region.len()).any(|s| reach[s] && arcs.on[near1][s]));
    }
    Ok(out)
}

/// Faces `(a, b, c)` around `x`, counterclockwise, with `b` not on `y`.
fn edge_faces(region: &Region, x: DualVertex, y: DualVertex) -> Result<(AxialCoord, AxialCoord, AxialCoord)> {
    if !x.sites().iter().all(|&s| region.contains(s)) {
        return Err(Error::domain(format!("{x:?} has a face outside the domain")));
    }
    let shared = x.sites().iter().filter(|&&s| y.contains(s)).count();
    if shared != 2 || x == y {
        return Err(Error::domain(format!("{x:?} and {y:?} are not adjacent")));
    }
    let mut faces = x.sites();
    let angle = |s: &AxialCoord| crate::lattice::turn_angle(s.embed() - x.embed());
    faces.sort_by(|p, q| angle(p).total_cmp(&angle(q)));
    let j = faces.iter().position(|&s| !y.contains(s)).unwrap();
    Ok((faces[(j + 2) % 3], faces[j], faces[(j + 1) % 3]))
}

/// Exhaustive check of `E_corner(z)`: enumerates every open simple path
/// between the two near arcs and tests whether removing it disconnects `z`
/// from the far arc.
pub fn separation_oracle(c: &Configuration, corner: Corner, z: AxialCoord) -> Result<bool> {
    let region = c.region();
    if region.len() > 24 {
        return Err(Error::Capacity(format!("separation oracle takes at most 24 sites, got {}", region.len())));
    }
    let arcs = Arcs::new(region)?;
    let zi = ordinal_of(region, z)?;
    let (near1, near2, far) = corner.arcs();
    let mut on_path = vec![false; region.len()];
    let mut found = false;
    for s in 0..region.len() {
        if arcs.on[near1][s] && c.is_open(s) {
            on_path[s] = true;
            paths(c, s, &arcs.on[near1], &arcs.on[near2], &mut on_path, &mut |p| {
                if p[zi] || !flood(region, p, &arcs.on[far])[zi] {
                    found = true;
                }
            });
            on_path[s] = false;
        }
    }
    Ok(found)
}

/// Simple open paths that meet `source` only at their first site and
/// `target` only at their last.
fn paths(c: &Configuration, u: usize, source: &[bool], target: &[bool], on_path: &mut Vec<bool>, visit: &mut impl FnMut(&[bool])) {
    if target[u] {
        visit(on_path);
        return;
    }
    for &v in &c.region().adjacency()[u] {
        if v == crate::lattice::NONE {
            continue;
        }
        let v = v as usize;
        if !on_path[v] && !source[v] && c.is_open(v) {
            on_path[v] = true;
            paths(c, v, source, target, on_path, visit);
            on_path[v] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::sampler::enumerate_configs;

    fn eta(x: f64) -> CrossRatio {
        CrossRatio::new(x).unwrap()
    }

    #[test]
    fn cardy_symmetry_and_limits() {
        assert_eq!(cardy_probability(eta(0.5)).unwrap(), 0.5);
        assert!((cardy_quadrature(eta(0.5)).unwrap() - 0.5).abs() < 1e-15);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let f = cardy_probability(eta(x)).unwrap();
            let g = cardy_probability(eta(1.0 - x)).unwrap();
            assert!((f + g - 1.0).abs() < 1e-12);
        }
        assert!(cardy_probability(eta(1e-12)).unwrap() < 1e-3);
        assert!(cardy_probability(eta(1.0 - 1e-12)).unwrap() > 1.0 - 1e-3);
        assert!(CrossRatio::new(0.0).is_err() && CrossRatio::new(1.0).is_err());
    }

    #[test]
    fn cardy_quarter_pinned() {
        // Independent midpoint-rule oracle in the variable z = u³ on a
        // fine grid, Richardson-extrapolated.
        let mid = |eta: f64, n: usize| {
            let b = eta.cbrt();
            let h = b / n as f64;
            (0..n).map(|i| 3.0 * (1.0 - ((i as f64 + 0.5) * h).powi(3)).powf(-2.0 / 3.0) * h).sum::<f64>()
        };
        let rich = |eta: f64| (4.0 * mid(eta, 40_000) - mid(eta, 20_000)) / 3.0;
        let oracle = rich(0.25) / (2.0 * rich(0.5));
        let f = cardy_probability(eta(0.25)).unwrap();
        assert!((f - oracle).abs() < 1e-9, "{f} vs {oracle}");
        assert!((f - 0.373_548_791_33).abs() < 1e-8, "{f}");
    }

    /// Jacobi theta route: `k = θ₂(q)² / θ₃(q)²` with nome `q = e^{-2π/ρ}`.
    fn theta_eta(rho: f64) -> f64 {
        let q = (-2.0 * PI / rho).exp();
        let theta2: f64 = (0..60).map(|n| 2.0 * q.powf((n as f64 + 0.5).powi(2))).sum();
        let theta3: f64 = 1.0 + (1..60).map(|n| 2.0 * q.powi(n * n)).sum::<f64>();
        let k = (theta2 / theta3).powi(2);
        4.0 * k / (1.0 + k).powi(2)
    }

    #[test]
    fn rectangle_moduli() {
        assert!((rect_cross_ratio(1.0).unwrap().value() - 0.5).abs() < 1e-12);
        for rho in [0.5, 1.0, 2.0, 3.0] {
            let a = rect_cross_ratio(rho).unwrap().value();
            assert!((a - theta_eta(rho)).abs() < 1e-10, "rho={rho}: {a} vs {}", theta_eta(rho));
        }
        let two = rect_cross_ratio(2.0).unwrap().value();
        assert!((two - (12.0 * 2f64.sqrt() - 16.0)).abs() < 1e-12, "{two}");
        let mut last = 0.0;
        for rho in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let e = rect_cross_ratio(rho).unwrap().value();
            assert!(e > last);
            last = e;
        }
        assert!(last > 0.999_999);
        assert!(rect_cross_ratio(0.0).is_err());
    }

    #[test]
    fn triples() {
        let a = h_abc_target(TargetPoint::Triangle(Complex64::new(1.0, 0.0))).unwrap();
        assert!((a.h_a - 1.0).abs() < 1e-12 && a.h_b.abs() < 1e-12 && a.h_c.abs() < 1e-12);
        let half = h_abc_target(TargetPoint::Boundary(0.5)).unwrap();
        assert_eq!(half.h_a, half.h_b);
        let q = h_abc_target(TargetPoint::Boundary(0.25)).unwrap();
        assert!((q.h_b - 0.373_548_791_33).abs() < 1e-8);
        for t in [q, half, a] {
            assert!((t.sum() - 1.0).abs() < 1e-12);
        }
        // h is the identity on the reference triangle.
        let w = Complex64::new(0.1, 0.2);
        assert!((h_abc_target(TargetPoint::Triangle(w)).unwrap().complex() - w).norm() < 1e-12);
        assert!(h_abc_target(TargetPoint::Triangle(Complex64::new(2.0, 0.0))).is_err());
        assert!(h_abc_target(TargetPoint::Boundary(1.5)).is_err());
    }

    fn small_triangle(delta: f64) -> Arc<Region> {
        let t = unit_triangle();
        Arc::new(discretize_domain(t.clone(), delta, t).unwrap())
    }

    #[test]
    fn separation_basics() {
        let r = small_triangle(1.0 / 8.0);
        let closed = Configuration::all(&r, false);
        let open = Configuration::all(&r, true);
        for &z in r.sites() {
            assert!(!detect_separation(&closed, z).unwrap());
            assert!(detect_separation(&open, z).unwrap());
        }
    }

    #[test]
    fn separation_matches_oracle_exhaustively() {
        let r = small_triangle(1.0 / 3.0);
        assert!(r.len() <= 12, "{}", r.len());
        for w in enumerate_configs(&r).unwrap() {
            let c = w.config;
            for corner in Corner::ALL {
                let map = separation_map(&c, corner).unwrap();
                for (i, &z) in r.sites().iter().enumerate() {
                    assert_eq!(map[i], separation_oracle(&c, corner, z).unwrap(), "{corner:?} {z} {}", c.to_rle());
                }
            }
        }
    }

    /// Oriented dual edges `x → y` around interior dual vertices, ordered
    /// counterclockwise from each `x`.
    fn stars(r: &Region) -> Vec<(DualVertex, [DualVertex; 3])> {
        let inside = |v: DualVertex| v.sites().iter().all(|&s| r.contains(s));
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for &s in r.sites() {
            for j in 0..6 {
                let x = DualVertex::corner(s, j);
                if !seen.insert(x) || !inside(x) {
                    continue;
                }
                let [a, b, c] = x.sites();
                let mut ys = [x.across(a, b), x.across(b, c), x.across(c, a)];
                if !ys.iter().all(|&y| inside(y)) {
                    continue;
                }
                let angle = |y: DualVertex| crate::lattice::turn_angle(y.embed() - x.embed());
                ys.sort_by(|p, q| angle(*p).partial_cmp(&angle(*q)).unwrap());
                out.push((x, ys));
            }
        }
        out
    }

    /// Disjoint arms by brute force: every open path from `c` to the
    /// entering arc, then a flood from `a` around it.
    fn increment_oracle(cf: &Configuration, corner: Corner, x: DualVertex, y: DualVertex) -> bool {
        let region = cf.region();
        let arcs = Arcs::new(region).unwrap();
        let (near1, near2, far) = corner.arcs();
        let (fa, fb, fc) = edge_faces(region, x, y).unwrap();
        let [a, b, c] = [fa, fb, fc].map(|s| region.ordinal(s).unwrap());
        if !cf.is_open(a) || cf.is_open(b) || !cf.is_open(c) {
            return false;
        }
        let closed: Vec<bool> = (0..region.len()).map(|i| cf.is_open(i)).collect();
        let seeds: Vec<bool> = (0..region.len()).map(|i| arcs.on[far][i]).collect();
        if !flood(region, &closed, &seeds)[b] {
            return false;
        }
        let none = vec![false; region.len()];
        let mut on = vec![false; region.len()];
        on[c] = true;
        let mut hit = false;
        paths(cf, c, &none, &arcs.on[near2], &mut on, &mut |p| {
            if hit || p[a] {
                return;
            }
            let blocked: Vec<bool> = (0..region.len()).map(|i| p[i] || !cf.is_open(i)).collect();
            let mut seed = vec![false; region.len()];
            seed[a] = true;
            let reach = flood(region, &blocked, &seed);
            hit = (0..region.len()).any(|i| reach[i] && arcs.on[near1][i]);
        });
        hit
    }

    #[test]
    fn increments_match_oracle() {
        let r = small_triangle(0.25);
        let stars = stars(&r);
        for w in enumerate_configs(&r).unwrap().step_by(13) {
            for corner in Corner::ALL {
                for (x, ys) in &stars {
                    for &y in ys {
                        let fast = edge_increment(&w.config, corner, *x, y).unwrap();
                        assert_eq!(fast, increment_oracle(&w.config, corner, *x, y), "{corner:?} {x:?} {y:?} {}", w.config.to_rle());
                    }
                }
            }
        }
    }

    #[test]
    fn color_switching_is_exact() {
        let r = small_triangle(0.25);
        let stars = stars(&r);
        assert!(!stars.is_empty());
        let edges: Vec<(DualVertex, DualVertex)> = stars.iter().flat_map(|(x, ys)| ys.iter().map(move |&y| (*x, y))).collect();
        // counts[star][corner][edge], edges counterclockwise
        let mut counts = vec![[[0.0f64; 3]; 3]; stars.len()];
        for w in enumerate_configs(&r).unwrap() {
            let weight = w.weight(0.5);
            for corner in Corner::ALL {
                let ev = edge_increments(&w.config, corner, &edges).unwrap();
                for (k, _) in stars.iter().enumerate() {
                    for e in 0..3 {
                        if ev[3 * k + e] {
                            counts[k][corner as usize][e] += weight;
                        }
                    }
                }
            }
        }
        for (k, c) in counts.iter().enumerate() {
            assert!(c[0].iter().sum::<f64>() > 0.0);
            for e in 0..3 {
                let a = c[0][e];
                assert!((c[1][(e + 1) % 3] - a).abs() < 1e-12, "star {k}: {c:?}");
                assert!((c[2][(e + 2) % 3] - a).abs() < 1e-12, "star {k}: {c:?}");
            }
        }
    }

    fn vertex_oracle(c: &Configuration, corner: Corner, v: DualVertex) -> bool {
        let region = c.region();
        let arcs = Arcs::new(region).unwrap();
        let (near1, near2, far) = corner.arcs();
        let vs: Vec<usize> = v.sites().iter().map(|&s| region.ordinal(s).unwrap()).collect();
        let mut on_path = vec![false; region.len()];
        let mut found = false;
        for s in 0..region.len() {
            if arcs.on[near1][s] && c.is_open(s) {
                on_path[s] = true;
                paths(c, s, &arcs.on[near1], &arcs.on[near2], &mut on_path, &mut |p| {
                    let reach = flood(region, p, &arcs.on[far]);
                    if vs.iter().all(|&i| p[i] || !reach[i]) {
                        found = true;
                    }
                });
                on_path[s] = false;
            }
        }
        found
    }

    #[test]
    fn vertex_events_match_oracle() {
        let r = small_triangle(0.25);
        let vertices: Vec<DualVertex> = stars(&r).iter().flat_map(|(x, ys)| std::iter::once(*x).chain(ys.iter().copied())).collect();
        for w in enumerate_configs(&r).unwrap().into_iter().step_by(7) {
            for corner in Corner::ALL {
                let ev = vertex_separation(&w.config, corner, &vertices).unwrap();
                for (k, &v) in vertices.iter().enumerate() {
                    assert_eq!(ev[k], vertex_oracle(&w.config, corner, v), "{corner:?} {v:?} {}", w.config.to_rle());
                }
            }
        }
    }
}
