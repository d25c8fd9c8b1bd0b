use std::collections::HashSet;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use percolab::arms::{arm_event, horizontal_crossing, ArmQuery, Interval, Landing};
use percolab::cardy::{cardy_probability, equilateral_target, CrossRatio};
use percolab::connectivity::{connected, has_circuit_in_annulus, Color};
use percolab::explorer::explore_chordal;
use percolab::lattice::{discretize_domain, ring, unit_triangle, AxialCoord, Region, Selector};
use percolab::loewner::{zipper_extract, HalfPlanePolyline};
use percolab::sampler::{enumerate_configs, flip_site, sample, Configuration, LazyConfig, SiteColors};
use percolab::stats::Sums;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

fn ball(n: u32) -> Arc<Region> {
    Arc::new(Region::ball(n).unwrap())
}

fn side(r: &Region, i: usize) -> Vec<AxialCoord> {
    r.region_sites(Selector::Side(i)).unwrap()
}

fn polyline() -> impl Strategy<Value = HalfPlanePolyline> {
    prop::collection::vec((-2.0f64..2.0, 0.1f64..3.0), 1..6).prop_filter_map("coincident points", |pts| {
        let mut v = vec![Complex64::new(0.0, 0.0)];
        v.extend(pts.into_iter().map(|(x, y)| Complex64::new(x, y)));
        HalfPlanePolyline::new(v).ok()
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn ball_size(n in 0u32..60) {
        prop_assert_eq!(Region::ball(n).unwrap().len() as u32, 1 + 3 * n * (n + 1));
    }

    #[test]
    fn neighbors_are_symmetric(k in -50i32..50, l in -50i32..50, dir in 0usize..6) {
        let a = AxialCoord::new(k, l);
        let b = a.neighbor(dir);
        prop_assert_eq!(b.neighbor((dir + 3) % 6), a);
        prop_assert_eq!(a.distance(b), 1);
        prop_assert_eq!(b.direction_to(a), Some((dir + 3) % 6));
    }

    #[test]
    fn region_adjacency_is_symmetric(n in 1u32..8, torus in any::<bool>()) {
        let region = if torus { Region::torus(n + 2).unwrap() } else { Region::ball(n).unwrap() };
        for s in region.sites() {
            for t in region.neighbors(*s).unwrap() {
                prop_assert!(region.neighbors(t).unwrap().contains(s));
            }
        }
    }

    #[test]
    fn discretization_scales(k in 2u32..12, lambda in 1u32..4) {
        let delta = 1.0 / k as f64;
        let tri = unit_triangle();
        let big: Vec<_> = tri.iter().map(|z| z * lambda as f64).collect();
        let a = discretize_domain(tri, delta, vec![]).unwrap();
        let b = discretize_domain(big, delta * lambda as f64, vec![]).unwrap();
        prop_assert_eq!(a.sites(), b.sites());
    }

    #[test]
    fn sampling_is_monotone_in_p(seed in any::<u64>(), i in 0u64..1000, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let r = ball(6);
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        let a = sample(&r, lo, seed, i);
        let b = sample(&r, hi, seed, i);
        for k in 0..r.len() {
            prop_assert!(!a.is_open(k) || b.is_open(k));
        }
    }

    #[test]
    fn replay_is_deterministic(seed in any::<u64>(), i in 0u64..1000, p in 0.0f64..1.0) {
        let r = ball(5);
        let a = sample(&r, p, seed, i);
        let b = sample(&r, p, seed, i);
        prop_assert_eq!(a.words(), b.words());
        let mut lazy = LazyConfig::new(&r, p, seed, i);
        for k in (0..r.len()).rev() {
            prop_assert_eq!(lazy.open(k), a.is_open(k));
        }
    }

    // Opening a site can create a crossing but never destroy one.
    #[test]
    fn crossing_is_increasing(seed in any::<u64>(), p in 0.2f64..0.8, site in 0usize..64) {
        let r = Arc::new(Region::rhombus(8, 8).unwrap());
        let mut c = sample(&r, p, seed, 0);
        let before = horizontal_crossing(&c).unwrap();
        c.set(site, true);
        prop_assert!(!before || horizontal_crossing(&c).unwrap());
    }

    // Exactly one of an open crossing between opposite sides and a closed
    // crossing between the other two.
    #[test]
    fn rhombus_complementation(seed in any::<u64>(), p in 0.0f64..1.0, w in 1u32..10, h in 1u32..10) {
        let r = Arc::new(Region::rhombus(w, h).unwrap());
        let c = sample(&r, p, seed, 0);
        let open = connected(&c, &side(&r, 1), &side(&r, 3), Color::Open).unwrap();
        let closed = connected(&c, &side(&r, 2), &side(&r, 4), Color::Closed).unwrap();
        prop_assert!(open != closed);
    }

    // A circuit around the origin blocks every path of the other color out
    // of the hole, and survives enlarging the annulus.
    #[test]
    fn circuits_block_crossings(seed in any::<u64>(), p in 0.3f64..0.9, n in 1u32..4, extra in 1u32..4) {
        let big_n = n + extra;
        let r = ball(big_n + 1);
        let c = sample(&r, p, seed, 0);
        if has_circuit_in_annulus(&c, n, big_n, Color::Open).unwrap() {
            prop_assert!(!connected(&c, &ring(n), &ring(big_n + 1), Color::Closed).unwrap());
            prop_assert!(has_circuit_in_annulus(&c, n, big_n + 1, Color::Open).unwrap());
        }
    }

    // The path only depends on the hexagons it touches.
    #[test]
    fn exploration_is_local(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let r = Arc::new(discretize_domain(unit_triangle(), 1.0 / 8.0, unit_triangle()).unwrap());
        let b = r.boundary().unwrap();
        let (a, z) = (b.vertices[b.marks[0]], b.vertices[b.marks[1]]);
        let c = sample(&r, 0.5, seed, 0);
        let path = explore_chordal(&c, a, z, None).unwrap();
        let touched: HashSet<AxialCoord> = path.vertices.iter().flat_map(|v| v.sites()).collect();
        let far: Vec<AxialCoord> = r.sites().iter().copied().filter(|s| !touched.contains(s)).collect();
        prop_assume!(!far.is_empty());
        let flipped = flip_site(&c, *pick.get(&far)).unwrap();
        prop_assert_eq!(explore_chordal(&flipped, a, z, None).unwrap().vertices, path.vertices);
    }

    #[test]
    fn arm_events_are_monotone_in_radii(
        seed in any::<u64>(),
        sigma in prop::collection::vec(any::<bool>(), 1..4),
        n1 in 0u32..3,
        dn in 1u32..3,
        big_n in 5u32..7,
    ) {
        let r = ball(7);
        let c = sample(&r, 0.5, seed, 0);
        let n2 = n1 + dn;
        let event = |n: u32, big: u32| ArmQuery::new(&sigma, n, big, false).and_then(|q| arm_event(&c, &q));
        if let (Ok(a), Ok(b)) = (event(n1, big_n), event(n2, big_n)) {
            prop_assert!(!a || b, "A(n1, N) must lie inside A(n2, N)");
        }
        if let (Ok(a), Ok(b)) = (event(n2, big_n + 1), event(n2, big_n)) {
            prop_assert!(!a || b, "A(n, N + 1) must lie inside A(n, N)");
        }
    }

    #[test]
    fn landing_implies_plain_event(seed in any::<u64>(), cuts in prop::collection::vec(0.0f64..1.0, 4)) {
        let r = ball(5);
        let c = sample(&r, 0.5, seed, 0);
        let sigma = [true, false];
        let mut v = cuts.clone();
        v.sort_by(f64::total_cmp);
        prop_assume!(v[0] < v[1] && v[2] < v[3]);
        let landing = Landing {
            inner: vec![Interval { lo: 0.0, hi: v[0] }, Interval { lo: v[1], hi: 1.0 }],
            outer: vec![Interval { lo: 0.0, hi: v[2] }, Interval { lo: v[3], hi: 1.0 }],
        };
        let plain = ArmQuery::new(&sigma, 1, 5, false).unwrap();
        let landed = plain.clone().with_landing(landing).unwrap();
        prop_assert!(!arm_event(&c, &landed).unwrap() || arm_event(&c, &plain).unwrap());
    }

    #[test]
    fn cardy_complement(eta in 0.0f64..=1.0) {
        let f = cardy_probability(CrossRatio::new(eta).unwrap()).unwrap();
        let g = cardy_probability(CrossRatio::new(1.0 - eta).unwrap()).unwrap();
        prop_assert!((f + g - 1.0).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn harmonic_triple_sums_to_one(u in 0.01f64..1.0, v in 0.01f64..1.0) {
        let (u, v) = if u + v < 1.0 { (u, v) } else { (1.0 - u, 1.0 - v) };
        prop_assume!(u + v < 0.99);
        let tri = unit_triangle();
        let z = tri[0] + (tri[1] - tri[0]) * u + (tri[2] - tri[0]) * v;
        let h = equilateral_target(z).unwrap();
        prop_assert!((h.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zipper_scaling_and_reflection(path in polyline(), lambda in 0.1f64..10.0) {
        let d = zipper_extract(&path).unwrap();
        let s = zipper_extract(&path.scaled(lambda)).unwrap();
        prop_assert_eq!(s.len(), d.len());
        let tol = 1e-9 * (1.0 + d.total_time());
        for i in 0..d.len() {
            prop_assert!((s.times[i] - lambda * lambda * d.times[i]).abs() < tol * lambda * lambda);
            prop_assert!((s.values[i] - lambda * d.values[i]).abs() < 1e-9 * lambda * (1.0 + d.values[i].abs()));
        }
        let m = zipper_extract(&path.reflected()).unwrap();
        for i in 0..d.len() {
            prop_assert!((m.times[i] - d.times[i]).abs() < tol);
            prop_assert!((m.values[i] + d.values[i]).abs() < 1e-9 * (1.0 + d.values[i].abs()));
        }
    }

    // Capacity grows along the path, and a vertical segment has the same
    // capacity however it is cut up.
    #[test]
    fn capacity_additivity(path in polyline(), x in -1.0f64..1.0, y in 0.1f64..3.0, pieces in 1usize..12) {
        let mut prev = 0.0;
        for k in 2..=path.points.len() {
            let total = zipper_extract(&HalfPlanePolyline::new(path.points[..k].to_vec()).unwrap()).unwrap().total_time();
            prop_assert!(total >= prev - 1e-12);
            prev = total;
        }
        let base = Complex64::new(x, 0.0);
        let seg = |m: usize| {
            let mut pts = vec![Complex64::new(0.0, 0.0)];
            if x != 0.0 {
                pts.push(Complex64::new(x, 1e-9));
            }
            pts.extend((1..=m).map(|j| base + Complex64::new(0.0, y * j as f64 / m as f64)));
            zipper_extract(&HalfPlanePolyline::new(pts).unwrap()).unwrap().total_time()
        };
        prop_assert!((seg(1) - seg(pieces)).abs() < 1e-9 * (1.0 + seg(1)));
    }

    #[test]
    fn sums_merge_exactly(xs in prop::collection::vec(any::<u32>(), 0..50), cut in any::<prop::sample::Index>()) {
        let all = xs.iter().fold(Sums::default(), |s, &x| s.merge(Sums::one(x as u64)));
        let k = if xs.is_empty() { 0 } else { cut.index(xs.len() + 1) };
        let left = xs[..k].iter().fold(Sums::default(), |s, &x| s.merge(Sums::one(x as u64)));
        let right = xs[k..].iter().rev().fold(Sums::default(), |s, &x| s.merge(Sums::one(x as u64)));
        prop_assert_eq!(right.merge(left), all);
    }
}

fn weights(region: &Arc<Region>, p: f64, event: impl Fn(&Configuration) -> (bool, bool)) -> (f64, f64, f64) {
    let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
    for w in enumerate_configs(region).unwrap() {
        let (x, y) = event(&w.config);
        let wt = w.weight(p);
        a += if x { wt } else { 0.0 };
        b += if y { wt } else { 0.0 };
        ab += if x && y { wt } else { 0.0 };
    }
    (a, b, ab)
}

// Open crossings at p and closed crossings at 1 - p have equal law, and
// at 1/2 the two colors are exchangeable.
#[test]
fn color_exchange() {
    let r = Arc::new(Region::rhombus(3, 2).unwrap());
    for p in [0.2, 0.5, 0.7] {
        let (open, _, _) = weights(&r, p, |c| (connected(c, &side(&r, 1), &side(&r, 3), Color::Open).unwrap(), false));
        let (closed, _, _) =
            weights(&r, 1.0 - p, |c| (connected(c, &side(&r, 1), &side(&r, 3), Color::Closed).unwrap(), false));
        assert!((open - closed).abs() < 1e-12);
    }
    let sq = Arc::new(Region::rhombus(3, 3).unwrap());
    let (h, _, _) = weights(&sq, 0.5, |c| (horizontal_crossing(c).unwrap(), false));
    assert!((h - 0.5).abs() < 1e-12, "square crossing at 1/2 is {h}");
}

#[test]
fn harris_inequality() {
    let r = Arc::new(Region::rhombus(3, 3).unwrap());
    let (s1, s2, s3, s4) = (side(&r, 1), side(&r, 2), side(&r, 3), side(&r, 4));
    for p in [0.3, 0.5, 0.8] {
        // two increasing events
        let (a, b, ab) = weights(&r, p, |c| {
            (connected(c, &s1, &s3, Color::Open).unwrap(), connected(c, &s2, &s4, Color::Open).unwrap())
        });
        assert!(ab >= a * b - 1e-12, "p = {p}: {ab} < {a} * {b}");
        // an increasing and a decreasing event
        let (a, b, ab) = weights(&r, p, |c| {
            (connected(c, &s1, &s3, Color::Open).unwrap(), connected(c, &s1, &s3, Color::Closed).unwrap())
        });
        assert!(ab <= a * b + 1e-12, "p = {p}: {ab} > {a} * {b}");
    }
}

// Two disjoint open arms cost at most the square of one arm.
#[test]
fn bk_spot_check() {
    let r = Arc::new(Region::ball(4).unwrap());
    for level in [0.5, 0.7] {
        let n = 4000u64;
        let (mut one, mut two) = (0u64, 0u64);
        let q1 = ArmQuery::new(&[true], 1, 4, false).unwrap();
        let q2 = ArmQuery::new(&[true, true], 1, 4, false).unwrap();
        for i in 0..n {
            let c = sample(&r, level, 77, i);
            one += arm_event(&c, &q1).unwrap() as u64;
            two += arm_event(&c, &q2).unwrap() as u64;
        }
        let (p1, p2) = (one as f64 / n as f64, two as f64 / n as f64);
        let se = (p2 * (1.0 - p2) / n as f64).sqrt() + 2.0 * (p1 * (1.0 - p1) / n as f64).sqrt();
        assert!(p2 <= p1 * p1 + 3.0 * se, "p = {level}: {p2} > {p1}^2");
    }
}

// Crossing probabilities of the torus sharpen around 1/2 as it grows.
#[test]
fn torus_window_shrinks() {
    use percolab::harness::{torus_closed_winding, window_width};
    let ps: Vec<f64> = (0..=12).map(|k| 0.2 + 0.05 * k as f64).collect();
    let width = |n: u32| {
        let r = Arc::new(Region::torus(n).unwrap());
        let ys: Vec<f64> = ps
            .iter()
            .map(|&p| (0..400).filter(|&i| torus_closed_winding(&sample(&r, p, 5, i))).count() as f64 / 400.0)
            .collect();
        window_width(&ps, &ys, 0.1, 0.9).unwrap()
    };
    let (small, large) = (width(4), width(24));
    assert!(large < small, "window {large} at n = 24 is not below {small} at n = 4");
}
