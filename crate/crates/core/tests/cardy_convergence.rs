use std::sync::Arc;

use num_complex::Complex64;

use percolab::cardy::{equilateral_target, separation_event, Corner};
use percolab::harness::mc_estimate;
use percolab::lattice::{discretize_domain, unit_triangle, AxialCoord, Region};
use percolab::stats::derive_seed;

fn nearest_site(r: &Region, z: Complex64) -> AxialCoord {
    *r.sites().iter().min_by(|a, b| (r.embed_site(**a) - z).norm().total_cmp(&(r.embed_site(**b) - z).norm())).unwrap()
}

// H_A at a point below the centre converges to its barycentric coordinate
// 3/8, with the bias shrinking as the mesh refines.
#[test]
fn separation_probability_converges() {
    let z = Complex64::new(0.5, 3f64.sqrt() / 8.0);
    let target = equilateral_target(z).unwrap().get(Corner::A);
    assert!((target - 0.375).abs() < 1e-9);
    let mut bias = Vec::new();
    for (k, m) in [8u32, 16, 32].into_iter().enumerate() {
        let r = Arc::new(discretize_domain(unit_triangle(), 1.0 / m as f64, unit_triangle()).unwrap());
        let s = nearest_site(&r, z);
        let e = mc_estimate(|c| separation_event(c, Corner::A, s).unwrap(), &r, 0.5, 100_000, derive_seed(31, k as u64));
        assert!(e.stderr < 0.002);
        bias.push(e.mean - target);
    }
    assert!(bias.windows(2).all(|w| w[1].abs() < w[0].abs()), "bias {bias:?} does not shrink");
    assert!(bias[2].abs() < 0.03, "bias {bias:?}");
}
