//! Geometry property fuzzing: manifold membership under every operation
//! that produces points, the learned-map construction, and isometry
//! invariance of the distance.

use lecf_core::iag::centroid_aggregate;
use lecf_core::lecf::{self, WmapParams};
use lecf_core::manifold::{
    lorentz_distance, manifold_deviation, project_to_hyperboloid, random_transform, Curvature,
    HPoint,
};
use lecf_core::model::rsgd_point;
use lecf_core::rng;

fn c1() -> Curvature {
    Curvature::unit()
}

#[test]
fn manifold_membership_fuzz() {
    // >= 10^4 checked applications across projection, centroid aggregation,
    // the equivariant transform and optimizer steps, all within 1e-9
    let mut r = rng::seeded(1001);
    let mut checked = 0usize;
    for round in 0..1500 {
        let n = 2 + round % 7;
        let p = project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.5), c1());
        assert!(manifold_deviation(p.coords(), c1()) <= 1e-9);
        checked += 1;

        let q = project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.5), c1());
        let s = project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.5), c1());
        let w = [0.2 + (round % 5) as f64, 1.0, 0.5];
        let cen = centroid_aggregate(&w, &[p.clone(), q, s], c1()).unwrap();
        assert!(manifold_deviation(cen.coords(), c1()) <= 1e-9);
        checked += 1;

        let wmap = WmapParams {
            w: rng::xavier_uniform(&mut r, n * (n + 1), n),
            b: rng::normal_vec(&mut r, n * (n + 1), 0.1),
            msg_dim: n,
            space_dim: n,
        };
        let v = rng::normal_vec(&mut r, n + 1, 1.0);
        let msg = rng::normal_vec(&mut r, n, 1.0);
        let moved = lecf::transform_point(&wmap, &msg, &v, &p, c1()).unwrap();
        assert!(manifold_deviation(moved.coords(), c1()) <= 1e-9);
        checked += 1;

        let mut stepped = cen.clone();
        for _ in 0..4 {
            let g = rng::normal_vec(&mut r, n + 1, 1.0);
            rsgd_point(&mut stepped, &g, 1e-2, c1()).unwrap();
            assert!(manifold_deviation(stepped.coords(), c1()) <= 1e-9);
            checked += 1;
        }
    }
    assert!(checked >= 10_000, "only {checked} applications checked");
}

#[test]
fn learned_map_fuzz() {
    // >= 10^4 random (x, W_m, v) across n in {2..16}: f x on-manifold
    let mut r = rng::seeded(1002);
    let mut checked = 0usize;
    while checked < 10_000 {
        for n in 2..=16usize {
            let wmap = WmapParams {
                w: rng::xavier_uniform(&mut r, n * (n + 1), n),
                b: rng::normal_vec(&mut r, n * (n + 1), 0.1),
                msg_dim: n,
                space_dim: n,
            };
            let v = rng::normal_vec(&mut r, n + 1, 1.0);
            let x = project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.0), c1());
            let msg = rng::normal_vec(&mut r, n, 1.0);
            let f = lecf::build_lorentz_map(&wmap, &msg, &v, &x, c1());
            let fx = f.apply_coords(x.coords()).unwrap();
            assert!(
                manifold_deviation(&fx, c1()) <= 1e-9,
                "n={n} deviation {}",
                manifold_deviation(&fx, c1())
            );
            checked += 1;
        }
    }
}

#[test]
fn isometry_suite() {
    // 100 transforms x 100 point pairs, distance preserved to 1e-8 for d <= 20
    let mut r = rng::seeded(1003);
    let n = 6;
    let pairs: Vec<(HPoint, HPoint)> = (0..100)
        .map(|_| {
            (
                project_to_hyperboloid(&rng::normal_vec(&mut r, n, 2.0), c1()),
                project_to_hyperboloid(&rng::normal_vec(&mut r, n, 2.0), c1()),
            )
        })
        .collect();
    for seed in 0..100u64 {
        let map = random_transform(seed, (-2.0, 2.0), n);
        for (x, y) in &pairs {
            let d = lorentz_distance(x, y, c1()).unwrap();
            assert!(d <= 20.0, "sampled pair too far for the tolerance regime");
            let d2 =
                lorentz_distance(&map.apply(x).unwrap(), &map.apply(y).unwrap(), c1()).unwrap();
            assert!((d - d2).abs() <= 1e-8, "seed {seed}: {d} vs {d2}");
        }
    }
}

#[test]
fn triangle_inequality_holds() {
    let mut r = rng::seeded(1004);
    for _ in 0..500 {
        let n = 3;
        let a = project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.5), c1());
        let b = project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.5), c1());
        let c = project_to_hyperboloid(&rng::normal_vec(&mut r, n, 1.5), c1());
        let ab = lorentz_distance(&a, &b, c1()).unwrap();
        let bc = lorentz_distance(&b, &c, c1()).unwrap();
        let ac = lorentz_distance(&a, &c, c1()).unwrap();
        assert!(ac <= ab + bc + 1e-10);
    }
}
