use poi_alias::geo::{
    centroid, haversine, local_region_centroid, max_coverage_window, GeoPoint, LocalProjection, PlanarPoint,
    EARTH_RADIUS_M,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Corner-enumeration reference: every `(p.x, q.y)` pair is a candidate,
/// coverage is counted directly with closed edges.
fn brute_force_window(points: &[PlanarPoint<f64>], side: f64) -> (usize, f64, f64) {
    let mut best = (0usize, f64::INFINITY, f64::INFINITY);
    for p in points {
        for q in points {
            let (x0, y0) = (p.x, q.y);
            let count = points
                .iter()
                .filter(|r| x0 <= r.x && r.x <= x0 + side && y0 <= r.y && r.y <= y0 + side)
                .count();
            if count > best.0 || (count == best.0 && (x0, y0) < (best.1, best.2)) {
                best = (count, x0, y0);
            }
        }
    }
    best
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<PlanarPoint<f64>> {
    (0..n).map(|_| PlanarPoint { x: rng.random_range(0.0..extent), y: rng.random_range(0.0..extent) }).collect()
}

#[test]
fn equator_degree_matches_arc_length() {
    let expected = std::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
    let d: f64 = haversine(GeoPoint { lat: 0.0, lon: 0.0 }, GeoPoint { lat: 0.0, lon: 1.0 });
    assert!((d - 111_194.9).abs() < 0.1, "{d}");
    assert!((d - expected).abs() < 1e-6);
}

#[test]
fn haversine_agrees_with_law_of_cosines() {
    let (a, b) = (GeoPoint { lat: 31.30_f64, lon: 120.57 }, GeoPoint { lat: 31.31_f64, lon: 120.58 });
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let cosines = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).acos() * EARTH_RADIUS_M;
    let d = haversine(a, b);
    assert!((d - cosines).abs() / cosines < 1e-4, "{d} vs {cosines}");
}

#[test]
fn centroid_matches_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<GeoPoint<f64>> =
        (0..100).map(|_| GeoPoint { lat: rng.random_range(30.0..32.0), lon: rng.random_range(120.0..121.0) }).collect();
    let mut lat = 0.0;
    let mut lon = 0.0;
    for p in &pts {
        lat += p.lat;
        lon += p.lon;
    }
    let c = centroid(&pts).unwrap();
    assert!(((c.lat - lat / 100.0) / c.lat).abs() < 1e-12);
    assert!(((c.lon - lon / 100.0) / c.lon).abs() < 1e-12);
}

#[test]
fn projection_north_offset() {
    let origin = GeoPoint { lat: 31.3_f64, lon: 120.57 };
    let p = LocalProjection::new(origin).project(GeoPoint { lat: 31.31, lon: 120.57 });
    assert_eq!(p.x, 0.0);
    assert!((p.y - 1111.9).abs() < 0.05);
}

#[test]
fn sweep_matches_brute_force_on_seeded_sets() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=200);
        let extent = 1000.0;
        let pts = random_points(&mut rng, n, extent);
        let side = extent * 0.1 * rng.random_range(0.5..3.0);
        let w = max_coverage_window(&pts, side).unwrap();
        let (count, x0, y0) = brute_force_window(&pts, side);
        assert_eq!(w.count, count, "seed {seed}");
        assert_eq!((w.x0, w.y0), (x0, y0), "seed {seed}");
    }
}

#[test]
fn sweep_matches_brute_force_on_lattice_ties() {
    // Integer lattices put many points exactly on window edges.
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let pts: Vec<_> = (0..rng.random_range(1..120))
            .map(|_| PlanarPoint { x: rng.random_range(0..12) as f64, y: rng.random_range(0..12) as f64 })
            .collect();
        let side = rng.random_range(1..5) as f64;
        let w = max_coverage_window(&pts, side).unwrap();
        assert_eq!((w.count, w.x0, w.y0), brute_force_window(&pts, side), "seed {seed}");
    }
}

#[test]
fn local_centroid_ignores_far_outliers() {
    let a = GeoPoint { lat: 31.3_f64, lon: 120.57 };
    let proj = LocalProjection::new(a);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cluster: Vec<_> = (0..90)
        .map(|_| proj.unproject(PlanarPoint { x: rng.random_range(-100.0..100.0), y: rng.random_range(-100.0..100.0) }))
        .collect();
    let a_centroid = centroid(&cluster).unwrap();
    let with_outliers = |dx: f64| {
        let mut pts = cluster.clone();
        pts.extend((0..10).map(|i| proj.unproject(PlanarPoint { x: dx + i as f64, y: 5000.0 })));
        local_region_centroid(&pts, 640.0).unwrap()
    };
    let near = with_outliers(3000.0);
    let far = with_outliers(9000.0);
    assert!(haversine(near, a_centroid) <= 320.0);
    assert!(haversine(near, far) < 1e-6);
}

#[test]
fn large_sweep_is_fast() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts = random_points(&mut rng, 100_000, 20_000.0);
    let t = std::time::Instant::now();
    let w = max_coverage_window(&pts, 640.0).unwrap();
    let elapsed = t.elapsed();
    assert!(w.count > 0);
    assert!(elapsed.as_secs_f64() < 2.0, "{elapsed:?}");
}

fn geo() -> impl Strategy<Value = GeoPoint<f64>> {
    (-89.0..89.0f64, -179.0..179.0f64).prop_map(|(lat, lon)| GeoPoint { lat, lon })
}

proptest! {
    #[test]
    fn haversine_is_a_metric(a in geo(), b in geo(), c in geo()) {
        let ab = haversine(a, b);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - haversine(b, a)).abs() <= 1e-6);
        prop_assert!(haversine(a, a) == 0.0);
        prop_assert!(ab <= haversine(a, c) + haversine(c, b) + 1e-6);
    }

    #[test]
    fn window_covers_at_least_any_single_point(
        pts in prop::collection::vec((0.0..500.0f64, 0.0..500.0f64), 1..60),
        side in 1.0..200.0f64,
    ) {
        let pts: Vec<_> = pts.into_iter().map(|(x, y)| PlanarPoint { x, y }).collect();
        let w = max_coverage_window(&pts, side).unwrap();
        prop_assert!(w.count >= 1 && w.count <= pts.len());
        prop_assert_eq!(w.count, pts.iter().filter(|p| w.contains(p)).count());
        prop_assert_eq!(w.count, brute_force_window(&pts, side).0);
    }

    #[test]
    fn centroid_lies_in_extent(pts in prop::collection::vec(geo(), 1..50)) {
        let c = centroid(&pts).unwrap();
        let (lo, hi) = pts.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.lat), hi.max(p.lat)));
        prop_assert!(lo - 1e-9 <= c.lat && c.lat <= hi + 1e-9);
    }
}

#[test]
fn single_precision_path() {
    let a = GeoPoint { lat: 0.0_f32, lon: 0.0 };
    let b = GeoPoint { lat: 0.0_f32, lon: 1.0 };
    assert!((haversine(a, b) - 111_194.9).abs() < 20.0);
    let pts: Vec<PlanarPoint<f32>> = (0..10).map(|i| PlanarPoint { x: i as f32, y: 0.0 }).collect();
    assert_eq!(max_coverage_window(&pts, 4.0).unwrap().count, 5);
}
