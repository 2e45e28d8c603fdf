use std::collections::BTreeSet;

use poi_alias::discovery::{
    apply_threshold, decide, score_pairs, similarity_distance_based, similarity_distribution_based, Decision,
    Divergence, Estimator, Method, MetricConfig, ScoredPair,
};
use poi_alias::distribution::BoundingBox;
use poi_alias::geo::{haversine, GeoPoint, LocalProjection, PlanarPoint};
use poi_alias::pipeline::{discover, prepare, PrepareConfig, ThresholdSpec};
use poi_alias::preprocess::clean_text;
use poi_alias::profile::MobilityProfile;
use poi_alias::synth::{generate_city, SynthConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORIGIN: GeoPoint<f64> = GeoPoint { lat: 31.3, lon: 120.57 };

fn profile(name: &str, pts: Vec<GeoPoint<f64>>) -> MobilityProfile<f64> {
    MobilityProfile::new(name, pts, 1)
}

/// Points symmetric about `(cx, cy)` meters from the origin, so the planar
/// centroid sits exactly on the center.
fn symmetric_cloud(cx: f64, cy: f64, rng: &mut ChaCha8Rng) -> Vec<GeoPoint<f64>> {
    let proj = LocalProjection::new(ORIGIN);
    let mut pts = Vec::new();
    for _ in 0..50 {
        let (dx, dy) = (rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0));
        pts.push(proj.unproject(PlanarPoint { x: cx + dx, y: cy + dy }));
        pts.push(proj.unproject(PlanarPoint { x: cx - dx, y: cy - dy }));
    }
    pts
}

#[test]
fn centroid_similarity_tracks_analytic_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let proj = LocalProjection::new(ORIGIN);
    let a = profile("a", symmetric_cloud(0.0, 0.0, &mut rng));
    let b = profile("b", symmetric_cloud(1200.0, 1600.0, &mut rng));
    let analytic = haversine(proj.unproject(PlanarPoint { x: 0.0, y: 0.0 }), proj.unproject(PlanarPoint { x: 1200.0, y: 1600.0 }));
    assert!((analytic - 2000.0).abs() < 5.0);
    let k = similarity_distance_based(&a, &b, Estimator::Overall, 640.0, 5).unwrap();
    assert!((k - 1.0 / analytic).abs() / (1.0 / analytic) < 0.05);
    let same = similarity_distance_based(&a, &a, Estimator::Local, 640.0, 5).unwrap();
    assert_eq!(same, 1.0);
}

#[test]
fn distribution_similarity_examples() {
    let bbox = BoundingBox::new(0.0, 3.0, 0.0, 3.0).unwrap();
    let at = |cells: &[(f64, f64)]| cells.iter().map(|&(lat, lon)| GeoPoint { lat, lon }).collect::<Vec<_>>();
    let a = profile("a", at(&[(0.5, 0.5), (0.5, 1.5)]));
    let b = profile("b", at(&[(0.5, 1.5), (0.5, 2.5)]));
    let c = profile("c", at(&[(2.5, 2.5)]));
    let jac = |x: &MobilityProfile<f64>, y: &MobilityProfile<f64>| {
        similarity_distribution_based(x, y, Divergence::Jaccard, bbox, 3, 1e-9, 1).unwrap()
    };
    assert!((jac(&a, &b) - 2.0).abs() < 1e-9);
    assert_eq!(jac(&a, &b), jac(&b, &a));
    assert!((jac(&a, &a) - 1e9).abs() < 1e-3);
    assert_eq!(jac(&a, &c), 1.0);
}

#[test]
fn insufficient_profiles_never_link() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let full = profile("full", symmetric_cloud(0.0, 0.0, &mut rng));
    let thin = profile("thin", full.points[..3].to_vec());
    let config = MetricConfig::new(Method::Jaccard).with_threshold(f64::NEG_INFINITY);
    let scored = score_pairs("d", std::slice::from_ref(&full), &[thin, full.clone()], &config);
    let scored = scored.unwrap();
    assert_eq!(scored[0].decision, Decision::Insufficient);
    assert_eq!(scored[0].score, None);
    assert_eq!(scored[1].decision, Decision::Alias);
}

#[test]
fn threshold_boundary_is_strict() {
    assert_eq!(decide(Some(0.004), 0.002), Decision::Alias);
    assert_eq!(decide(Some(0.002), 0.002), Decision::NotAlias);
    assert_eq!(decide(None, f64::NEG_INFINITY), Decision::Insufficient);
}

#[test]
fn scoring_is_exhaustive_and_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let standards: Vec<_> = (0..4).map(|i| profile(&format!("s{i}"), symmetric_cloud(i as f64 * 300.0, 0.0, &mut rng))).collect();
    let candidates: Vec<_> = (0..3).map(|i| profile(&format!("c{i}"), symmetric_cloud(0.0, i as f64 * 300.0, &mut rng))).collect();
    for method in Method::ALL {
        let scored = score_pairs("d", &standards, &candidates, &MetricConfig::new(method)).unwrap();
        assert_eq!(scored.len(), 12);
        let order: Vec<_> = scored.iter().map(|p| (p.standard_index, p.candidate_index)).collect();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(order, sorted);
    }
}

#[test]
fn planted_links_recovered_under_jaccard() {
    let city = generate_city(&SynthConfig::default()).unwrap();
    let ds = prepare(&city.to_corpus(), &PrepareConfig::default());
    let found = discover(&ds, &MetricConfig::new(Method::Jaccard), ThresholdSpec::Calibrate).unwrap();
    let planted: BTreeSet<(String, String, String)> = city
        .meta
        .districts
        .iter()
        .flat_map(|d| {
            d.pois.iter().flat_map(move |p| {
                p.aliases.iter().map(move |a| (d.name.clone(), clean_text(&p.standard_name), clean_text(a)))
            })
        })
        .collect();
    let linked: BTreeSet<(String, String, String)> = found
        .scored
        .iter()
        .filter(|p| p.decision == Decision::Alias)
        .map(|p| (p.district.clone(), p.standard_name.clone(), p.candidate_name.clone()))
        .collect();
    let hits = linked.intersection(&planted).count();
    assert!(hits as f64 >= 0.9 * planted.len() as f64, "{hits}/{}", planted.len());
    assert!((linked.len() - hits) as f64 <= 0.1 * linked.len() as f64);
}

fn pairs(scores: &[f64]) -> Vec<ScoredPair> {
    scores
        .iter()
        .enumerate()
        .map(|(j, &s)| ScoredPair {
            district: "d".into(),
            standard_index: 0,
            candidate_index: j,
            standard_name: "s".into(),
            candidate_name: format!("c{j}"),
            score: Some(s),
            decision: Decision::NotAlias,
        })
        .collect()
}

fn links(scored: &[ScoredPair]) -> BTreeSet<usize> {
    scored.iter().filter(|p| p.decision == Decision::Alias).map(|p| p.candidate_index).collect()
}

proptest! {
    #[test]
    fn raising_threshold_never_adds_links(scores in prop::collection::vec(0.0..10.0f64, 0..40), t1 in 0.0..10.0f64, dt in 0.0..5.0f64) {
        let mut a = pairs(&scores);
        let mut b = a.clone();
        apply_threshold(&mut a, t1);
        apply_threshold(&mut b, t1 + dt);
        prop_assert!(links(&b).is_subset(&links(&a)));
    }

    #[test]
    fn scaling_scores_and_threshold_keeps_links(scores in prop::collection::vec(1e-6..1e3f64, 0..40), t in 1e-6..1e3f64, c in 0.01..100.0f64) {
        let mut a = pairs(&scores);
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        let mut b = pairs(&scaled);
        apply_threshold(&mut a, t);
        apply_threshold(&mut b, t * c);
        // Products may round across the boundary; only exact ties can flip.
        let flips: Vec<_> = links(&a).symmetric_difference(&links(&b)).copied().collect();
        for j in flips {
            prop_assert!((scores[j] - t).abs() <= 1e-12 * t);
        }
    }

    #[test]
    fn jaccard_similarity_is_symmetric(
        a in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..30),
        b in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..30),
    ) {
        let bbox = BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let mk = |v: &[(f64, f64)]| profile("x", v.iter().map(|&(lat, lon)| GeoPoint { lat, lon }).collect());
        let (pa, pb) = (mk(&a), mk(&b));
        let ab = similarity_distribution_based(&pa, &pb, Divergence::Jaccard, bbox, 10, 1e-9, 1).unwrap();
        let ba = similarity_distribution_based(&pb, &pa, Divergence::Jaccard, bbox, 10, 1e-9, 1).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 1.0);
    }
}
