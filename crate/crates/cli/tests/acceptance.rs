//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL
//! line; the process exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use num_rational::Ratio;
use poi_alias::discovery::{AliasMatrix, Method, MetricConfig};
use poi_alias::distribution::{jaccard_distance, jaccard_overlap, kl_divergence, normalize, BoundingBox, DensityMatrix, Distribution};
use poi_alias::eval::{precision_recall_f1, LabelIndex};
use poi_alias::geo::{max_coverage_window, PlanarPoint};
use poi_alias::ingestion::GroundTruthLabel;
use poi_alias::pipeline::{calibrate_and_evaluate, prepare, resolution_sweep, transfer, PrepareConfig, PreparedDataset};
use poi_alias::preprocess::{cluster_near_duplicates, normalized_edit_distance};
use poi_alias::synth::{generate_city, SynthConfig};
use poi_alias_cli::Cli;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn city(config: &SynthConfig) -> PreparedDataset {
    prepare(&generate_city(config).expect("synthetic city").to_corpus(), &PrepareConfig::default())
}

fn calibrated_f1(ds: &PreparedDataset, config: &MetricConfig) -> f64 {
    calibrate_and_evaluate(ds, config).expect("calibration").1.f1
}

fn reproducibility_statement() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let section = text.split("\n## ").find(|s| s.starts_with("Reproducibility")).ok_or("README has no Reproducibility section")?;
    ensure(
        section.contains("not reproducible") && section.contains("0.564") && section.contains("0.621"),
        "README states which published numbers are not reproduced and what replaces them".into(),
    )
}

fn window_oracle() -> Check {
    fn brute(points: &[PlanarPoint<f64>], side: f64) -> usize {
        let mut best = 0;
        for p in points {
            for q in points {
                let n = points.iter().filter(|r| p.x <= r.x && r.x <= p.x + side && q.y <= r.y && r.y <= q.y + side).count();
                best = best.max(n);
            }
        }
        best
    }
    let mut rng = ChaCha8Rng::seed_from_u64(640);
    for set in 0..100 {
        let n = rng.random_range(1..=200);
        let extent = rng.random_range(100.0..5000.0);
        let pts: Vec<PlanarPoint<f64>> =
            (0..n).map(|_| PlanarPoint { x: rng.random_range(0.0..extent), y: rng.random_range(0.0..extent) }).collect();
        let (got, want) = (max_coverage_window(&pts, 640.0).unwrap().count, brute(&pts, 640.0));
        if got != want {
            return Err(format!("set {set}: sweep {got} vs brute force {want}"));
        }
    }
    let pts: Vec<PlanarPoint<f64>> =
        (0..100_000).map(|_| PlanarPoint { x: rng.random_range(0.0..20_000.0), y: rng.random_range(0.0..20_000.0) }).collect();
    let t = Instant::now();
    max_coverage_window(&pts, 640.0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 2.0, format!("100/100 sets agree; n=100000 sweep {secs:.3}s"))
}

fn divergence_axioms() -> Check {
    let unit = BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap();
    let dist = |m: &[Vec<u64>]| -> Distribution<f64> { normalize(&DensityMatrix::from_dense(m, unit).unwrap()).unwrap() };
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let random = |rng: &mut ChaCha8Rng| {
        let density = rng.random_range(0.01..0.5);
        let mut m: Vec<Vec<u64>> =
            (0..50).map(|_| (0..50).map(|_| if rng.random_bool(density) { rng.random_range(1..20) } else { 0 }).collect()).collect();
        m[rng.random_range(0..50)][rng.random_range(0..50)] += 1;
        dist(&m)
    };
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..1000 {
        let (p, q) = (random(&mut rng), random(&mut rng));
        let kl = kl_divergence(&p, &q, 1e-9).unwrap();
        let self_kl = kl_divergence(&p, &p, 1e-9).unwrap();
        let (d1, d2) = (jaccard_distance(&p, &q).unwrap(), jaccard_distance(&q, &p).unwrap());
        if kl < -1e-12 || self_kl > 1e-12 || (d1 - d2).abs() > 1e-15 || !(0.0..=1.0).contains(&d1) {
            return Err(format!("pair {i}: kl {kl}, kl(p,p) {self_kl}, jaccard {d1} / {d2}"));
        }
        worst = (worst.0.min(kl), worst.1.max(self_kl), worst.2.max((d1 - d2).abs()));
    }
    let p = dist(&[vec![2, 2], vec![0, 0]]);
    let q = dist(&[vec![1, 3], vec![0, 0]]);
    let two_cell = kl_divergence(&p, &q, 1e-9).unwrap();
    let identity = kl_divergence(&p, &p, 1e-9).unwrap();
    let a = dist(&[vec![1, 1, 0], vec![0; 3], vec![0; 3]]);
    let b = dist(&[vec![0, 1, 1], vec![0; 3], vec![0; 3]]);
    let overlap = jaccard_overlap(&a, &b).unwrap();
    let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
    ensure(
        (two_cell - expected).abs() < 1e-6 && (two_cell - 0.14384).abs() < 1e-5 && identity.abs() < 1e-6 && (overlap - 0.5).abs() < 1e-6,
        format!(
            "1000 pairs: min kl {:.2e}, max kl(p,p) {:.2e}, max jaccard asymmetry {:.2e}; two-cell kl {two_cell:.6}, kl(p,p) {identity:.1e}, overlap {overlap:.6}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn table_ordering() -> Check {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let base = SynthConfig { seed: 42, ..SynthConfig::default() };
    if (base.n_districts, base.pois_per_district, base.alias_fraction) != (2, 100, 0.3) {
        return Err("default benchmark is not 2 districts x 100 POIs at 30% aliased".into());
    }
    let scores: Vec<(Method, f64)> = pool.install(|| {
        let ds = city(&base);
        Method::ALL.iter().map(|&m| (m, calibrated_f1(&ds, &MetricConfig::new(m)))).collect()
    });
    let secs = t.elapsed().as_secs_f64();
    let (mut centroid, mut local) = (0.0, 0.0);
    for seed in 0..10 {
        let ds = city(&SynthConfig { seed, ..SynthConfig::default() });
        centroid += calibrated_f1(&ds, &MetricConfig::new(Method::Centroid)) / 10.0;
        local += calibrated_f1(&ds, &MetricConfig::new(Method::LocCent)) / 10.0;
    }
    let listing: Vec<String> = scores.iter().map(|(m, f)| format!("{}={f:.3}", m.cli_name())).collect();
    let geographic_ok = scores.iter().filter(|(m, _)| *m != Method::EditDistance).all(|(_, f)| *f >= 0.7);
    let edit_ok = scores.iter().filter(|(m, _)| *m == Method::EditDistance).all(|(_, f)| *f <= 0.2);
    ensure(
        geographic_ok && edit_ok && local >= centroid && secs < 60.0,
        format!("seed 42: {}; 10-seed mean loccent {local:.3} vs centroid {centroid:.3}; single-thread run {secs:.2}s", listing.join(" ")),
    )
}

fn resolution_shape() -> Check {
    let grids = [20, 50, 150, 300, 500];
    let mut jaccard = [0.0; 5];
    let mut kl = [0.0; 5];
    let mut argmax_mean = 0.0;
    for seed in 0..10 {
        let ds = city(&SynthConfig { seed, min_separation_m: 200.0, ..SynthConfig::default() });
        let j = resolution_sweep(&ds, &MetricConfig::new(Method::Jaccard), Method::Jaccard, &grids).unwrap();
        let k = resolution_sweep(&ds, &MetricConfig::new(Method::KlDiv), Method::KlDiv, &grids).unwrap();
        for i in 0..grids.len() {
            jaccard[i] += j[i].report.f1 / 10.0;
            kl[i] += k[i].report.f1 / 10.0;
        }
        argmax_mean += j.iter().map(|p| p.report.f1).fold(0.0, f64::max) / 10.0;
    }
    let fmt = |v: &[f64; 5]| v.iter().zip(grids).map(|(f, g)| format!("{g}:{f:.3}")).collect::<Vec<_>>().join(" ");
    ensure(
        jaccard[2] >= jaccard[0] && jaccard[4] <= argmax_mean && kl[4] <= kl[1],
        format!("jaccard [{}] argmax {argmax_mean:.3}; kl [{}]", fmt(&jaccard), fmt(&kl)),
    )
}

fn threshold_transfer() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for method in [Method::Centroid, Method::LocCent, Method::KlDiv, Method::Jaccard] {
        let config = MetricConfig::new(method);
        let mut wins = 0;
        let mut gap = 0.0;
        for seed in 0..10 {
            let source = SynthConfig { seed, ..SynthConfig::default() };
            let target = SynthConfig { seed: seed + 1000, away_fraction: 2.0 * source.away_fraction, ..SynthConfig::default() };
            let r = transfer(&city(&source), &city(&target), &config).unwrap();
            if r.target.f1 <= r.target_in_city.f1 {
                wins += 1;
            }
            gap += (r.target_in_city.f1 - r.target.f1) / 10.0;
        }
        ok &= wins >= 8;
        lines.push(format!("{} {wins}/10 (mean gap {gap:.3})", method.cli_name()));
    }
    ensure(ok, lines.join("; "))
}

fn preprocess_reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let word = |rng: &mut ChaCha8Rng| -> String { (0..12).map(|_| rng.random_range(b'a'..=b'z') as char).collect() };
    let mut bases: Vec<String> = Vec::new();
    while bases.len() < 500 {
        let w = word(&mut rng);
        if bases.iter().all(|b| normalized_edit_distance(b, &w) >= 0.75) {
            bases.push(w);
        }
    }
    let mut names: Vec<(String, u64)> = Vec::new();
    for b in &bases {
        names.push((b.clone(), 50));
        let mut variants = BTreeSet::new();
        while variants.len() < 20 {
            let mut chars: Vec<char> = b.chars().collect();
            let pos = rng.random_range(0..chars.len());
            let c = rng.random_range(b'a'..=b'z') as char;
            match rng.random_range(0..3) {
                0 => chars[pos] = c,
                1 => chars.insert(pos, c),
                _ => {
                    chars.remove(pos);
                }
            }
            let v: String = chars.into_iter().collect();
            if v != *b && normalized_edit_distance(&v, b) <= 0.2 {
                variants.insert(v);
            }
        }
        names.extend(variants.into_iter().map(|v| (v, rng.random_range(1..10))));
    }
    let map = cluster_near_duplicates(&names, 0.2);
    let canon: BTreeSet<&str> = map.canonical_names().collect();
    let expected: BTreeSet<&str> = bases.iter().map(String::as_str).collect();
    let mut shuffled = names.clone();
    shuffled.shuffle(&mut rng);
    let same = cluster_near_duplicates(&shuffled, 0.2) == map;
    ensure(
        canon == expected && same,
        format!("{} names -> {} canonicals; permuted input identical: {same}", names.len(), canon.len()),
    )
}

fn f1_arithmetic() -> Check {
    fn oracle(outcomes: &[(bool, bool)]) -> (Option<Ratio<u64>>, Option<Ratio<u64>>, Ratio<u64>) {
        let tp = outcomes.iter().filter(|o| o.0 && o.1).count() as u64;
        let pp = outcomes.iter().filter(|o| o.0).count() as u64;
        let ap = outcomes.iter().filter(|o| o.1).count() as u64;
        let p = (pp > 0).then(|| Ratio::new(tp, pp));
        let r = (ap > 0).then(|| Ratio::new(tp, ap));
        let f1 = match (p, r) {
            (Some(p), Some(r)) if tp > 0 => Ratio::from_integer(2) * p * r / (p + r),
            _ => Ratio::from_integer(0),
        };
        (p, r, f1)
    }
    let label = |s: &str, c: &str, is_alias| GroundTruthLabel { district: "d".into(), standard_name: s.into(), candidate_name: c.into(), is_alias };

    let mut hand = AliasMatrix::new("d", vec!["a".into(), "b".into()], vec!["x".into(), "y".into(), "z".into()]);
    hand.links.extend([(0, 0), (0, 1)]);
    let c = precision_recall_f1(&hand, &LabelIndex::new(&[label("a", "x", true), label("a", "y", false), label("b", "z", true)])).confusion();
    let half = Some(Ratio::new(1, 2));
    if (c.precision_ratio(), c.recall_ratio(), Some(c.f1_ratio())) != (half, half, half) {
        return Err(format!("hand example gave {:?} {:?} {:?}", c.precision_ratio(), c.recall_ratio(), c.f1_ratio()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for instance in 0..500 {
        let (ns, nc) = (rng.random_range(1..6), rng.random_range(1..8));
        let stds: Vec<String> = (0..ns).map(|i| format!("s{i}")).collect();
        let cands: Vec<String> = (0..nc).map(|j| format!("c{j}")).collect();
        let mut m = AliasMatrix::new("d", stds.clone(), cands.clone());
        let (mut labels, mut outcomes) = (Vec::new(), Vec::new());
        for (i, s) in stds.iter().enumerate() {
            for (j, c) in cands.iter().enumerate() {
                let pred = rng.random_bool(0.3);
                if pred {
                    m.links.insert((i, j));
                }
                if rng.random_bool(0.7) {
                    let truth = rng.random_bool(0.3);
                    labels.push(label(s, c, truth));
                    outcomes.push((pred, truth));
                }
            }
        }
        let c = precision_recall_f1(&m, &LabelIndex::new(&labels)).confusion();
        let got = (c.precision_ratio(), c.recall_ratio(), c.f1_ratio());
        if got != oracle(&outcomes) {
            return Err(format!("instance {instance}: {got:?} vs {:?}", oracle(&outcomes)));
        }
    }
    Ok("hand example 1/2, 1/2, 1/2 and 500/500 random instances exact".into())
}

fn end_to_end_determinism() -> Check {
    let run = |args: &[&str]| -> Result<(), String> {
        let cli = Cli::try_parse_from(std::iter::once("poi-alias").chain(args.iter().copied())).map_err(|e| e.to_string())?;
        poi_alias_cli::run(cli).map_err(|e| format!("{e:#}"))
    };
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for attempt in ["a", "b"] {
        let dir = root.path().join(attempt);
        let (data, out) = (dir.join("city"), dir.join("run"));
        let (data, out) = (data.to_str().unwrap(), out.to_str().unwrap());
        run(&["-q", "synth", "--out", data, "--seed", "7"])?;
        run(&["-q", "discover", "--input", data, "--out", out, "--method", "loccent"])?;
        run(&["-q", "evaluate", "--input", data, "--out", out])?;
        reports.push(fs::read(Path::new(out).join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], format!("report.json {} bytes, identical: {}", reports[0].len(), reports[0] == reports[1]))
}

fn main() {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 9] = [
        ("reproducibility statement", reproducibility_statement),
        ("window search oracle and runtime", window_oracle),
        ("divergence axioms", divergence_axioms),
        ("method ordering on default benchmark", table_ordering),
        ("grid resolution shape", resolution_shape),
        ("threshold transfer degradation", threshold_transfer),
        ("preprocess reduction", preprocess_reduction),
        ("F1 arithmetic", f1_arithmetic),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
