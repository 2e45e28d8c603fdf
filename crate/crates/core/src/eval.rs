//! Scoring inferred links against ground truth, threshold calibration,
//! district cross-validation, cross-city transfer, and the edit-distance
//! baseline.
//!
//! Only labeled pairs are scored: a predicted link on an unlabeled pair is
//! neither a true nor a false positive. With exhaustive labels this is the
//! plain matrix form of precision and recall.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discovery::{decide, AliasMatrix, Decision, Method, MetricConfig, ScoredPair};
use crate::ingestion::GroundTruthLabel;
use crate::preprocess::normalized_edit_distance;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no positive labels among the scored pairs")]
    NoPositiveLabels,
    #[error("cross-validation needs at least 2 labeled districts, found {0}")]
    TooFewDistricts(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidTrainFraction(f64),
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<EvalError> },
}

/// Ground-truth lookup keyed by `(district, standard, candidate)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelIndex {
    labels: HashMap<(String, String, String), bool>,
    positives: BTreeMap<String, u64>,
}

impl LabelIndex {
    pub fn new(labels: &[GroundTruthLabel]) -> Self {
        let mut index = Self::default();
        for l in labels {
            let key = (l.district.clone(), l.standard_name.clone(), l.candidate_name.clone());
            if index.labels.insert(key, l.is_alias).is_none() {
                index.positives.entry(l.district.clone()).or_default();
            }
        }
        for ((d, _, _), &is_alias) in &index.labels {
            if is_alias {
                *index.positives.get_mut(d).expect("district registered") += 1;
            }
        }
        index
    }

    pub fn get(&self, district: &str, standard: &str, candidate: &str) -> Option<bool> {
        self.labels.get(&(district.to_owned(), standard.to_owned(), candidate.to_owned())).copied()
    }

    pub fn positives_in(&self, district: &str) -> u64 {
        self.positives.get(district).copied().unwrap_or(0)
    }

    pub fn total_positives(&self) -> u64 {
        self.positives.values().sum()
    }

    /// Districts with at least one label, in name order.
    pub fn districts(&self) -> impl Iterator<Item = &str> {
        self.positives.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sub-index holding only the labels of `districts`.
    pub fn restrict<'a>(&self, districts: impl IntoIterator<Item = &'a str>) -> Self {
        let keep: BTreeSet<&str> = districts.into_iter().collect();
        let labels: HashMap<_, _> =
            self.labels.iter().filter(|((d, _, _), _)| keep.contains(d.as_str())).map(|(k, &v)| (k.clone(), v)).collect();
        let positives =
            self.positives.iter().filter(|(d, _)| keep.contains(d.as_str())).map(|(d, &n)| (d.clone(), n)).collect();
        Self { labels, positives }
    }
}

/// Confusion counts restricted to labeled pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: u64,
    pub predicted_positive: u64,
    pub actual_positive: u64,
}

impl Confusion {
    pub fn new(true_positive: u64, predicted_positive: u64, actual_positive: u64) -> Self {
        Self { true_positive, predicted_positive, actual_positive }
    }

    /// `tp / pp`, or `None` when nothing was predicted.
    pub fn precision_ratio(&self) -> Option<Ratio<u64>> {
        (self.predicted_positive > 0).then(|| Ratio::new(self.true_positive, self.predicted_positive))
    }

    /// `tp / ap`, or `None` when there are no positives.
    pub fn recall_ratio(&self) -> Option<Ratio<u64>> {
        (self.actual_positive > 0).then(|| Ratio::new(self.true_positive, self.actual_positive))
    }

    /// `2PR / (P + R)`, which on counts is `2 tp / (pp + ap)`; zero when
    /// `P + R = 0`.
    pub fn f1_ratio(&self) -> Ratio<u64> {
        let denom = self.predicted_positive + self.actual_positive;
        if self.true_positive == 0 || denom == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(2 * self.true_positive, denom)
        }
    }

    pub fn precision(&self) -> f64 {
        self.precision_ratio().map_or(0.0, ratio_to_f64)
    }

    pub fn recall(&self) -> f64 {
        self.recall_ratio().map_or(0.0, ratio_to_f64)
    }

    pub fn f1(&self) -> f64 {
        ratio_to_f64(self.f1_ratio())
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;
    fn add(self, o: Confusion) -> Confusion {
        Confusion::new(
            self.true_positive + o.true_positive,
            self.predicted_positive + o.predicted_positive,
            self.actual_positive + o.actual_positive,
        )
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictScore {
    #[serde(flatten)]
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Confusion> for DistrictScore {
    fn from(c: Confusion) -> Self {
        Self { counts: c, precision: c.precision(), recall: c.recall(), f1: c.f1() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positive: u64,
    pub predicted_positive: u64,
    pub actual_positive: u64,
    /// Set when nothing was predicted and precision is reported as 0.
    pub precision_undefined: bool,
    /// Set when there are no positive labels and recall is reported as 0.
    pub recall_undefined: bool,
    pub per_district: BTreeMap<String, DistrictScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none", with = "crate::serde_util::opt_threshold")]
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<MetricConfig>,
}

impl EvalReport {
    pub fn from_districts(per_district: BTreeMap<String, Confusion>) -> Self {
        let total = per_district.values().fold(Confusion::default(), |a, &b| a + b);
        Self {
            precision: total.precision(),
            recall: total.recall(),
            f1: total.f1(),
            true_positive: total.true_positive,
            predicted_positive: total.predicted_positive,
            actual_positive: total.actual_positive,
            precision_undefined: total.predicted_positive == 0,
            recall_undefined: total.actual_positive == 0,
            per_district: per_district.into_iter().map(|(d, c)| (d, c.into())).collect(),
            method: None,
            threshold: None,
            config: None,
        }
    }

    pub fn confusion(&self) -> Confusion {
        Confusion::new(self.true_positive, self.predicted_positive, self.actual_positive)
    }

    pub fn with_config(mut self, config: &MetricConfig) -> Self {
        self.method = Some(config.method);
        self.threshold = Some(config.threshold);
        self.config = Some(config.clone());
        self
    }
}

fn matrix_confusion(m: &AliasMatrix, truth: &LabelIndex) -> Confusion {
    let mut c = Confusion { actual_positive: truth.positives_in(&m.district), ..Confusion::default() };
    for (s, cand) in m.linked_names() {
        match truth.get(&m.district, s, cand) {
            Some(true) => {
                c.true_positive += 1;
                c.predicted_positive += 1;
            }
            Some(false) => c.predicted_positive += 1,
            None => {}
        }
    }
    c
}

/// Precision, recall and F1 of one district's inferred matrix.
pub fn precision_recall_f1(inferred: &AliasMatrix, truth: &LabelIndex) -> EvalReport {
    EvalReport::from_districts(BTreeMap::from([(inferred.district.clone(), matrix_confusion(inferred, truth))]))
}

/// Pooled evaluation over several districts' matrices, plus every labeled
/// district of `truth` that has no matrix (all its positives are missed).
pub fn evaluate_matrices(inferred: &[AliasMatrix], truth: &LabelIndex) -> EvalReport {
    let mut per: BTreeMap<String, Confusion> =
        truth.districts().map(|d| (d.to_owned(), Confusion::new(0, 0, truth.positives_in(d)))).collect();
    for m in inferred {
        per.insert(m.district.clone(), matrix_confusion(m, truth));
    }
    EvalReport::from_districts(per)
}

/// Evaluates scored pairs under `threshold`. Every labeled district of
/// `truth` is reported, whether or not it has scored pairs.
pub fn evaluate_scored(scored: &[ScoredPair], truth: &LabelIndex, threshold: f64) -> EvalReport {
    let mut per: BTreeMap<String, Confusion> =
        truth.districts().map(|d| (d.to_owned(), Confusion::new(0, 0, truth.positives_in(d)))).collect();
    for p in scored {
        if decide(p.score, threshold) != Decision::Alias {
            continue;
        }
        if let Some(is_alias) = truth.get(&p.district, &p.standard_name, &p.candidate_name) {
            let c = per.entry(p.district.clone()).or_default();
            c.predicted_positive += 1;
            c.true_positive += u64::from(is_alias);
        }
    }
    let mut report = EvalReport::from_districts(per);
    report.threshold = Some(threshold);
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(with = "crate::serde_util::threshold")]
    pub threshold: f64,
    pub f1: f64,
    pub counts: Confusion,
}

/// Picks the threshold maximizing F1 over the labeled scored pairs.
///
/// Candidates are `+inf`, the midpoints between consecutive distinct scores,
/// and `-inf`; F1 is constant between distinct scores so nothing else can do
/// better. Ties go to the largest threshold. All positive labels in `truth`
/// count as actual positives, including those whose pair was never scored.
pub fn calibrate_threshold(scored: &[ScoredPair], truth: &LabelIndex) -> Result<Calibration, EvalError> {
    let mut labeled: Vec<(f64, bool)> = scored
        .iter()
        .filter_map(|p| Some((p.score?, truth.get(&p.district, &p.standard_name, &p.candidate_name)?)))
        .collect();
    if !labeled.iter().any(|&(_, pos)| pos) {
        return Err(EvalError::NoPositiveLabels);
    }
    labeled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let actual = truth.total_positives();

    let mut counts = Confusion::new(0, 0, actual);
    let mut best = Calibration { threshold: f64::INFINITY, f1: 0.0, counts };
    let mut best_ratio = counts.f1_ratio();
    let mut i = 0;
    while i < labeled.len() {
        let score = labeled[i].0;
        while i < labeled.len() && labeled[i].0 == score {
            counts.predicted_positive += 1;
            counts.true_positive += u64::from(labeled[i].1);
            i += 1;
        }
        let threshold = match labeled.get(i) {
            Some(&(next, _)) => split_point(score, next),
            None => f64::NEG_INFINITY,
        };
        let ratio = counts.f1_ratio();
        if ratio > best_ratio {
            best_ratio = ratio;
            best = Calibration { threshold, f1: counts.f1(), counts };
        }
    }
    Ok(best)
}

/// A threshold strictly between `hi` and `lo` when one exists, otherwise
/// `lo` itself (so that `score > threshold` still separates them).
fn split_point(hi: f64, lo: f64) -> f64 {
    let mid = hi / 2.0 + lo / 2.0;
    if mid > lo && mid < hi {
        mid
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Splits districts into folds: `⌈train_frac · k⌉` train districts (at most
/// `k − 1`), the rest test, with districts sorted by name and dealt
/// round-robin so each is tested exactly once.
pub fn district_folds(districts: &[String], train_frac: f64) -> Result<Vec<Fold>, EvalError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(EvalError::InvalidTrainFraction(train_frac));
    }
    let mut sorted: Vec<String> = districts.to_vec();
    sorted.sort();
    sorted.dedup();
    let k = sorted.len();
    if k < 2 {
        return Err(EvalError::TooFewDistricts(k));
    }
    let n_train = ((train_frac * k as f64).ceil() as usize).clamp(1, k - 1);
    let n_test = k - n_train;
    let n_folds = k.div_ceil(n_test);
    let mut tests = vec![Vec::new(); n_folds];
    for (i, d) in sorted.iter().enumerate() {
        tests[i % n_folds].push(d.clone());
    }
    Ok(tests
        .into_iter()
        .map(|test| Fold { train: sorted.iter().filter(|d| !test.contains(d)).cloned().collect(), test })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_districts: Vec<String>,
    pub test_districts: Vec<String>,
    pub calibration: Calibration,
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldReport>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub mean_train_f1: f64,
    /// Test-fold counts pooled over all folds.
    pub pooled: EvalReport,
}

/// Calibrates on each fold's train districts and evaluates the unchanged
/// threshold on its test districts.
pub fn district_cross_validation(
    scored: &BTreeMap<String, Vec<ScoredPair>>,
    truth: &LabelIndex,
    train_frac: f64,
) -> Result<CrossValReport, EvalError> {
    let labeled: Vec<String> = truth.districts().map(str::to_owned).collect();
    let folds = district_folds(&labeled, train_frac)?;
    let gather = |ds: &[String]| -> Vec<ScoredPair> {
        ds.iter().flat_map(|d| scored.get(d).into_iter().flatten().cloned()).collect()
    };

    let mut reports = Vec::with_capacity(folds.len());
    let mut pooled: BTreeMap<String, Confusion> = BTreeMap::new();
    for (i, fold) in folds.into_iter().enumerate() {
        let train_truth = truth.restrict(fold.train.iter().map(String::as_str));
        let test_truth = truth.restrict(fold.test.iter().map(String::as_str));
        let train_pairs = gather(&fold.train);
        let calibration = calibrate_threshold(&train_pairs, &train_truth)
            .map_err(|e| EvalError::Fold { fold: i, source: Box::new(e) })?;
        let train = evaluate_scored(&train_pairs, &train_truth, calibration.threshold);
        let test = evaluate_scored(&gather(&fold.test), &test_truth, calibration.threshold);
        for (d, s) in &test.per_district {
            pooled.insert(d.clone(), s.counts);
        }
        reports.push(FoldReport {
            fold: i,
            train_districts: fold.train,
            test_districts: fold.test,
            calibration,
            train,
            test,
        });
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&FoldReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(CrossValReport {
        mean_precision: mean(|r| r.test.precision),
        mean_recall: mean(|r| r.test.recall),
        mean_f1: mean(|r| r.test.f1),
        mean_train_f1: mean(|r| r.train.f1),
        pooled: EvalReport::from_districts(pooled),
        folds: reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Threshold calibrated on all source labels.
    pub calibration: Calibration,
    pub source: EvalReport,
    /// Target evaluated under the source threshold.
    pub target: EvalReport,
    /// Target evaluated under its own calibrated threshold, for comparison.
    pub target_in_city: EvalReport,
}

pub fn cross_city_transfer(
    source_scored: &[ScoredPair],
    source_truth: &LabelIndex,
    target_scored: &[ScoredPair],
    target_truth: &LabelIndex,
) -> Result<TransferReport, EvalError> {
    let calibration = calibrate_threshold(source_scored, source_truth)?;
    let source = evaluate_scored(source_scored, source_truth, calibration.threshold);
    let target = evaluate_scored(target_scored, target_truth, calibration.threshold);
    let own = calibrate_threshold(target_scored, target_truth)?;
    let target_in_city = evaluate_scored(target_scored, target_truth, own.threshold);
    Ok(TransferReport { calibration, source, target, target_in_city })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub grid_n: usize,
    pub method: Method,
    pub calibration: Calibration,
    pub report: EvalReport,
}

/// `grid_n,method,precision,recall,f1` table of a resolution sweep.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("grid_n,method,precision,recall,f1\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            p.grid_n, p.method, p.report.precision, p.report.recall, p.report.f1
        ));
    }
    out
}

/// Text-only baseline: link iff the normalized edit distance between the
/// names is strictly below `max_distance`.
pub fn edit_distance_baseline(district: &str, standards: &[String], candidates: &[String], max_distance: f64) -> AliasMatrix {
    let mut m = AliasMatrix::new(district, standards.to_vec(), candidates.to_vec());
    for (i, s) in standards.iter().enumerate() {
        for (j, c) in candidates.iter().enumerate() {
            if normalized_edit_distance(s, c) < max_distance {
                m.links.insert((i, j));
            }
        }
    }
    m
}
