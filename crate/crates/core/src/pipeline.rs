//! End-to-end composition: corpus → canonical names → profiles → scored
//! pairs → calibrated links and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discovery::{
    apply_threshold, score_pairs, AliasMatrix, DiscoveryError, Method, MetricConfig, ScoredPair,
};
use crate::eval::{
    calibrate_threshold, cross_city_transfer, district_cross_validation, evaluate_scored, Calibration,
    CrossValReport, EvalError, EvalReport, LabelIndex, SweepPoint, TransferReport,
};
use crate::ingestion::{Corpus, GroundTruthLabel};
use crate::preprocess::{clean_text, cluster_near_duplicates, CanonicalMap, DEFAULT_CLUSTER_THRESHOLD};
use crate::profile::{build_associated_users, build_mobility_profile, AssociatedUserIndex, MobilityProfile};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("discovery: {0}")]
    Discovery(#[from] DiscoveryError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
}

/// Either a fixed threshold or "calibrate on the available labels".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Fixed(f64),
    Calibrate,
}

impl FromStr for ThresholdSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "calibrate" => Ok(ThresholdSpec::Calibrate),
            v => v.parse::<f64>().map(ThresholdSpec::Fixed).map_err(|_| format!("expected a number or `calibrate`, got `{v}`")),
        }
    }
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSpec::Fixed(v) => write!(f, "{v}"),
            ThresholdSpec::Calibrate => f.write_str("calibrate"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub cluster_threshold: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self { cluster_threshold: DEFAULT_CLUSTER_THRESHOLD }
    }
}

/// One district after name canonicalization and profile construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDistrict {
    pub district: String,
    pub canonical: CanonicalMap,
    /// Every raw POI spelling seen in the district → its canonical name.
    pub raw_to_canonical: BTreeMap<String, String>,
    pub index: AssociatedUserIndex,
    pub standards: Vec<MobilityProfile<f64>>,
    pub candidates: Vec<MobilityProfile<f64>>,
}

impl PreparedDistrict {
    pub fn resolve(&self, raw: &str) -> Option<String> {
        self.canonical.resolve(raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    pub districts: Vec<PreparedDistrict>,
    /// Labels with both names mapped to canonical form.
    pub labels: Vec<GroundTruthLabel>,
    pub truth: LabelIndex,
    pub warnings: Vec<String>,
}

impl PreparedDataset {
    pub fn district(&self, name: &str) -> Option<&PreparedDistrict> {
        self.districts.iter().find(|d| d.district == name)
    }
}

/// Canonicalizes names per district, splits them into standards (the
/// registry) and candidates (everything else), and builds all profiles.
///
/// The registry is the corpus's standard-name list; a district without
/// registry entries falls back to the standard names of its labels.
pub fn prepare(corpus: &Corpus, config: &PrepareConfig) -> PreparedDataset {
    let by_district = corpus.partition_by_district();
    let mut warnings = Vec::new();
    let mut districts = Vec::new();

    for district in &corpus.districts {
        let records: Vec<_> = by_district.get(district.as_str()).into_iter().flatten().copied().cloned().collect();
        let mut registry: BTreeSet<String> = corpus
            .standards
            .iter()
            .filter(|s| &s.district == district)
            .map(|s| clean_text(&s.standard_name))
            .collect();
        if registry.is_empty() {
            registry = corpus
                .labels
                .iter()
                .filter(|l| &l.district == district)
                .map(|l| clean_text(&l.standard_name))
                .collect();
        }
        registry.remove("");

        let mut freq: BTreeMap<String, u64> = registry.iter().map(|n| (n.clone(), 0)).collect();
        for r in &records {
            let cleaned = clean_text(&r.poi_name);
            if !cleaned.is_empty() {
                *freq.entry(cleaned).or_default() += 1;
            }
        }
        let names: Vec<(String, u64)> = freq.into_iter().collect();
        let canonical = cluster_near_duplicates(&names, config.cluster_threshold);
        let raw_to_canonical =
            records.iter().filter_map(|r| Some((r.poi_name.clone(), canonical.resolve(&r.poi_name)?))).collect();

        let index = build_associated_users(district, &records, &canonical);
        let standard_names: BTreeSet<String> = registry.iter().map(|n| canonical.canonical(n).to_owned()).collect();
        let profile_of = |name: &str| {
            build_mobility_profile(name, &index, &corpus.locations).unwrap_or_else(|_| MobilityProfile::empty(name))
        };
        let standards = standard_names.iter().map(|n| profile_of(n)).collect();
        let candidates = index.names().filter(|n| !standard_names.contains(*n)).map(profile_of).collect();

        districts.push(PreparedDistrict {
            district: district.clone(),
            canonical,
            raw_to_canonical,
            index,
            standards,
            candidates,
        });
    }

    let labels = canonicalize_labels(&corpus.labels, &districts, &mut warnings);
    let truth = LabelIndex::new(&labels);
    PreparedDataset { districts, labels, truth, warnings }
}

fn canonicalize_labels(
    labels: &[GroundTruthLabel],
    districts: &[PreparedDistrict],
    warnings: &mut Vec<String>,
) -> Vec<GroundTruthLabel> {
    let mut merged: BTreeMap<(String, String, String), bool> = BTreeMap::new();
    for l in labels {
        let resolve = |raw: &str| match districts.iter().find(|d| d.district == l.district) {
            Some(d) => d.resolve(raw),
            None => Some(clean_text(raw)).filter(|s| !s.is_empty()),
        };
        let (Some(s), Some(c)) = (resolve(&l.standard_name), resolve(&l.candidate_name)) else {
            warnings.push(format!("label ({}, {}, {}) has an empty name", l.district, l.standard_name, l.candidate_name));
            continue;
        };
        if s == c {
            warnings.push(format!(
                "label ({}, {}, {}) collapses to a single canonical name `{s}`",
                l.district, l.standard_name, l.candidate_name
            ));
            continue;
        }
        let key = (l.district.clone(), s, c);
        match merged.get(&key) {
            Some(&prev) if prev != l.is_alias => {
                warnings.push(format!("labels disagree on canonical pair ({}, {}, {}); keeping positive", key.0, key.1, key.2));
                merged.insert(key, true);
            }
            Some(_) => {}
            None => {
                merged.insert(key, l.is_alias);
            }
        }
    }
    merged
        .into_iter()
        .map(|((district, standard_name, candidate_name), is_alias)| GroundTruthLabel {
            district,
            standard_name,
            candidate_name,
            is_alias,
        })
        .collect()
}

/// Scored pairs of every district, keyed by district name.
pub type ScoredByDistrict = BTreeMap<String, Vec<ScoredPair>>;

pub fn score_dataset(ds: &PreparedDataset, config: &MetricConfig) -> Result<ScoredByDistrict, DiscoveryError> {
    ds.districts
        .iter()
        .map(|d| Ok((d.district.clone(), score_pairs(&d.district, &d.standards, &d.candidates, config)?)))
        .collect()
}

pub fn flatten(scored: &ScoredByDistrict) -> Vec<ScoredPair> {
    scored.values().flatten().cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    /// Configuration with the threshold actually applied.
    pub config: MetricConfig,
    pub calibration: Option<Calibration>,
    pub matrices: Vec<AliasMatrix>,
    pub scored: Vec<ScoredPair>,
}

/// Scores every district and applies a fixed or calibrated threshold.
pub fn discover(ds: &PreparedDataset, config: &MetricConfig, threshold: ThresholdSpec) -> Result<Discovery, PipelineError> {
    let by_district = score_dataset(ds, config)?;
    let mut scored = flatten(&by_district);
    let (threshold, calibration) = match threshold {
        ThresholdSpec::Fixed(t) => (t, None),
        ThresholdSpec::Calibrate => {
            let c = calibrate_threshold(&scored, &ds.truth)?;
            (c.threshold, Some(c))
        }
    };
    apply_threshold(&mut scored, threshold);
    let matrices = ds
        .districts
        .iter()
        .map(|d| {
            let pairs: Vec<ScoredPair> = scored.iter().filter(|p| p.district == d.district).cloned().collect();
            AliasMatrix::from_scored(
                d.district.clone(),
                d.standards.iter().map(|p| p.name.clone()).collect(),
                d.candidates.iter().map(|p| p.name.clone()).collect(),
                &pairs,
            )
        })
        .collect();
    Ok(Discovery { config: config.clone().with_threshold(threshold), calibration, matrices, scored })
}

/// Calibrates on all labels and evaluates in-sample.
pub fn calibrate_and_evaluate(ds: &PreparedDataset, config: &MetricConfig) -> Result<(Calibration, EvalReport), PipelineError> {
    let scored = flatten(&score_dataset(ds, config)?);
    let calibration = calibrate_threshold(&scored, &ds.truth)?;
    let report = evaluate_scored(&scored, &ds.truth, calibration.threshold)
        .with_config(&config.clone().with_threshold(calibration.threshold));
    Ok((calibration, report))
}

pub fn cross_validate(ds: &PreparedDataset, config: &MetricConfig, train_frac: f64) -> Result<CrossValReport, PipelineError> {
    let scored = score_dataset(ds, config)?;
    Ok(district_cross_validation(&scored, &ds.truth, train_frac)?)
}

pub fn transfer(source: &PreparedDataset, target: &PreparedDataset, config: &MetricConfig) -> Result<TransferReport, PipelineError> {
    let s = flatten(&score_dataset(source, config)?);
    let t = flatten(&score_dataset(target, config)?);
    Ok(cross_city_transfer(&s, &source.truth, &t, &target.truth)?)
}

/// One calibrate-and-evaluate cycle per grid resolution.
pub fn resolution_sweep(
    ds: &PreparedDataset,
    config: &MetricConfig,
    method: Method,
    grids: &[usize],
) -> Result<Vec<SweepPoint>, PipelineError> {
    grids
        .iter()
        .map(|&grid_n| {
            let cfg = MetricConfig { method, grid_n, ..config.clone() };
            let (calibration, report) = calibrate_and_evaluate(ds, &cfg)?;
            Ok(SweepPoint { grid_n, method, calibration, report })
        })
        .collect()
}
