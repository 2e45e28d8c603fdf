//! Pairwise similarity scoring of mobility profiles and the threshold rule
//! producing the inferred alias matrix.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{
    jaccard_distance, kl_divergence, normalize, rasterize, BoundingBox, Distribution, DistributionError,
    BBOX_PAD_FRACTION, DEFAULT_GRID_N, DEFAULT_KL_EPSILON,
};
use crate::geo::{centroid, haversine, local_region_centroid, GeoError, GeoPoint, DEFAULT_LOCAL_WINDOW_M};
use crate::preprocess::normalized_edit_distance;
use crate::profile::{MobilityProfile, DEFAULT_MIN_PROFILE_POINTS};
use crate::scalar::Scalar;

/// Geolocation distances are clamped below at one meter.
pub const DISTANCE_FLOOR_M: f64 = 1.0;
/// Divergences are clamped below at this value.
pub const DIVERGENCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DiscoveryError {
    #[error("profile `{name}` has {points} points, fewer than the required {required}")]
    InsufficientProfile { name: String, points: usize, required: usize },
    #[error("duplicate name `{0}` in profile list")]
    DuplicateName(String),
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Inverse distance between overall centroids.
    Centroid,
    /// Inverse distance between local-region centroids.
    LocCent,
    /// Inverse KL divergence between rasterized distributions.
    KlDiv,
    /// Inverse Jaccard distance between rasterized distributions.
    Jaccard,
    /// Text-only baseline: one minus normalized edit distance of the names.
    EditDistance,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Centroid, Method::LocCent, Method::KlDiv, Method::Jaccard, Method::EditDistance];

    pub fn cli_name(self) -> &'static str {
        match self {
            Method::Centroid => "centroid",
            Method::LocCent => "loccent",
            Method::KlDiv => "kl",
            Method::Jaccard => "jaccard",
            Method::EditDistance => "editdist",
        }
    }

    pub fn uses_profiles(self) -> bool {
        self != Method::EditDistance
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "centroid" => Ok(Method::Centroid),
            "loccent" | "loc_cent" => Ok(Method::LocCent),
            "kl" | "kl_div" | "kldiv" => Ok(Method::KlDiv),
            "jaccard" => Ok(Method::Jaccard),
            "editdist" | "edit_distance" => Ok(Method::EditDistance),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Overall,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    Kl,
    Jaccard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub method: Method,
    /// Links require `score > threshold`. `±inf` are the predict-none /
    /// predict-all sentinels produced by calibration.
    #[serde(with = "crate::serde_util::threshold")]
    pub threshold: f64,
    pub local_window_m: f64,
    pub grid_n: usize,
    pub kl_epsilon: f64,
    pub min_profile_points: usize,
}

impl MetricConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            threshold: 0.0,
            local_window_m: DEFAULT_LOCAL_WINDOW_M,
            grid_n: DEFAULT_GRID_N,
            kl_epsilon: DEFAULT_KL_EPSILON,
            min_profile_points: DEFAULT_MIN_PROFILE_POINTS,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), DiscoveryError> {
        let bad = |msg: &str| Err(DiscoveryError::InvalidConfig(msg.to_owned()));
        if self.threshold.is_nan() {
            return bad("threshold is NaN");
        }
        match self.method {
            Method::LocCent if !(self.local_window_m.is_finite() && self.local_window_m > 0.0) => {
                bad("local_window_m must be positive")
            }
            Method::KlDiv | Method::Jaccard if self.grid_n == 0 => bad("grid_n must be at least 1"),
            Method::KlDiv if !(self.kl_epsilon.is_finite() && self.kl_epsilon > 0.0) => bad("kl_epsilon must be positive"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Alias,
    NotAlias,
    Insufficient,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Alias => "alias",
            Decision::NotAlias => "not_alias",
            Decision::Insufficient => "insufficient",
        }
    }
}

impl FromStr for Decision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alias" => Ok(Decision::Alias),
            "not_alias" => Ok(Decision::NotAlias),
            "insufficient" => Ok(Decision::Insufficient),
            other => Err(format!("unknown decision `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub district: String,
    pub standard_index: usize,
    pub candidate_index: usize,
    pub standard_name: String,
    pub candidate_name: String,
    /// `None` when either profile is insufficient.
    pub score: Option<f64>,
    pub decision: Decision,
}

/// The threshold rule: link iff `score > threshold`.
pub fn decide(score: Option<f64>, threshold: f64) -> Decision {
    match score {
        None => Decision::Insufficient,
        Some(s) if s > threshold => Decision::Alias,
        Some(_) => Decision::NotAlias,
    }
}

/// Re-applies the threshold rule to already scored pairs.
pub fn apply_threshold(scored: &mut [ScoredPair], threshold: f64) {
    for p in scored {
        p.decision = decide(p.score, threshold);
    }
}

/// Sparse boolean matrix of inferred links for one district.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasMatrix {
    pub district: String,
    pub standard_names: Vec<String>,
    pub candidate_names: Vec<String>,
    pub links: BTreeSet<(usize, usize)>,
}

impl AliasMatrix {
    pub fn new(district: impl Into<String>, standard_names: Vec<String>, candidate_names: Vec<String>) -> Self {
        Self { district: district.into(), standard_names, candidate_names, links: BTreeSet::new() }
    }

    /// Builds the matrix from the pairs whose decision is [`Decision::Alias`].
    pub fn from_scored(
        district: impl Into<String>,
        standard_names: Vec<String>,
        candidate_names: Vec<String>,
        scored: &[ScoredPair],
    ) -> Self {
        let mut m = Self::new(district, standard_names, candidate_names);
        m.links = scored
            .iter()
            .filter(|p| p.decision == Decision::Alias)
            .map(|p| (p.standard_index, p.candidate_index))
            .collect();
        m
    }

    pub fn is_linked(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    /// Links as `(standard_name, candidate_name)`.
    pub fn linked_names(&self) -> impl Iterator<Item = (&str, &str)> {
        self.links
            .iter()
            .map(|&(i, j)| (self.standard_names[i].as_str(), self.candidate_names[j].as_str()))
    }
}

fn require_sufficient<T: Scalar>(p: &MobilityProfile<T>, min_points: usize) -> Result<(), DiscoveryError> {
    if p.is_sufficient(min_points) {
        Ok(())
    } else {
        Err(DiscoveryError::InsufficientProfile {
            name: p.name.clone(),
            points: p.point_count,
            required: min_points.max(1),
        })
    }
}

fn estimate_location<T: Scalar>(p: &MobilityProfile<T>, estimator: Estimator, side_m: T) -> Result<GeoPoint<T>, GeoError> {
    match estimator {
        Estimator::Overall => centroid(&p.points),
        Estimator::Local => local_region_centroid(&p.points, side_m),
    }
}

fn inverse_distance<T: Scalar>(a: GeoPoint<T>, b: GeoPoint<T>) -> T {
    T::one() / haversine(a, b).max(T::lit(DISTANCE_FLOOR_M))
}

fn inverse_divergence<T: Scalar>(delta: T) -> T {
    T::one() / delta.max(T::lit(DIVERGENCE_FLOOR))
}

/// `1 / max(GeoDis(ψ(ci), ψ(cj)), 1 m)`, where `ψ` is the overall or the
/// local-region centroid.
pub fn similarity_distance_based<T: Scalar>(
    ci: &MobilityProfile<T>,
    cj: &MobilityProfile<T>,
    estimator: Estimator,
    local_window_m: T,
    min_points: usize,
) -> Result<T, DiscoveryError> {
    require_sufficient(ci, min_points)?;
    require_sufficient(cj, min_points)?;
    let a = estimate_location(ci, estimator, local_window_m)?;
    let b = estimate_location(cj, estimator, local_window_m)?;
    Ok(inverse_distance(a, b))
}

fn profile_distribution<T: Scalar>(
    p: &MobilityProfile<T>,
    bbox: BoundingBox<T>,
    n_grid: usize,
) -> Result<Distribution<T>, DistributionError> {
    normalize(&rasterize(&p.points, bbox, n_grid)?)
}

fn divergence_of<T: Scalar>(p: &Distribution<T>, q: &Distribution<T>, divergence: Divergence, epsilon: T) -> Result<T, DistributionError> {
    match divergence {
        Divergence::Kl => kl_divergence(p, q, epsilon),
        Divergence::Jaccard => jaccard_distance(p, q),
    }
}

/// `1 / max(δ(P_i, P_j), 1e-9)` over the distributions rasterized on `bbox`.
#[allow(clippy::too_many_arguments)]
pub fn similarity_distribution_based<T: Scalar>(
    ci: &MobilityProfile<T>,
    cj: &MobilityProfile<T>,
    divergence: Divergence,
    bbox: BoundingBox<T>,
    n_grid: usize,
    epsilon: T,
    min_points: usize,
) -> Result<T, DiscoveryError> {
    require_sufficient(ci, min_points)?;
    require_sufficient(cj, min_points)?;
    let p = profile_distribution(ci, bbox, n_grid)?;
    let q = profile_distribution(cj, bbox, n_grid)?;
    Ok(inverse_divergence(divergence_of(&p, &q, divergence, epsilon)?))
}

/// Per-profile quantity that pair scores are computed from.
enum Feature<T> {
    Location(GeoPoint<T>),
    Distribution(Distribution<T>),
    Name,
    Insufficient,
}

fn featurize<T: Scalar>(
    p: &MobilityProfile<T>,
    config: &MetricConfig,
    bbox: Option<BoundingBox<T>>,
) -> Result<Feature<T>, DiscoveryError> {
    if config.method == Method::EditDistance {
        return Ok(Feature::Name);
    }
    if !p.is_sufficient(config.min_profile_points) {
        return Ok(Feature::Insufficient);
    }
    let side = T::lit(config.local_window_m);
    Ok(match config.method {
        Method::Centroid => Feature::Location(estimate_location(p, Estimator::Overall, side)?),
        Method::LocCent => Feature::Location(estimate_location(p, Estimator::Local, side)?),
        Method::KlDiv | Method::Jaccard => {
            let bbox = bbox.expect("distribution methods carry a bounding box");
            Feature::Distribution(profile_distribution(p, bbox, config.grid_n)?)
        }
        Method::EditDistance => unreachable!(),
    })
}

fn compare<T: Scalar>(
    a: (&Feature<T>, &str),
    b: (&Feature<T>, &str),
    config: &MetricConfig,
) -> Result<Option<f64>, DiscoveryError> {
    let score = match (a.0, b.0) {
        (Feature::Insufficient, _) | (_, Feature::Insufficient) => return Ok(None),
        (Feature::Name, Feature::Name) => 1.0 - normalized_edit_distance(a.1, b.1),
        (Feature::Location(x), Feature::Location(y)) => inverse_distance(*x, *y).as_f64(),
        (Feature::Distribution(p), Feature::Distribution(q)) => {
            let divergence = if config.method == Method::KlDiv { Divergence::Kl } else { Divergence::Jaccard };
            inverse_divergence(divergence_of(p, q, divergence, T::lit(config.kl_epsilon))?).as_f64()
        }
        _ => unreachable!("features of one configuration share a kind"),
    };
    Ok(Some(score))
}

/// Data extent of all profiles, padded by 1%.
pub fn district_bbox<'a, T: Scalar>(profiles: impl IntoIterator<Item = &'a MobilityProfile<T>>) -> Option<BoundingBox<T>> {
    BoundingBox::covering(profiles.into_iter().flat_map(|p| p.points.iter()), T::lit(BBOX_PAD_FRACTION))
}

fn check_unique<T>(profiles: &[MobilityProfile<T>]) -> Result<Vec<String>, DiscoveryError> {
    let mut seen = BTreeSet::new();
    for p in profiles {
        if !seen.insert(p.name.as_str()) {
            return Err(DiscoveryError::DuplicateName(p.name.clone()));
        }
    }
    Ok(profiles.iter().map(|p| p.name.clone()).collect())
}

/// Scores every (standard, candidate) pair of one district and applies the
/// configured threshold. Output is ordered by standard index, then candidate
/// index.
pub fn score_pairs<T: Scalar>(
    district: &str,
    standards: &[MobilityProfile<T>],
    candidates: &[MobilityProfile<T>],
    config: &MetricConfig,
) -> Result<Vec<ScoredPair>, DiscoveryError> {
    config.validate()?;
    check_unique(standards)?;
    check_unique(candidates)?;
    let bbox = match config.method {
        Method::KlDiv | Method::Jaccard => district_bbox(standards.iter().chain(candidates)),
        _ => None,
    };
    let featurize_all = |ps: &[MobilityProfile<T>]| -> Result<Vec<Feature<T>>, DiscoveryError> {
        ps.par_iter().map(|p| featurize(p, config, bbox)).collect()
    };
    let std_features = featurize_all(standards)?;
    let cand_features = featurize_all(candidates)?;

    (0..standards.len())
        .into_par_iter()
        .flat_map_iter(|i| (0..candidates.len()).map(move |j| (i, j)))
        .map(|(i, j)| {
            let score = compare(
                (&std_features[i], standards[i].name.as_str()),
                (&cand_features[j], candidates[j].name.as_str()),
                config,
            )?;
            Ok(ScoredPair {
                district: district.to_owned(),
                standard_index: i,
                candidate_index: j,
                standard_name: standards[i].name.clone(),
                candidate_name: candidates[j].name.clone(),
                score,
                decision: decide(score, config.threshold),
            })
        })
        .collect()
}

/// Scores all pairs and returns the inferred alias matrix together with the
/// exhaustive scored pair list.
pub fn infer_alias_matrix<T: Scalar>(
    district: &str,
    standards: &[MobilityProfile<T>],
    candidates: &[MobilityProfile<T>],
    config: &MetricConfig,
) -> Result<(AliasMatrix, Vec<ScoredPair>), DiscoveryError> {
    let scored = score_pairs(district, standards, candidates, config)?;
    let matrix = AliasMatrix::from_scored(
        district,
        standards.iter().map(|p| p.name.clone()).collect(),
        candidates.iter().map(|p| p.name.clone()).collect(),
        &scored,
    );
    Ok((matrix, scored))
}
