//! Associated-user index and mobility profiles.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::ingestion::AddressRecord;
use crate::preprocess::CanonicalMap;
use crate::scalar::Scalar;

/// Profiles with fewer points than this are too sparse to score.
pub const DEFAULT_MIN_PROFILE_POINTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("name `{0}` is not in the associated-user index")]
    UnknownName(String),
}

/// Canonical POI name → users who wrote it, for one district.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociatedUserIndex {
    pub district: String,
    pub index: BTreeMap<String, BTreeSet<String>>,
}

impl AssociatedUserIndex {
    pub fn users(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.index.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Builds the index for `district`, resolving every POI name through
/// `canonical`. Records from other districts, and records whose name cleans
/// to nothing, are ignored.
pub fn build_associated_users(district: &str, addresses: &[AddressRecord], canonical: &CanonicalMap) -> AssociatedUserIndex {
    let mut index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for rec in addresses.iter().filter(|a| a.district == district) {
        if let Some(name) = canonical.resolve(&rec.poi_name) {
            index.entry(name).or_default().insert(rec.user_id.clone());
        }
    }
    AssociatedUserIndex { district: district.to_owned(), index }
}

/// GPS points of every user associated with one POI name, duplicates kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityProfile<T> {
    pub name: String,
    pub points: Vec<GeoPoint<T>>,
    pub user_count: usize,
    pub point_count: usize,
}

impl<T: Scalar> MobilityProfile<T> {
    pub fn new(name: impl Into<String>, points: Vec<GeoPoint<T>>, user_count: usize) -> Self {
        let point_count = points.len();
        Self { name: name.into(), points, user_count, point_count }
    }

    /// A name nobody wrote: no users, no points.
    pub fn empty(name: impl Into<String>) -> Self {
        Self::new(name, Vec::new(), 0)
    }

    /// `false` when the profile has fewer than `min_points` points (and
    /// always for an empty profile).
    pub fn is_sufficient(&self, min_points: usize) -> bool {
        self.point_count >= min_points.max(1)
    }

    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary { name: self.name.clone(), user_count: self.user_count, point_count: self.point_count }
    }
}

/// Audit record for a profile dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub name: String,
    pub user_count: usize,
    pub point_count: usize,
}

/// Concatenates `L(u)` over the users of `name`, in user-id order. Users with
/// no location data still count towards `user_count`.
pub fn build_mobility_profile<T: Scalar>(
    name: &str,
    index: &AssociatedUserIndex,
    locations: &BTreeMap<String, Vec<GeoPoint<T>>>,
) -> Result<MobilityProfile<T>, ProfileError> {
    let users = index.users(name).ok_or_else(|| ProfileError::UnknownName(name.to_owned()))?;
    let points = users.iter().filter_map(|u| locations.get(u)).flatten().copied().collect();
    Ok(MobilityProfile::new(name, points, users.len()))
}
