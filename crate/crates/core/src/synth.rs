//! Seeded synthetic cities with exhaustive ground truth.
//!
//! Each district is a square of POIs. Users write the standard name or an
//! alias of their home POI (occasionally misspelled), and their GPS points
//! scatter around the home POI plus a few away places. Standard names and
//! aliases are drawn from disjoint alphabets, so no alias shares a single
//! character with any standard name and text matching cannot find them.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`): district `d` uses the
//! generator seeded with `seed` on stream `d + 1`, so a seed fixes every
//! output byte regardless of platform.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, LocalProjection, PlanarPoint};
use crate::ingestion::{
    location_rows, write_csv, AddressRecord, Corpus, GroundTruthLabel, LocationLog, StandardName,
};
use crate::preprocess::edit_distance;

const STANDARD_CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p'];
const STANDARD_VOWELS: &[char] = &['a', 'e', 'i', 'o'];
const ALIAS_CONSONANTS: &[char] = &['h', 'j', 'r', 's', 't', 'v', 'w', 'z'];
const ALIAS_VOWELS: &[char] = &['u', 'y'];

/// Two generated base names differ by at least this many edits, so a single
/// typo can never bring spellings of different names within the default
/// clustering threshold.
const MIN_NAME_EDITS: usize = 4;
const MAX_ATTEMPTS: usize = 100_000;
/// Longitude offset between consecutive district centers, in degrees.
const DISTRICT_SPACING_DEG: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("unknown synth config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
}

/// Inclusive integer range, written `lo..hi` or a single value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub const fn exactly(n: usize) -> Self {
        Self { min: n, max: n }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

impl fmt::Display for CountRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.min == self.max {
            write!(f, "{}", self.min)
        } else {
            write!(f, "{}..{}", self.min, self.max)
        }
    }
}

impl FromStr for CountRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v}: {e}"));
        match s.split_once("..") {
            Some((lo, hi)) => Ok(Self::new(parse(lo)?, parse(hi.trim_start_matches('='))?)),
            None => parse(s).map(Self::exactly),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_districts: usize,
    pub pois_per_district: usize,
    pub alias_fraction: f64,
    pub aliases_per_poi: CountRange,
    pub users_per_poi: CountRange,
    pub points_per_user: CountRange,
    /// Standard deviation of home points around the POI, meters.
    pub home_scatter_m: f64,
    /// Share of each user's points drawn around away places.
    pub away_fraction: f64,
    pub away_places_per_user: CountRange,
    /// Standard deviation of points around an away place, meters.
    pub away_scatter_m: f64,
    /// Probability that a user misspells the name they write.
    pub typo_rate: f64,
    /// Side of the square district, meters.
    pub district_extent_m: f64,
    pub min_separation_m: f64,
    pub province: String,
    pub city: String,
    pub base_lat: f64,
    pub base_lon: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_districts: 2,
            pois_per_district: 100,
            alias_fraction: 0.3,
            aliases_per_poi: CountRange::new(1, 2),
            users_per_poi: CountRange::exactly(20),
            points_per_user: CountRange::exactly(40),
            home_scatter_m: 40.0,
            away_fraction: 0.1,
            away_places_per_user: CountRange::new(1, 3),
            away_scatter_m: 30.0,
            typo_rate: 0.05,
            district_extent_m: 6000.0,
            min_separation_m: 200.0,
            province: "Jiangsu".into(),
            city: "Synthopolis".into(),
            base_lat: 31.30,
            base_lon: 120.57,
        }
    }
}

impl SynthConfig {
    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SynthError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, SynthError> {
            value.trim().parse().map_err(|_| SynthError::BadValue { key: key.into(), value: value.into() })
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "n_districts" => self.n_districts = parse(key, value)?,
            "pois_per_district" => self.pois_per_district = parse(key, value)?,
            "alias_fraction" => self.alias_fraction = parse(key, value)?,
            "aliases_per_poi" => self.aliases_per_poi = parse(key, value)?,
            "users_per_poi" => self.users_per_poi = parse(key, value)?,
            "points_per_user" => self.points_per_user = parse(key, value)?,
            "home_scatter_m" => self.home_scatter_m = parse(key, value)?,
            "away_fraction" => self.away_fraction = parse(key, value)?,
            "away_places_per_user" => self.away_places_per_user = parse(key, value)?,
            "away_scatter_m" => self.away_scatter_m = parse(key, value)?,
            "typo_rate" => self.typo_rate = parse(key, value)?,
            "district_extent_m" => self.district_extent_m = parse(key, value)?,
            "min_separation_m" => self.min_separation_m = parse(key, value)?,
            "province" => self.province = value.trim().to_owned(),
            "city" => self.city = value.trim().to_owned(),
            "base_lat" => self.base_lat = parse(key, value)?,
            "base_lon" => self.base_lon = parse(key, value)?,
            other => return Err(SynthError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        for (name, r) in [
            ("aliases_per_poi", self.aliases_per_poi),
            ("users_per_poi", self.users_per_poi),
            ("points_per_user", self.points_per_user),
            ("away_places_per_user", self.away_places_per_user),
        ] {
            if r.min > r.max {
                return bad(format!("{name} range is empty ({r})"));
            }
        }
        for (name, v) in [("alias_fraction", self.alias_fraction), ("away_fraction", self.away_fraction), ("typo_rate", self.typo_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("home_scatter_m", self.home_scatter_m),
            ("away_scatter_m", self.away_scatter_m),
            ("min_separation_m", self.min_separation_m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.district_extent_m.is_finite() && self.district_extent_m > 0.0) {
            return bad("district_extent_m must be positive".into());
        }
        if self.n_districts == 0 || self.pois_per_district == 0 {
            return bad("need at least one district and one POI".into());
        }
        if self.users_per_poi.min < 1 + self.aliases_per_poi.max && self.alias_fraction > 0.0 {
            return bad("users_per_poi.min must cover the standard name and every alias".into());
        }
        if GeoPoint::new(self.base_lat, self.base_lon).is_err() {
            return bad("base coordinates out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiTruth {
    pub standard_name: String,
    pub location: GeoPoint<f64>,
    pub aliases: Vec<String>,
    /// Misspellings actually written by users, per base name.
    pub typo_variants: BTreeMap<String, Vec<String>>,
    pub user_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistrictTruth {
    pub name: String,
    pub center: GeoPoint<f64>,
    pub pois: Vec<PoiTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMeta {
    pub config: SynthConfig,
    pub rng: String,
    pub districts: Vec<DistrictTruth>,
}

impl TruthMeta {
    pub fn planted_alias_count(&self) -> usize {
        self.districts.iter().flat_map(|d| &d.pois).map(|p| p.aliases.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCity {
    pub addresses: Vec<AddressRecord>,
    pub locations: LocationLog,
    pub labels: Vec<GroundTruthLabel>,
    pub standards: Vec<StandardName>,
    pub meta: TruthMeta,
}

impl SynthCity {
    pub fn to_corpus(&self) -> Corpus {
        Corpus::new(self.addresses.clone(), self.locations.clone(), self.labels.clone(), self.standards.clone())
    }

    /// Writes `addresses.csv`, `locations.csv`, `labels.csv`,
    /// `standards.csv` and `truth_meta.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let open = |name: &str| fs::File::create(dir.join(name)).map(BufWriter::new);
        write_csv(open("addresses.csv")?, &self.addresses)?;
        write_csv(open("locations.csv")?, &location_rows(&self.locations))?;
        write_csv(open("labels.csv")?, &self.labels)?;
        write_csv(open("standards.csv")?, &self.standards)?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(std::io::Error::other)?;
        fs::write(dir.join("truth_meta.json"), meta + "\n")
    }
}

pub fn generate_city(config: &SynthConfig) -> Result<SynthCity, SynthError> {
    config.validate()?;
    let mut city = SynthCity {
        addresses: Vec::new(),
        locations: LocationLog::new(),
        labels: Vec::new(),
        standards: Vec::new(),
        meta: TruthMeta { config: config.clone(), rng: "ChaCha8 (rand_chacha), stream = district index + 1".into(), districts: Vec::new() },
    };
    for d in 0..config.n_districts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(d as u64 + 1);
        let truth = generate_district(config, d, &mut rng, &mut city)?;
        city.meta.districts.push(truth);
    }
    Ok(city)
}

fn round7(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

fn generate_district(
    config: &SynthConfig,
    index: usize,
    rng: &mut ChaCha8Rng,
    city: &mut SynthCity,
) -> Result<DistrictTruth, SynthError> {
    let district = format!("district{index:02}");
    let center = GeoPoint { lat: config.base_lat, lon: config.base_lon + index as f64 * DISTRICT_SPACING_DEG };
    let proj = LocalProjection::new(center);
    let half = config.district_extent_m / 2.0;

    let sites = place_pois(config, rng)?;
    let n = sites.len();

    let mut taken: Vec<String> = Vec::new();
    let mut standards = Vec::with_capacity(n);
    for _ in 0..n {
        standards.push(fresh_name(rng, STANDARD_CONSONANTS, STANDARD_VOWELS, &mut taken)?);
    }
    let n_aliased = (config.alias_fraction * n as f64).round() as usize;
    let mut aliased: Vec<usize> = sample(rng, n, n_aliased).into_vec();
    aliased.sort_unstable();
    let mut aliases: Vec<Vec<String>> = vec![Vec::new(); n];
    for &p in &aliased {
        for _ in 0..config.aliases_per_poi.sample(rng) {
            aliases[p].push(fresh_name(rng, ALIAS_CONSONANTS, ALIAS_VOWELS, &mut taken)?);
        }
    }

    let home_noise = Normal::new(0.0, config.home_scatter_m).expect("validated scatter");
    let away_noise = Normal::new(0.0, config.away_scatter_m).expect("validated scatter");
    let mut pois = Vec::with_capacity(n);
    for p in 0..n {
        let names: Vec<&String> = std::iter::once(&standards[p]).chain(&aliases[p]).collect();
        let n_users = config.users_per_poi.sample(rng);
        let mut typo_variants: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for u in 0..n_users {
            let user_id = format!("{district}-p{p:03}-u{u:03}");
            let idx = if u < names.len() { u } else { rng.random_range(0..names.len()) };
            let (base, is_alias) = (names[idx], idx > 0);
            let mut written = base.clone();
            if rng.random_bool(config.typo_rate) {
                let (cons, vows) = if is_alias { (ALIAS_CONSONANTS, ALIAS_VOWELS) } else { (STANDARD_CONSONANTS, STANDARD_VOWELS) };
                written = typo(rng, base, cons, vows);
                typo_variants.entry(base.clone()).or_default().push(written.clone());
            }
            if rng.random_bool(0.1) {
                written = capitalize(&written);
            }
            city.addresses.push(AddressRecord {
                user_id: user_id.clone(),
                province: config.province.clone(),
                city: config.city.clone(),
                district: district.clone(),
                poi_name: written,
            });

            let n_places = config.away_places_per_user.sample(rng);
            let places: Vec<(f64, f64)> =
                (0..n_places).map(|_| (rng.random_range(-half..=half), rng.random_range(-half..=half))).collect();
            let n_points = config.points_per_user.sample(rng);
            let mut points = Vec::with_capacity(n_points);
            for _ in 0..n_points {
                let away = !places.is_empty() && rng.random_bool(config.away_fraction);
                let (cx, cy, noise) = if away {
                    let (x, y) = places[rng.random_range(0..places.len())];
                    (x, y, &away_noise)
                } else {
                    (sites[p].0, sites[p].1, &home_noise)
                };
                let g = proj.unproject(PlanarPoint { x: cx + noise.sample(rng), y: cy + noise.sample(rng) });
                points.push(GeoPoint { lat: round7(g.lat), lon: round7(g.lon) });
            }
            city.locations.insert(user_id, points);
        }
        let loc = proj.unproject(PlanarPoint { x: sites[p].0, y: sites[p].1 });
        pois.push(PoiTruth {
            standard_name: standards[p].clone(),
            location: GeoPoint { lat: round7(loc.lat), lon: round7(loc.lon) },
            aliases: aliases[p].clone(),
            typo_variants,
            user_count: n_users,
        });
    }

    for (p, standard) in standards.iter().enumerate().take(n) {
        city.standards.push(StandardName { district: district.clone(), standard_name: standard.clone() });
        for (q, alias_list) in aliases.iter().enumerate() {
            for alias in alias_list {
                city.labels.push(GroundTruthLabel {
                    district: district.clone(),
                    standard_name: standard.clone(),
                    candidate_name: alias.clone(),
                    is_alias: p == q,
                });
            }
        }
    }
    Ok(DistrictTruth { name: district, center, pois })
}

/// POI sites in district-local meters, uniform with a minimum separation.
fn place_pois(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>, SynthError> {
    let half = config.district_extent_m / 2.0;
    let min_sq = config.min_separation_m * config.min_separation_m;
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(config.pois_per_district);
    let mut attempts = 0;
    while sites.len() < config.pois_per_district {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(SynthError::InvalidConfig(format!(
                "cannot place {} POIs {} m apart in a {} m district",
                config.pois_per_district, config.min_separation_m, config.district_extent_m
            )));
        }
        let c = (rng.random_range(-half..=half), rng.random_range(-half..=half));
        if sites.iter().all(|s| (s.0 - c.0).powi(2) + (s.1 - c.1).powi(2) >= min_sq) {
            sites.push(c);
        }
    }
    Ok(sites)
}

fn fresh_name(rng: &mut ChaCha8Rng, cons: &[char], vows: &[char], taken: &mut Vec<String>) -> Result<String, SynthError> {
    for _ in 0..MAX_ATTEMPTS {
        let syllables = rng.random_range(3..=4);
        let name: String = (0..syllables)
            .flat_map(|_| [cons[rng.random_range(0..cons.len())], vows[rng.random_range(0..vows.len())]])
            .collect();
        if taken.iter().all(|t| edit_distance(t, &name) >= MIN_NAME_EDITS) {
            taken.push(name.clone());
            return Ok(name);
        }
    }
    Err(SynthError::InvalidConfig("name space exhausted; too many POIs or aliases per district".into()))
}

/// One random substitution, insertion or deletion using the name's own
/// alphabet.
fn typo(rng: &mut ChaCha8Rng, name: &str, cons: &[char], vows: &[char]) -> String {
    let alphabet: Vec<char> = cons.iter().chain(vows).copied().collect();
    let mut chars: Vec<char> = name.chars().collect();
    loop {
        let mut candidate = chars.clone();
        match rng.random_range(0..3) {
            0 => {
                let k = rng.random_range(0..candidate.len());
                candidate[k] = alphabet[rng.random_range(0..alphabet.len())];
            }
            1 => {
                let k = rng.random_range(0..=candidate.len());
                candidate.insert(k, alphabet[rng.random_range(0..alphabet.len())]);
            }
            _ if candidate.len() > 4 => {
                candidate.remove(rng.random_range(0..candidate.len()));
            }
            _ => continue,
        }
        if candidate != chars {
            chars = candidate;
            return chars.into_iter().collect();
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
