//! Parsing of the address, location and label corpora.
//!
//! Every file is a headered CSV or a JSONL mirror with the same field names.
//! Malformed rows are skipped and recorded in a [`LoadReport`]; only
//! unreadable files, wrong headers and contradictory labels are fatal.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::preprocess::clean_text;

pub const ADDRESS_HEADER: [&str; 5] = ["user_id", "province", "city", "district", "poi_name"];
pub const LOCATION_HEADER: [&str; 3] = ["user_id", "lat", "lon"];
pub const LABEL_HEADER: [&str; 4] = ["district", "standard_name", "candidate_name", "is_alias"];
pub const STANDARD_HEADER: [&str; 2] = ["district", "standard_name"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: expected header `{expected}`, found `{found}`", path.display())]
    BadHeader { path: PathBuf, expected: String, found: String },
    #[error("{}: csv error: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("conflicting labels for ({district}, {standard}, {candidate})")]
    ConflictingLabel { district: String, standard: String, candidate: String },
    #[error("unsupported file format for {}", .0.display())]
    UnknownFormat(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("jsonl") | Some("ndjson") => Ok(Format::Jsonl),
            _ => Err(IngestError::UnknownFormat(path.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AddressRecord {
    pub user_id: String,
    pub province: String,
    pub city: String,
    pub district: String,
    pub poi_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationPoint {
    pub user_id: String,
    pub point: GeoPoint<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub district: String,
    pub standard_name: String,
    pub candidate_name: String,
    pub is_alias: bool,
}

/// One entry of the standard-name registry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StandardName {
    pub district: String,
    pub standard_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the source file.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub source: String,
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub errors: Vec<RowError>,
    pub warnings: Vec<String>,
}

impl LoadReport {
    fn new(path: &Path) -> Self {
        Self { source: path.display().to_string(), ..Self::default() }
    }

    fn reject(&mut self, line: u64, message: impl Into<String>) {
        self.errors.push(RowError { line, message: message.into() });
    }

    fn finish(mut self) -> Self {
        self.errors.sort_by_key(|e| e.line);
        self
    }

    pub fn error_count(&self) -> usize {
        self.errors.len()
    }
}

/// Raw row of string fields with its line number.
type Row = (u64, HashMap<String, String>);

fn read_rows(path: &Path, format: Format, header: &[&str], report: &mut LoadReport) -> Result<Vec<Row>, IngestError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::NotFound(path.to_owned()),
        _ => IngestError::Io { path: path.to_owned(), source: e },
    })?;
    match format {
        Format::Csv => read_csv_rows(path, &bytes, header, report),
        Format::Jsonl => Ok(read_jsonl_rows(&bytes, header, report)),
    }
}

fn read_csv_rows(path: &Path, bytes: &[u8], header: &[&str], report: &mut LoadReport) -> Result<Vec<Row>, IngestError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(bytes);
    let found = reader.headers().map_err(|e| IngestError::Csv { path: path.to_owned(), source: e })?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(IngestError::BadHeader {
            path: path.to_owned(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        report.rows_read += 1;
        match record {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                if rec.len() != header.len() {
                    report.reject(line, format!("expected {} fields, found {}", header.len(), rec.len()));
                    continue;
                }
                let fields = header.iter().zip(rec.iter()).map(|(k, v)| (k.to_string(), v.to_owned())).collect();
                rows.push((line, fields));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                report.reject(line, e.to_string());
            }
        }
    }
    Ok(rows)
}

fn read_jsonl_rows(bytes: &[u8], header: &[&str], report: &mut LoadReport) -> Vec<Row> {
    let text = String::from_utf8_lossy(bytes);
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        report.rows_read += 1;
        let obj: serde_json::Map<String, serde_json::Value> = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(e) => {
                report.reject(line, format!("invalid JSON object: {e}"));
                continue;
            }
        };
        let mut fields = HashMap::new();
        let mut missing = None;
        for key in header {
            let value = match obj.get(*key) {
                Some(serde_json::Value::String(s)) => s.trim().to_owned(),
                Some(serde_json::Value::Number(n)) => n.to_string(),
                Some(serde_json::Value::Bool(b)) => (if *b { "1" } else { "0" }).to_owned(),
                _ => {
                    missing = Some(*key);
                    break;
                }
            };
            fields.insert(key.to_string(), value);
        }
        match missing {
            Some(key) => report.reject(line, format!("missing or non-scalar field `{key}`")),
            None => rows.push((line, fields)),
        }
    }
    rows
}

pub fn parse_address_records(path: &Path, format: Format) -> Result<(Vec<AddressRecord>, LoadReport), IngestError> {
    let mut report = LoadReport::new(path);
    let rows = read_rows(path, format, &ADDRESS_HEADER, &mut report)?;
    let mut records = Vec::with_capacity(rows.len());
    for (line, mut f) in rows {
        let mut take = |k: &str| f.remove(k).unwrap_or_default();
        let rec = AddressRecord {
            user_id: take("user_id"),
            province: take("province"),
            city: take("city"),
            district: take("district"),
            poi_name: take("poi_name"),
        };
        if rec.user_id.is_empty() {
            report.reject(line, "empty user_id");
        } else if rec.district.is_empty() {
            report.reject(line, "empty district");
        } else if rec.poi_name.trim().is_empty() {
            report.reject(line, "empty poi_name");
        } else {
            records.push(rec);
        }
    }
    report.rows_accepted = records.len() as u64;
    Ok((records, report.finish()))
}

/// Location log keyed by user; each user's points keep file order.
pub type LocationLog = BTreeMap<String, Vec<GeoPoint<f64>>>;

pub fn parse_location_log(path: &Path, format: Format) -> Result<(LocationLog, LoadReport), IngestError> {
    let mut report = LoadReport::new(path);
    let rows = read_rows(path, format, &LOCATION_HEADER, &mut report)?;
    let mut log = LocationLog::new();
    for (line, f) in rows {
        let user = f["user_id"].clone();
        if user.is_empty() {
            report.reject(line, "empty user_id");
            continue;
        }
        let (lat, lon) = match (f["lat"].parse::<f64>(), f["lon"].parse::<f64>()) {
            (Ok(lat), Ok(lon)) => (lat, lon),
            _ => {
                report.reject(line, format!("unparseable coordinate ({}, {})", f["lat"], f["lon"]));
                continue;
            }
        };
        match GeoPoint::new(lat, lon) {
            Ok(p) => {
                log.entry(user).or_default().push(p);
                report.rows_accepted += 1;
            }
            Err(e) => report.reject(line, e.to_string()),
        }
    }
    Ok((log, report.finish()))
}

pub fn parse_labels(path: &Path, format: Format) -> Result<(Vec<GroundTruthLabel>, LoadReport), IngestError> {
    let mut report = LoadReport::new(path);
    let rows = read_rows(path, format, &LABEL_HEADER, &mut report)?;
    let mut seen: HashMap<(String, String, String), bool> = HashMap::new();
    let mut labels = Vec::new();
    for (line, f) in rows {
        let is_alias = match f["is_alias"].as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                report.reject(line, format!("is_alias must be 0 or 1, found `{other}`"));
                continue;
            }
        };
        let label = GroundTruthLabel {
            district: f["district"].clone(),
            standard_name: f["standard_name"].clone(),
            candidate_name: f["candidate_name"].clone(),
            is_alias,
        };
        if label.district.is_empty() || label.standard_name.is_empty() || label.candidate_name.is_empty() {
            report.reject(line, "empty field");
            continue;
        }
        if clean_text(&label.standard_name) == clean_text(&label.candidate_name) {
            report.reject(line, "standard_name and candidate_name normalize to the same name");
            continue;
        }
        let key = (label.district.clone(), label.standard_name.clone(), label.candidate_name.clone());
        match seen.get(&key) {
            Some(&prev) if prev == is_alias => {
                report.warnings.push(format!("line {line}: duplicate label ({}, {}, {})", key.0, key.1, key.2));
            }
            Some(_) => {
                return Err(IngestError::ConflictingLabel { district: key.0, standard: key.1, candidate: key.2 });
            }
            None => {
                seen.insert(key, is_alias);
                labels.push(label);
            }
        }
    }
    report.rows_accepted = labels.len() as u64;
    Ok((labels, report.finish()))
}

pub fn parse_standards(path: &Path, format: Format) -> Result<(Vec<StandardName>, LoadReport), IngestError> {
    let mut report = LoadReport::new(path);
    let rows = read_rows(path, format, &STANDARD_HEADER, &mut report)?;
    let mut set = BTreeSet::new();
    for (line, f) in rows {
        let entry = StandardName { district: f["district"].clone(), standard_name: f["standard_name"].clone() };
        if entry.district.is_empty() || clean_text(&entry.standard_name).is_empty() {
            report.reject(line, "empty field");
        } else if !set.insert(entry) {
            report.warnings.push(format!("line {line}: duplicate standard name"));
        }
    }
    report.rows_accepted = set.len() as u64;
    Ok((set.into_iter().collect(), report.finish()))
}

/// Serializes rows in the canonical CSV layout.
pub fn write_csv<W: Write, R: CsvRow>(writer: W, rows: &[R]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes rows as JSONL with the same keys as the CSV header.
pub fn write_jsonl<W: Write, R: CsvRow>(mut writer: W, rows: &[R]) -> std::io::Result<()> {
    for r in rows {
        let obj: serde_json::Map<String, serde_json::Value> = R::HEADER
            .iter()
            .zip(r.fields())
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect();
        writeln!(writer, "{}", serde_json::Value::Object(obj))?;
    }
    Ok(())
}

pub trait CsvRow {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRow for AddressRecord {
    const HEADER: &'static [&'static str] = &ADDRESS_HEADER;
    fn fields(&self) -> Vec<String> {
        vec![
            self.user_id.clone(),
            self.province.clone(),
            self.city.clone(),
            self.district.clone(),
            self.poi_name.clone(),
        ]
    }
}

impl CsvRow for LocationPoint {
    const HEADER: &'static [&'static str] = &LOCATION_HEADER;
    fn fields(&self) -> Vec<String> {
        vec![self.user_id.clone(), format_coord(self.point.lat), format_coord(self.point.lon)]
    }
}

impl CsvRow for GroundTruthLabel {
    const HEADER: &'static [&'static str] = &LABEL_HEADER;
    fn fields(&self) -> Vec<String> {
        vec![
            self.district.clone(),
            self.standard_name.clone(),
            self.candidate_name.clone(),
            (if self.is_alias { "1" } else { "0" }).to_owned(),
        ]
    }
}

impl CsvRow for StandardName {
    const HEADER: &'static [&'static str] = &STANDARD_HEADER;
    fn fields(&self) -> Vec<String> {
        vec![self.district.clone(), self.standard_name.clone()]
    }
}

/// Shortest decimal representation that round-trips through `f64`.
pub fn format_coord(v: f64) -> String {
    format!("{v}")
}

/// Flattens a location log into rows, users in key order.
pub fn location_rows(log: &LocationLog) -> Vec<LocationPoint> {
    log.iter()
        .flat_map(|(u, pts)| pts.iter().map(move |&point| LocationPoint { user_id: u.clone(), point }))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub addresses: LoadReport,
    pub locations: LoadReport,
    pub labels: Option<LoadReport>,
    pub standards: Option<LoadReport>,
    /// Labels whose names do not occur in the addresses of their district.
    pub orphan_labels: Vec<GroundTruthLabel>,
}

impl CorpusReport {
    pub fn total_errors(&self) -> usize {
        self.addresses.error_count()
            + self.locations.error_count()
            + self.labels.as_ref().map_or(0, LoadReport::error_count)
            + self.standards.as_ref().map_or(0, LoadReport::error_count)
    }
}

/// All inputs for one city.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub addresses: Vec<AddressRecord>,
    pub locations: LocationLog,
    pub labels: Vec<GroundTruthLabel>,
    /// Standard-name registry; may be empty, in which case the standard
    /// names of the labels serve as the registry.
    pub standards: Vec<StandardName>,
    pub districts: Vec<String>,
    pub report: CorpusReport,
}

impl Corpus {
    pub fn new(
        addresses: Vec<AddressRecord>,
        locations: LocationLog,
        labels: Vec<GroundTruthLabel>,
        standards: Vec<StandardName>,
    ) -> Self {
        let districts: BTreeSet<String> = addresses.iter().map(|a| a.district.clone()).collect();
        let mut corpus = Corpus {
            addresses,
            locations,
            labels,
            standards,
            districts: districts.into_iter().collect(),
            report: CorpusReport::default(),
        };
        corpus.report.orphan_labels = corpus.orphan_labels();
        corpus
    }

    /// Loads `addresses`, `locations`, and optionally `labels` and
    /// `standards` from `dir`, each as `.csv` or `.jsonl`.
    pub fn load_dir(dir: &Path) -> Result<Self, IngestError> {
        let find = |stem: &str| -> Option<PathBuf> {
            ["csv", "jsonl"].iter().map(|ext| dir.join(format!("{stem}.{ext}"))).find(|p| p.exists())
        };
        let required = |stem: &str| find(stem).ok_or_else(|| IngestError::NotFound(dir.join(format!("{stem}.csv"))));

        let path = required("addresses")?;
        let (addresses, addr_report) = parse_address_records(&path, Format::from_path(&path)?)?;
        let path = required("locations")?;
        let (locations, loc_report) = parse_location_log(&path, Format::from_path(&path)?)?;
        let (labels, label_report) = match find("labels") {
            Some(p) => {
                let (l, r) = parse_labels(&p, Format::from_path(&p)?)?;
                (l, Some(r))
            }
            None => (Vec::new(), None),
        };
        let (standards, std_report) = match find("standards") {
            Some(p) => {
                let (s, r) = parse_standards(&p, Format::from_path(&p)?)?;
                (s, Some(r))
            }
            None => (Vec::new(), None),
        };

        let mut corpus = Corpus::new(addresses, locations, labels, standards);
        corpus.report.addresses = addr_report;
        corpus.report.locations = loc_report;
        corpus.report.labels = label_report;
        corpus.report.standards = std_report;
        Ok(corpus)
    }

    /// Addresses grouped by district; every record lands in exactly one group.
    pub fn partition_by_district(&self) -> BTreeMap<&str, Vec<&AddressRecord>> {
        partition_by_district(&self.addresses)
    }

    fn orphan_labels(&self) -> Vec<GroundTruthLabel> {
        let names: HashSet<(&str, String)> =
            self.addresses.iter().map(|a| (a.district.as_str(), clean_text(&a.poi_name))).collect();
        let present = |d: &str, n: &str| names.contains(&(d, clean_text(n)));
        self.labels
            .iter()
            .filter(|l| !present(&l.district, &l.standard_name) || !present(&l.district, &l.candidate_name))
            .cloned()
            .collect()
    }
}

pub fn partition_by_district(addresses: &[AddressRecord]) -> BTreeMap<&str, Vec<&AddressRecord>> {
    let mut out: BTreeMap<&str, Vec<&AddressRecord>> = BTreeMap::new();
    for a in addresses {
        out.entry(a.district.as_str()).or_default().push(a);
    }
    out
}
