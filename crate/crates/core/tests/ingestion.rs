use std::fs;

use poi_alias::geo::GeoPoint;
use poi_alias::ingestion::{
    location_rows, parse_address_records, parse_labels, parse_location_log, partition_by_district, write_csv, write_jsonl,
    AddressRecord, Corpus, Format, GroundTruthLabel, IngestError, LocationLog,
};
use proptest::prelude::*;

#[test]
fn location_counts_match_line_count() {
    let dir = tempfile::tempdir().unwrap();
    let text = "user_id,lat,lon\nu1,31.3,120.5\nu2,31.31,120.51\nu1,31.32,120.52\nu3,31.0,120.0\nu2,31.0,120.0\nu3,31.1,120.1\n";
    let path = dir.path().join("locations.csv");
    fs::write(&path, text).unwrap();
    let (log, report) = parse_location_log(&path, Format::Csv).unwrap();
    let data_lines = text.lines().skip(1).count();
    assert_eq!(log.len(), 3);
    assert!(log.values().all(|v| v.len() == 2));
    assert_eq!(log.values().map(Vec::len).sum::<usize>(), data_lines);
    assert_eq!(report.rows_accepted as usize, data_lines);
    assert_eq!(log["u1"][1], GeoPoint { lat: 31.32, lon: 120.52 });
}

#[test]
fn running_example_rows() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("addresses.csv");
    fs::write(&a, "user_id,province,city,district,poi_name\nu1,Jiangsu,Suzhou,Huqiu,XiGuYaYuan\n").unwrap();
    let (recs, _) = parse_address_records(&a, Format::Csv).unwrap();
    assert_eq!(
        recs,
        vec![AddressRecord {
            user_id: "u1".into(),
            province: "Jiangsu".into(),
            city: "Suzhou".into(),
            district: "Huqiu".into(),
            poi_name: "XiGuYaYuan".into(),
        }]
    );
    let l = dir.path().join("labels.csv");
    fs::write(&l, "district,standard_name,candidate_name,is_alias\nHuqiu,XiGuYaYuan,LangShiLvZhou,1\n").unwrap();
    let (labels, _) = parse_labels(&l, Format::Csv).unwrap();
    assert!(labels[0].is_alias);
    assert_eq!(labels[0].candidate_name, "LangShiLvZhou");
}

#[test]
fn missing_directory_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("addresses.csv"), "user_id,province,city,district,poi_name\n").unwrap();
    match Corpus::load_dir(dir.path()) {
        Err(IngestError::NotFound(p)) => assert!(p.ends_with("locations.csv")),
        other => panic!("unexpected {other:?}"),
    }
}

fn address() -> impl Strategy<Value = AddressRecord> {
    ("u[0-9]{1,3}", "[A-Z][a-z]{0,6}", "d[0-3]", "[A-Za-z ,\"]{1,10}[a-z]").prop_map(|(u, c, d, n)| AddressRecord {
        user_id: u,
        province: "Jiangsu".into(),
        city: c,
        district: d,
        poi_name: n,
    })
}

proptest! {
    #[test]
    fn addresses_round_trip_csv_and_jsonl(records in prop::collection::vec(address(), 0..40)) {
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("a.csv", Format::Csv), ("a.jsonl", Format::Jsonl)] {
            let path = dir.path().join(name);
            let mut buf = Vec::new();
            match format {
                Format::Csv => write_csv(&mut buf, &records).unwrap(),
                Format::Jsonl => write_jsonl(&mut buf, &records).unwrap(),
            }
            fs::write(&path, buf).unwrap();
            let (parsed, report) = parse_address_records(&path, format).unwrap();
            let trimmed: Vec<_> = records
                .iter()
                .cloned()
                .map(|mut r| { r.poi_name = r.poi_name.trim().to_owned(); r })
                .collect();
            prop_assert_eq!(parsed, trimmed);
            prop_assert_eq!(report.error_count(), 0);
        }
    }

    #[test]
    fn locations_round_trip_exactly(
        pts in prop::collection::vec(("u[0-9]", -90.0..=90.0f64, -180.0..=180.0f64), 1..50)
    ) {
        let mut log = LocationLog::new();
        for (u, lat, lon) in pts {
            log.entry(u).or_default().push(GeoPoint { lat, lon });
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let mut buf = Vec::new();
        write_csv(&mut buf, &location_rows(&log)).unwrap();
        fs::write(&path, buf).unwrap();
        prop_assert_eq!(parse_location_log(&path, Format::Csv).unwrap().0, log);
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint(records in prop::collection::vec(address(), 0..60)) {
        let parts = partition_by_district(&records);
        prop_assert_eq!(parts.values().map(Vec::len).sum::<usize>(), records.len());
        for (d, rs) in &parts {
            prop_assert!(rs.iter().all(|r| r.district == *d));
        }
    }

    #[test]
    fn labels_round_trip(flags in prop::collection::vec(any::<bool>(), 1..20)) {
        let labels: Vec<GroundTruthLabel> = flags
            .iter()
            .enumerate()
            .map(|(i, &f)| GroundTruthLabel {
                district: "d".into(),
                standard_name: format!("std{i}"),
                candidate_name: format!("cand{i}"),
                is_alias: f,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let mut buf = Vec::new();
        write_csv(&mut buf, &labels).unwrap();
        fs::write(&path, buf).unwrap();
        let (parsed, _) = parse_labels(&path, Format::Csv).unwrap();
        prop_assert_eq!(parsed.len(), labels.len());
        prop_assert_eq!(parsed.iter().filter(|l| l.is_alias).count(), flags.iter().filter(|&&f| f).count());
    }
}
