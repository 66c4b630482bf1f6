use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use partseg::experiment::{run_batch, run_experiment, BcRef, Request, RunManifest};
use serde_json::Value;

const SCHEMA: &str = include_str!("../schema/report.schema.json");

fn small(bc: BcRef, n: usize) -> RunManifest {
    RunManifest {
        bc,
        n,
        epsilon: 1e-6,
        systems: vec![Request::A, Request::B, Request::Limit, Request::Predicted],
        ..RunManifest::default()
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn reports_conform_to_the_schema() {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for m in [small(BcRef::Catalog(1), 21), small(BcRef::Catalog(4), 17), small(BcRef::parse("line"), 41)] {
        let report = run_experiment(&m).unwrap().report;
        let json: Value = serde_json::from_str(&report.to_json()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&json).map(|e| format!("{} at {}", e, e.instance_path())).collect();
        assert!(errors.is_empty(), "{}: {errors:#?}", m.bc.slug());
    }
}

#[test]
fn schema_rejects_a_wrong_version() {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let report = run_experiment(&small(BcRef::Catalog(2), 11)).unwrap().report;
    let mut json: Value = serde_json::from_str(&report.to_json()).unwrap();
    assert!(validator.is_valid(&json));
    json["schema_version"] = Value::from(2);
    assert!(!validator.is_valid(&json));
}

#[test]
fn infinite_distances_serialize_as_null() {
    // a grid too coarse to resolve one of the interfaces
    let report = run_experiment(&small(BcRef::Catalog(4), 5)).unwrap().report;
    let json: Value = serde_json::from_str(&report.to_json()).unwrap();
    for row in json["comparisons"].as_array().unwrap() {
        let h = &row["metrics"]["hausdorff"];
        assert_eq!(h.is_null(), row["metrics"]["empty_mismatch"].as_bool().unwrap(), "{row}");
    }
}

#[test]
fn repeated_runs_write_identical_artifacts() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |dir: &Path| {
        let m = RunManifest {
            out: Some(dir.to_path_buf()),
            ..small(BcRef::Catalog(3), 25)
        };
        run_experiment(&m).unwrap().report
    };
    let (r1, r2) = (run(d1.path()), run(d2.path()));
    // the manifest records the output path, which differs on purpose
    let strip = |r: &partseg::experiment::RunReport| {
        let mut r = r.clone();
        r.manifest.out = None;
        r.to_json()
    };
    assert_eq!(strip(&r1), strip(&r2));

    let (a, b) = (files(d1.path()), files(d2.path()));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert!(a.contains_key("report.json") && a.contains_key("interfaces.csv"));
    for (name, bytes) in &a {
        if name == "report.json" || name == "manifest.json" {
            continue;
        }
        assert!(bytes == &b[name], "{name} differs between runs");
    }
}

#[test]
fn batch_results_do_not_depend_on_worker_count() {
    let manifests: Vec<RunManifest> = (1..=4).map(|id| small(BcRef::Catalog(id), 15)).collect();
    let json = |jobs| -> Vec<String> {
        run_batch(&manifests, jobs)
            .into_iter()
            .map(|r| r.unwrap().to_json())
            .collect()
    };
    assert_eq!(json(1), json(4));
}
