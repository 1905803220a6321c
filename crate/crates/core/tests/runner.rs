use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use zeroinfl::eval::ModelKind;
use zeroinfl::runner::*;

const SMALL: &str = r#"
experiment = "setting_two"
seed = 42
replications = 2
n = 150
p = 3
keep_residuals = true

[grid]
beta1 = [0.0, 2.0]
gamma0 = [-2.1972245773362196]
gamma1 = [0.0]
rho = [0.5]
correlation = ["AR"]
"#;

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn rerun_is_a_no_op_and_forced_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let opts = RunOptions::new(dir.path());
    let first = run_experiment(&config, &opts).unwrap();
    assert!(!first.skipped);
    assert_eq!(first.manifest.cells, 4);
    assert!(first.manifest.failed.is_empty());
    let before = read_dir(dir.path());

    let second = run_experiment(&config, &opts).unwrap();
    assert!(second.skipped);
    assert_eq!(read_dir(dir.path()), before);

    let forced = run_experiment(&config, &RunOptions { force: true, ..RunOptions::new(dir.path()) }).unwrap();
    assert!(!forced.skipped);
    assert_eq!(read_dir(dir.path()), before);

    // a different seed is a different config
    let mut other = config.clone();
    other.seed = 43;
    assert!(!run_experiment(&other, &opts).unwrap().skipped);
}

#[test]
fn csv_tables_round_trip_and_json_carries_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml_str(SMALL).unwrap();
    run_experiment(&config, &RunOptions::new(dir.path())).unwrap();
    let results = load_results(dir.path()).unwrap();
    assert_eq!(results.fingerprint, config.fingerprint());

    let mut rdr = csv::Reader::from_path(dir.path().join("records.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let mut from_csv = BTreeMap::new();
    for row in rdr.records() {
        let row = row.unwrap();
        assert_eq!(row[col("master_seed")].parse::<u64>().unwrap(), 42);
        let key = (row[col("point")].to_owned(), row[col("replication")].parse::<usize>().unwrap(), row[col("fold")].parse::<usize>().unwrap(), row[col("model")].to_owned());
        let d = &row[col("distance")];
        // an empty numeric cell must come with an error
        assert!(!d.is_empty() || !row[col("error")].is_empty());
        from_csv.insert(key, d.parse::<f64>().unwrap());
    }
    let mut n = 0;
    for cell in &results.cells {
        let Some(CellOutcome::Eval(rep)) = &cell.outcome else { panic!("missing outcome") };
        for r in &rep.records {
            let key = (cell.point_index.to_string(), cell.replication, r.fold, r.model.tag().to_owned());
            assert_eq!(from_csv[&key], r.distance.unwrap(), "{key:?}");
            n += 1;
        }
    }
    assert_eq!(n, from_csv.len());
    assert_eq!(n, 4 * 5 * 3);

    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["fingerprint"], config.fingerprint());
    let heat = report["tables"]["heatmap"].as_array().unwrap();
    assert_eq!(heat.len(), 2 * 2);
    assert!(!report["tables"]["residuals"].as_array().unwrap().is_empty());
    let manifest = Manifest::load(dir.path()).unwrap();
    assert_eq!(manifest.config_hash, config.fingerprint());
    assert_eq!(manifest.version, VERSION);
}

#[test]
fn heatmap_medians_match_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_toml_str(SMALL).unwrap();
    run_experiment(&config, &RunOptions::new(dir.path())).unwrap();
    let results = load_results(dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("heatmap.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for row in rdr.records() {
        let row = row.unwrap();
        let point: usize = row[col("point")].parse().unwrap();
        let hnb = if &row[col("comparison")] == "HNB_COV" { ModelKind::HnbCovariates } else { ModelKind::Hnb };
        let mut amcs: Vec<f64> = results
            .cells
            .iter()
            .filter(|c| c.point_index == point)
            .map(|c| match &c.outcome {
                Some(CellOutcome::Eval(r)) => r.cv_amc(hnb).unwrap(),
                _ => unreachable!(),
            })
            .collect();
        amcs.sort_by(f64::total_cmp);
        let median = 0.5 * (amcs[0] + amcs[1]);
        assert!((row[col("median_amc")].parse::<f64>().unwrap() - median).abs() < 1e-15);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let empty = SMALL.replace("beta1 = [0.0, 2.0]", "beta1 = []");
    assert!(ExperimentConfig::from_toml_str(&empty).and_then(|c| c.validate()).is_err());
    let unknown = format!("{SMALL}\nbogus = 1\n");
    assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
    let mut c = ExperimentConfig::new(Experiment::SettingOne);
    c.models = Some(vec![ModelKind::Tlnpn, ModelKind::HnbCovariates]);
    assert!(c.validate().is_err());
}
