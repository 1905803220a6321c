use nalgebra::DMatrix;
use zeroinfl::data::*;
use zeroinfl::Error;

#[test]
fn csv_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let values = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 3.0, 40000.0, 0.0]);
    let d = Dataset::new(values.clone(), vec!["x".into(), "y".into()], "test").unwrap();
    write_counts_csv(&d, &path).unwrap();
    let back = load_counts_csv(&path).unwrap();
    assert_eq!(back.values, values);
    assert_eq!(back.variable_names, vec!["x", "y"]);
}

#[test]
fn missing_file_error_names_the_path() {
    let err = load_counts_csv("/nonexistent/table.csv").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/table.csv"), "{err}");
}

#[test]
fn negative_cell_is_rejected() {
    let err = parse_counts_csv("a,b\n0,1\n2,-3\n", "inline").unwrap_err();
    assert!(matches!(err, Error::Parse { row: 3, column: 2, .. }), "{err}");
}

#[test]
fn power_rescale_against_extended_precision() {
    // x^0.851 at 50 digits
    let cases: [(f64, f64); 7] = [
        (0.0, 0.0),
        (1.0, 1.0),
        (3.0, 2.547_007_288_656_516_6),
        (7.0, 5.238_156_046_328_126),
        (1000.0, 357.272_838_151_928_9),
        (123_456_789.0, 7_689_166.153_355_18),
        (2_147_483_647.0, 87_392_128.177_946_59),
    ];
    let values = DMatrix::from_iterator(cases.len(), 1, cases.iter().map(|c| c.0));
    let d = Dataset::new(values, vec!["v".into()], "test").unwrap();
    let r = rescale_power(&d, 0.851).unwrap();
    for (i, (_, want)) in cases.iter().enumerate() {
        assert_eq!(r.values[(i, 0)], want.round(), "row {i}");
    }
}

#[test]
fn pipeline_provenance_is_ordered() {
    let d = synthetic_standin(&QMP_STANDIN, 2017);
    let r = rescale_power(&d, 0.851).unwrap();
    let s = select_dataset(&r, &[0.3, 0.6], 2).unwrap();
    assert_eq!(s.p(), 2);
    let n = s.provenance.len();
    assert!(s.provenance[n - 2].starts_with("power:"));
    assert!(s.provenance[n - 1].starts_with("select:"));
    assert_eq!(d.n(), 135);
    assert_eq!(d.p(), 101);
}
