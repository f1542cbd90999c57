use std::fs;
use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use gpsig::checkpoint::Checkpoint;
use gpsig::io::{load_dataset, read_jsonl, save_dataset, IoError, Split};
use gpsig::report::{read_compare, read_gram, write_compare, write_gram, CompareRow};
use gpsig_core::dataset::{make_synthetic, SyntheticKind};
use gpsig_core::signature::{cov_sequences, SigKernelParams};
use gpsig_core::static_kernel::StaticKernelParams;
use gpsig_core::trainer::{fit_variational, initial_model, InducingKind, Silent, TrainConfig};

const RECORDS: &str = r#"{"label": 0, "times": [0.0, 0.5, 2.0], "values": [[1.0, 2.0], [0.5, -1.0], [3.25, 0.0]]}
{"label": 1, "values": [[0.0, 0.0], [1.0, 1.0]], "split": "test"}

{"label": 1, "times": [1.0], "values": [[2.0, 2.0]], "split": "train"}
"#;

#[test]
fn jsonl_plain_and_gzip_read_identically() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("d.jsonl");
    fs::write(&plain, RECORDS).unwrap();
    // gzip detection goes by content, not by file name
    let gz = dir.path().join("d.data");
    let mut enc = GzEncoder::new(fs::File::create(&gz).unwrap(), Compression::default());
    enc.write_all(RECORDS.as_bytes()).unwrap();
    enc.finish().unwrap();

    let a = read_jsonl(&plain).unwrap();
    let b = read_jsonl(&gz).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    assert_eq!(a[0].0.times(), &[0.0, 0.5, 2.0]);
    assert_eq!(a[0].0.point(2), &[3.25, 0.0]);
    assert_eq!(a[0].1, Split::Train);
    assert_eq!(a[1].0.times(), &[0.0, 1.0], "missing times default to the integer grid");
    assert_eq!(a[1].1, Split::Test);
    assert_eq!(a[2].0.label(), Some(1));
}

#[test]
fn malformed_lines_are_reported_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("{\"label\": 0, \"values\": [[1.0]]}\n{\"label\": 0, \"values\": [[1.0, 2.0]]}\n", 2),
        ("{\"label\": 0, \"values\": [[1.0]], \"colour\": 1}\n", 1),
        ("{\"label\": 0, \"times\": [1.0, 0.5], \"values\": [[1.0], [2.0]]}\n", 1),
        ("{\"label\": 0, \"values\": [[1.0]]}\nnot json\n", 2),
    ];
    for (text, bad_line) in cases {
        let p = dir.path().join("bad.jsonl");
        fs::write(&p, text).unwrap();
        match read_jsonl(&p) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, bad_line, "{text}"),
            other => panic!("expected a parse error for {text:?}, got {other:?}"),
        }
    }
    assert!(matches!(
        read_jsonl(&dir.path().join("absent.jsonl")),
        Err(IoError::Open { .. })
    ));
}

#[test]
fn dataset_round_trips_through_gzip_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(SyntheticKind::Phase2, 8, 3).unwrap();
    let p = dir.path().join("phase2.jsonl.gz");
    save_dataset(&p, &ds).unwrap();
    let back = load_dataset(&p, None).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn separate_test_file_joins_the_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(SyntheticKind::Drift2, 4, 0).unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    gpsig::io::write_jsonl(&train, ds.train.iter().map(|s| (s, None))).unwrap();
    gpsig::io::write_jsonl(&test, ds.test.iter().map(|s| (s, None))).unwrap();
    let back = load_dataset(&train, Some(&test)).unwrap();
    assert_eq!(back.train, ds.train);
    assert_eq!(back.test, ds.test);
}

fn trained_model(kind: InducingKind) -> gpsig_core::model::Model {
    let ds = make_synthetic(SyntheticKind::Drift2, 10, 1).unwrap();
    let mut kernel = SigKernelParams::new(2);
    kernel.lags = vec![0.5];
    kernel.normalize_levels = true;
    kernel.static_kernel = StaticKernelParams::Rbf {
        lengthscales: Vec::new(),
    };
    let cfg = TrainConfig {
        n_z: 4,
        lr: 0.05,
        inducing: kind,
        ..TrainConfig::default()
    };
    let model = initial_model(&ds.train, ds.num_classes, kernel, &cfg).unwrap();
    // a few steps so that no parameter sits at a round initial value
    fit_variational(&ds.train, model, 3, &cfg, &mut Silent).unwrap().0
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [InducingKind::Tensors, InducingKind::Sequences] {
        let model = trained_model(kind);
        let stats = gpsig_core::dataset::NormStats {
            mean: vec![0.1, 1.0 / 3.0],
            scale: vec![std::f64::consts::PI, 1e-300],
        };
        let ck = Checkpoint::new(model.clone(), Some(stats));
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(back.model.encode()), bits(model.encode()));
        assert_eq!(back, ck);
        // saving again produces the same bytes
        let p2 = dir.path().join("ck2.json");
        back.save(&p2).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }
}

#[test]
fn checkpoint_rejects_other_versions_and_bad_models() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.json");
    let mut ck = Checkpoint::new(trained_model(InducingKind::Tensors), None);
    ck.version = 99;
    ck.save(&p).unwrap();
    assert!(Checkpoint::load(&p).is_err());

    let mut ck = Checkpoint::new(trained_model(InducingKind::Tensors), None);
    ck.model.variational.mean[0].pop();
    ck.save(&p).unwrap();
    assert!(Checkpoint::load(&p).is_err());

    fs::write(&p, "{\"format\": \"gpsig-checkpoint\"").unwrap();
    assert!(Checkpoint::load(&p).is_err());
}

#[test]
fn gram_and_compare_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(SyntheticKind::Drift2, 3, 0).unwrap();
    let g = cov_sequences(&ds.train, &ds.test, &SigKernelParams::new(2)).unwrap();
    let p = dir.path().join("gram.csv");
    write_gram(&p, &g).unwrap();
    let rows = read_gram(&p).unwrap();
    assert_eq!(rows.len(), g.rows);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(v.to_bits(), g.get(i, j).to_bits());
        }
    }

    let rows = vec![
        CompareRow {
            n_z: 5,
            variant: "tensors".into(),
            seed: 0,
            elbo: -12.5,
            accuracy: 0.75,
            nlpp: 0.4,
        },
        CompareRow {
            n_z: 10,
            variant: "sequences".into(),
            seed: 3,
            elbo: -1.0 / 3.0,
            accuracy: 1.0,
            nlpp: 1e-7,
        },
    ];
    let p = dir.path().join("compare.csv");
    write_compare(&p, &rows).unwrap();
    assert_eq!(read_compare(&p).unwrap(), rows);
}
