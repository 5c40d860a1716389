use gradbound::{Sample, Seed};
use gradbound_harness::commands::gen_data;
use gradbound_harness::config::{RawConfig, RunConfig};
use gradbound_harness::data::{encode_idx, load_csv, load_idx, parse_csv, parse_idx, write_idx};
use gradbound_harness::HarnessError;
use rand::Rng;

#[test]
fn idx_round_trips_random_datasets() {
    let mut rng = Seed(11).rng(0);
    for _ in 0..100 {
        let n = rng.random_range(1..20usize);
        let rows = rng.random_range(1..6usize);
        let cols = rng.random_range(1..6usize);
        let samples: Vec<Sample> = (0..n)
            .map(|_| {
                let px = (0..rows * cols)
                    .map(|_| f64::from(rng.random::<u8>()) / 255.0)
                    .collect();
                Sample::new(px, rng.random_range(0..10))
            })
            .collect();
        let (img, lab) = encode_idx(&samples, rows, cols).unwrap();
        assert_eq!(parse_idx(&img, &lab).unwrap(), samples);
    }
}

#[test]
fn idx_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    let samples = vec![Sample::new(vec![0.0, 1.0, 0.0, 1.0], 3)];
    write_idx(&samples, 2, 2, &i, &l).unwrap();
    assert_eq!(load_idx(&i, &l).unwrap(), samples);
    let bytes = std::fs::read(&i).unwrap();
    std::fs::write(&i, &bytes[..bytes.len() - 1]).unwrap();
    let err = load_idx(&i, &l).unwrap_err();
    assert!(err.to_string().contains("truncated"), "{err}");
    assert!(matches!(
        load_idx(&dir.path().join("missing"), &l),
        Err(HarnessError::Io { .. })
    ));
}

#[test]
fn csv_examples() {
    let one = parse_csv("f0,f1,label\n0.5,1.0,1".as_bytes(), 2, "x").unwrap();
    assert_eq!(one, vec![Sample::new(vec![0.5, 1.0], 1)]);
    match parse_csv("f0,f1,label\n0.5,1.0,2".as_bytes(), 2, "x") {
        Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn generated_csv_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let raw = RawConfig::parse(&format!(
        "seed = 9\ndata.n_train = 10000\ndata.n_test = 0\nout = {}\n",
        dir.path().display()
    ))
    .unwrap();
    let cfg = RunConfig::from_raw(raw).unwrap();
    let written = gen_data(&cfg).unwrap();
    assert_eq!(written.n_train, 10_000);
    let loaded = load_csv(&written.train_csv, 10).unwrap();
    let expected = gradbound_harness::data::Dataset::load(&cfg).unwrap().train;
    assert_eq!(loaded.len(), 10_000);
    assert!(loaded == expected, "CSV round trip changed values");

    let mixture_cfg = RawConfig::load(written.mixture_config.as_ref().unwrap()).unwrap();
    let reloaded = gradbound_harness::config::mixture_from_config(&mixture_cfg).unwrap();
    assert_eq!(
        Some(reloaded),
        gradbound_harness::data::Dataset::load(&cfg).unwrap().mixture
    );
}
