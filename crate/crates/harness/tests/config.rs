use gradbound_harness::config::{DataSourceConfig, LambdaSpec, RawConfig, RunConfig, SigmaYConfig};
use gradbound_harness::HarnessError;

#[test]
fn unknown_keys_are_rejected() {
    let err = RawConfig::parse("seed = 1\nmodel.detph = 3\n").unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
    assert!(err.to_string().contains("model.detph"));
    let mut raw = RawConfig::default();
    assert!(raw.apply_override("bound.lamda=m").is_err());
}

#[test]
fn overrides_replace_file_values() {
    let mut raw = RawConfig::parse("bound.lambda = m/2\ntrain.epochs = 3\n").unwrap();
    raw.apply_override("bound.lambda=sqrt_m").unwrap();
    let cfg = RunConfig::from_raw(raw).unwrap();
    assert_eq!(cfg.bound.lambda, LambdaSpec::SqrtM);
    assert_eq!(cfg.train.epochs, 3);
}

#[test]
fn hash_ignores_field_order_and_explicit_defaults() {
    let a = RawConfig::parse("seed = 4\nbound.delta = 0.05\nmodel.depth = 2\n").unwrap();
    let b = RawConfig::parse("model.depth=2\n# reordered\nbound.delta = 0.05\nseed = 4\n").unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = RawConfig::parse("seed = 4\nbound.delta = 0.05\nmodel.depth = 2\ntrain.epochs = 50\n").unwrap();
    assert_eq!(a.hash(), c.hash());
    let d = RawConfig::parse("seed = 5\nbound.delta = 0.05\nmodel.depth = 2\n").unwrap();
    assert_ne!(a.hash(), d.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn exactly_one_data_source() {
    let raw = RawConfig::parse("data.source = synthetic\ndata.csv = train.csv\n").unwrap();
    assert!(RunConfig::from_raw(raw)
        .unwrap_err()
        .to_string()
        .contains("exactly one"));
    let raw = RawConfig::parse("data.source = csv\ndata.images = a\n").unwrap();
    assert!(RunConfig::from_raw(raw).is_err());
    let raw = RawConfig::parse("data.source = idx\ndata.labels = a\n").unwrap();
    assert!(RunConfig::from_raw(raw).is_err());
}

#[test]
fn referenced_files_must_exist() {
    let raw =
        RawConfig::parse("data.source = csv\ndata.csv = /nonexistent/train.csv\ndata.sigma_y = estimated\n").unwrap();
    assert!(RunConfig::from_raw(raw)
        .unwrap_err()
        .to_string()
        .contains("no such file"));
}

#[test]
fn typed_values_are_validated() {
    for bad in [
        "bound.delta = 1.5",
        "bound.prior_variance = -1",
        "train.batch_size = 0",
        "model.arch = transformer",
        "bound.kind = pac",
        "bound.lambda = 2m",
        "sweep.depths = 0,1",
        "data.sigma_y = -2",
        "seed = -1",
    ] {
        let raw = RawConfig::parse(bad).unwrap();
        assert!(RunConfig::from_raw(raw).is_err(), "{bad} accepted");
    }
}

#[test]
fn mixture_sigma_needs_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    std::fs::write(&p, "a,label\n1,0\n").unwrap();
    let text = format!("data.source = csv\ndata.csv = {}\n", p.display());
    assert!(RunConfig::from_raw(RawConfig::parse(&text).unwrap()).is_err());
    let cfg = RunConfig::from_raw(RawConfig::parse(&format!("{text}data.sigma_y = 0.5\n")).unwrap()).unwrap();
    assert_eq!(cfg.sigma_y, SigmaYConfig::Scalar(0.5));
    assert!(matches!(cfg.data, DataSourceConfig::Csv { .. }));
}
