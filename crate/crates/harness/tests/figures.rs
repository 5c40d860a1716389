use gradbound_harness::config::{RawConfig, RunConfig};
use gradbound_harness::data::Dataset;
use gradbound_harness::figures::{depth_table, lambda_table, reproduce_figures};

fn config(extra: &str) -> RunConfig {
    let text = format!(
        "data.n_train = 1000\ndata.n_test = 0\nbound.n_prior = 64\nbound.n_data = 2048\nbound.n_posterior = 4\n{extra}"
    );
    RunConfig::from_raw(RawConfig::parse(&text).unwrap()).unwrap()
}

#[test]
fn figure_tables_have_expected_shape_and_trends() {
    let cfg = config("sweep.depths = 1,2,3\nsweep.lambdas = sqrt_m,m/2,m\nsweep.prior_variances = 0,0.001,0.01\n");
    let data = Dataset::load(&cfg).unwrap();
    let tables = reproduce_figures(&cfg, &data).unwrap();
    let names: Vec<&str> = tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["prior_variance_loss", "prior_variance_grad_norm", "lambda_complexity", "depth_complexity"]);
    assert_eq!(tables[0].rows.len(), 9);
    assert_eq!(tables[2].rows.len(), 9);

    let loss = tables[0].column("mean_loss").unwrap();
    for i in [0, 3, 6] {
        assert!((loss[i] - 10f64.ln()).abs() < 1e-12, "zero prior gives uniform logits");
    }

    let bound_term = tables[2].column("bound_term").unwrap();
    for depth in bound_term.chunks(3) {
        assert!(depth.windows(2).all(|w| w[1] <= w[0]), "{depth:?}");
    }

    let c = tables[3].column("complexity").unwrap();
    assert_eq!(c.len(), 3);
    assert!(c.windows(2).all(|w| w[1] <= w[0]), "depth trend {c:?}");

    let csv = tables[3].to_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("depth,params,lambda,complexity"));
}

#[test]
fn single_point_grids_give_single_rows() {
    let cfg = config("train.epochs = 2\nsweep.depths = 2\nsweep.lambdas = m\nsweep.prior_variances = 0.01\n");
    let data = Dataset::load(&cfg).unwrap();
    let archs =
        gradbound_harness::figures::depth_archs(&cfg, &data, gradbound_harness::commands::sweep_widths(&cfg)).unwrap();
    assert_eq!(
        lambda_table(&cfg, &data, &archs, Some(10.0), "l").unwrap().rows.len(),
        1
    );
    assert_eq!(depth_table(&cfg, &data, "d").unwrap().rows.len(), 1);
    for t in reproduce_figures(&cfg, &data).unwrap() {
        assert_eq!(t.rows.len(), 1, "{}", t.name);
    }
}
