mod common;

use common::*;
use mcglm_core::covariance::DispersionVector;
use mcglm_core::estimator::{cross_blocks, fit, pearson_fn, quasi_score, BoundModel, FitOptions};
use mcglm_core::model::{ModelSpec, ResponseSpec};
use mcglm_core::Error;
use nalgebra::{DMatrix, DVector};

fn gaussian_spec(p: usize) -> ModelSpec {
    ModelSpec::new(vec![ResponseSpec::gaussian(&gaussian_formula(p)).unwrap()]).unwrap()
}

fn no_cumulants() -> FitOptions {
    FitOptions {
        empirical_cumulants: false,
        ..FitOptions::default()
    }
}

#[test]
fn gaussian_fit_matches_ols() {
    for seed in 0..3 {
        let (ds, x) = gaussian_data(seed, 100, 3);
        let y = DVector::from_column_slice(ds.numeric("y").unwrap());
        let fitted = fit(&gaussian_spec(3), &ds, &no_cumulants()).unwrap();
        assert!(fitted.converged);
        let b = ols(&x, &y);
        assert!((&fitted.beta - &b).amax() < 1e-8);
        let rss = (&y - &x * &b).norm_squared();
        assert!((fitted.lambda.tau[0][0] - rss / 100.0).abs() < 1e-8);

        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let vcov = fitted.vcov_star();
        for j in 0..4 {
            let expected = fitted.lambda.tau[0][0] * xtx_inv[(j, j)];
            assert!((vcov[(j, j)] - expected).abs() < 1e-6 * expected.max(1.0));
        }
        assert_symmetric_psd(&fitted.godambe_inv);
    }
}

#[test]
fn quasi_score_reduces_to_normal_equations() {
    let (ds, x) = gaussian_data(7, 30, 2);
    let model = BoundModel::bind(&gaussian_spec(2), &ds).unwrap();
    let lambda = DispersionVector::new(vec![vec![1.0]], vec![]).unwrap();
    let beta = DVector::from_vec(vec![0.3, -0.2, 0.1]);
    let y = DVector::from_column_slice(ds.numeric("y").unwrap());
    let qs = quasi_score(&model, &beta, &lambda).unwrap();
    let expected = x.transpose() * (&y - &x * &beta);
    assert!((&qs.psi - expected).amax() < 1e-10);
    assert_eq!(qs.sensitivity, -&qs.variability);

    let at_ols = quasi_score(&model, &ols(&x, &y), &lambda).unwrap();
    assert!(at_ols.psi.amax() < 1e-9);
}

#[test]
fn pearson_root_is_mean_squared_residual() {
    let (ds, x) = gaussian_data(11, 50, 1);
    let model = BoundModel::bind(&gaussian_spec(1), &ds).unwrap();
    let y = DVector::from_column_slice(ds.numeric("y").unwrap());
    let beta = ols(&x, &y);
    let tau = (&y - &x * &beta).norm_squared() / 50.0;
    let lambda = DispersionVector::new(vec![vec![tau]], vec![]).unwrap();
    let pf = pearson_fn(&model, &beta, &lambda, false).unwrap();
    assert!(pf.psi[0].abs() < 1e-10);
    assert!((pf.variability[(0, 0)].abs() - 2.0 * pf.sensitivity[(0, 0)].abs()).abs() < 1e-10);

    let other = DispersionVector::new(vec![vec![tau * 1.3]], vec![]).unwrap();
    assert!(pearson_fn(&model, &beta, &other, false).unwrap().psi[0].abs() > 1e-3);
}

#[test]
fn pearson_sensitivity_symmetric() {
    let ds = hunting_like(3, 10, 4);
    let spec = hunting_spec();
    let model = BoundModel::bind(&spec, &ds).unwrap();
    let beta = model.initial_beta().unwrap();
    let lambda = DispersionVector::new(vec![vec![0.5, 0.1], vec![0.4, 0.05]], vec![0.2]).unwrap();
    let pf = pearson_fn(&model, &beta, &lambda, true).unwrap();
    assert_eq!(pf.psi.len(), 5);
    assert!((&pf.sensitivity - pf.sensitivity.transpose()).amax() < 1e-10);
    assert!((&pf.variability - pf.variability.transpose()).amax() < 1e-10);
}

/// Expected derivative of the quasi-score in lambda is zero; the sample
/// derivative at the solution is small on symmetric Gaussian data.
#[test]
fn cross_sensitivity_beta_lambda_vanishes() {
    let (ds, _) = gaussian_data(5, 200, 2);
    let spec = gaussian_spec(2);
    let fitted = fit(&spec, &ds, &FitOptions::default()).unwrap();
    let model = BoundModel::bind(&spec, &ds).unwrap();
    let cb = cross_blocks(&model, &fitted.beta, &fitted.lambda, true).unwrap();
    assert_eq!(cb.s_beta_lambda.shape(), (3, 1));
    assert_eq!(cb.s_lambda_beta.shape(), (1, 3));
    assert_eq!(cb.v_lambda_beta.shape(), (1, 3));

    let h = 1e-5;
    let tau = fitted.lambda.tau[0][0];
    let plus = DispersionVector::new(vec![vec![tau + h]], vec![]).unwrap();
    let minus = DispersionVector::new(vec![vec![tau - h]], vec![]).unwrap();
    let fd = (quasi_score(&model, &fitted.beta, &plus).unwrap().psi
        - quasi_score(&model, &fitted.beta, &minus).unwrap().psi)
        / (2.0 * h);
    assert!((fd - &cb.s_beta_lambda.column(0)).amax() < 1e-3);
    assert!(cb.s_lambda_beta.amax() < 1e-12);
}

#[test]
fn independent_responses_match_separate_fits() {
    let ds = bivariate_gaussian(21, 150, 0.0);
    let joint = ModelSpec::new(vec![
        ResponseSpec::gaussian("y1 ~ x1 + x2").unwrap(),
        ResponseSpec::gaussian("y2 ~ x1 + x2").unwrap(),
    ])
    .unwrap();
    let fj = fit(&joint, &ds, &FitOptions::default()).unwrap();
    for (r, name) in ["y1", "y2"].iter().enumerate() {
        let single = ModelSpec::new(vec![ResponseSpec::gaussian(&format!("{name} ~ x1 + x2")).unwrap()]).unwrap();
        let fs = fit(&single, &ds, &FitOptions::default()).unwrap();
        let span = fj.beta_spans[r].clone();
        assert!((fj.beta.rows(span.start, span.len()) - &fs.beta).amax() < 1e-6);
    }
    assert_symmetric_psd(&fj.godambe_inv);
}

#[test]
fn correlated_responses_recover_rho() {
    let ds = bivariate_gaussian(4, 400, 0.6);
    let spec = ModelSpec::new(vec![
        ResponseSpec::gaussian("y1 ~ x1 + x2").unwrap(),
        ResponseSpec::gaussian("y2 ~ x1 + x2").unwrap(),
    ])
    .unwrap();
    let f = fit(&spec, &ds, &FitOptions::default()).unwrap();
    assert!(f.converged);
    assert!((f.lambda.rho[0] - 0.6).abs() < 0.1, "rho = {}", f.lambda.rho[0]);
    assert!((f.lambda.tau[1][0] - 4.0).abs() < 1.0);
    assert_symmetric_psd(&f.godambe_inv);
}

#[test]
fn estimating_functions_vanish_at_convergence_gaussian() {
    let opts = FitOptions::default();
    let ds = bivariate_gaussian(8, 200, 0.4);
    let spec = ModelSpec::new(vec![
        ResponseSpec::gaussian("y1 ~ x1 + x2").unwrap(),
        ResponseSpec::gaussian("y2 ~ x1 + x2").unwrap(),
    ])
    .unwrap();
    let f = fit(&spec, &ds, &opts).unwrap();
    assert!(f.converged);
    let model = BoundModel::bind(&spec, &ds).unwrap();
    let qs = quasi_score(&model, &f.beta, &f.lambda).unwrap();
    let pf = pearson_fn(&model, &f.beta, &f.lambda, true).unwrap();
    assert!(qs.psi.amax() < 10.0 * opts.tol, "{}", qs.psi.amax());
    assert!(pf.psi.amax() < 10.0 * opts.tol, "{}", pf.psi.amax());
}

/// The estimating functions grow with N, so for the count model the bound
/// is taken relative to the sensitivity scale.
#[test]
fn estimating_functions_vanish_at_convergence_counts() {
    let ds = hunting_like(9, 20, 6);
    let spec = hunting_spec();
    let opts = FitOptions::default();
    let f = fit(&spec, &ds, &opts).unwrap();
    assert!(f.converged, "iterations {}", f.iterations);
    let model = BoundModel::bind(&spec, &ds).unwrap();
    let qs = quasi_score(&model, &f.beta, &f.lambda).unwrap();
    let pf = pearson_fn(&model, &f.beta, &f.lambda, true).unwrap();
    let sb = qs.sensitivity.diagonal().amax().max(1.0);
    let sl = pf.sensitivity.diagonal().amax().max(1.0);
    assert!(qs.psi.amax() < 10.0 * opts.tol * sb, "{} vs {}", qs.psi.amax(), sb);
    assert!(pf.psi.amax() < 10.0 * opts.tol * sl, "{} vs {}", pf.psi.amax(), sl);
    assert_symmetric_psd(&f.godambe_inv);
    let se = f.std_errors();
    assert!(se.iter().all(|s| s.is_finite() && *s > 0.0));
}

fn assert_same_fit(spec: &ModelSpec, ds: &mcglm_core::data::Dataset) {
    let opts = FitOptions {
        tol: 1e-10,
        ..FitOptions::default()
    };
    let f1 = fit(spec, ds, &opts).unwrap();
    let n = ds.n_rows();
    let order: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
    let f2 = fit(spec, &ds.permute_rows(&order), &opts).unwrap();
    assert!((&f1.beta - &f2.beta).amax() < 1e-8);
    let t1 = DVector::from_vec(f1.lambda.to_flat());
    let t2 = DVector::from_vec(f2.lambda.to_flat());
    assert!((t1 - t2).amax() < 1e-8);
}

/// Single response with a grouping structure: `C = Sigma` permutes with the rows.
#[test]
fn row_order_invariance_single_response() {
    let ds = hunting_like(12, 12, 5);
    let mut spec = hunting_spec();
    spec.responses.truncate(1);
    assert_same_fit(&spec, &ds);
}

/// Several responses with diagonal `Sigma_r`: the Cholesky factors are diagonal.
#[test]
fn row_order_invariance_diagonal_multivariate() {
    let ds = hunting_like(13, 12, 5);
    let mut spec = hunting_spec();
    for r in &mut spec.responses {
        r.matrix_pred.truncate(1);
    }
    assert_same_fit(&spec, &ds);
}

#[test]
fn rank_deficient_design_reports_columns() {
    let (ds, _) = gaussian_data(1, 20, 1);
    let x1 = ds.numeric("x1").unwrap().to_vec();
    let ds = ds.with_numeric("x2", x1.iter().map(|v| 2.0 * v).collect()).unwrap();
    let spec = ModelSpec::new(vec![ResponseSpec::gaussian("y ~ x1 + x2").unwrap()]).unwrap();
    match fit(&spec, &ds, &FitOptions::default()) {
        Err(Error::Rank { labels, .. }) => assert_eq!(labels, vec!["x2".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_convergence_is_flagged() {
    let ds = hunting_like(2, 10, 4);
    let opts = FitOptions {
        max_iter: 1,
        tol: 1e-12,
        ..FitOptions::default()
    };
    let f = fit(&hunting_spec(), &ds, &opts).unwrap();
    assert!(!f.converged);
    assert_eq!(f.iterations, 1);
    assert_eq!(f.trace.len(), 1);
}

#[test]
fn labels_follow_theta_star_order() {
    let ds = hunting_like(3, 8, 4);
    let f = fit(&hunting_spec(), &ds, &FitOptions::default()).unwrap();
    let labels = f.labels();
    assert_eq!(
        labels,
        [
            "beta10", "beta11", "beta12", "beta13", "beta20", "beta21", "beta22", "beta23", "tau11",
            "tau12", "tau21", "tau22"
        ]
    );
    assert_eq!(f.vcov_star().shape(), (12, 12));
    assert_eq!(f.godambe_inv.shape(), (13, 13));
    let theta = f.theta_star();
    assert_eq!(theta[f.tau_index(1, 1)], f.lambda.tau[1][1]);
    let _: DMatrix<f64> = f.vcov_star();
}
