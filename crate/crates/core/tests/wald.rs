mod common;

use common::{brute_force_wald, random_invertible, random_wald_instance, rng};
use mcglm_core::chisq::chisq_sf;
use mcglm_core::wald::{kronecker_l, parse_hypothesis, wald_statistic, Hypothesis};
use mcglm_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn w(theta: &DVector<f64>, v: &DMatrix<f64>, l: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let labels = vec![String::new(); l.nrows()];
    let hyp = Hypothesis::new(l.clone(), c.clone(), labels).unwrap();
    wald_statistic(theta, v, &hyp, "").unwrap().statistic
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_transformation_invariance(seed in any::<u64>(), s in 1usize..=4, extra in 0usize..4) {
        let mut rng = rng(seed);
        let (theta, v, l, c) = random_wald_instance(&mut rng, s + extra, s);
        let m = random_invertible(&mut rng, s);
        let base = w(&theta, &v, &l, &c);
        let moved = w(&theta, &v, &(&m * &l), &(&m * &c));
        prop_assert!((base - moved).abs() <= 1e-8 * base.max(1.0), "{base} vs {moved}");
    }

    #[test]
    fn nonnegative_and_matches_dense_oracle(seed in any::<u64>(), s in 1usize..=4, extra in 0usize..4) {
        let mut rng = rng(seed);
        let (theta, v, l, c) = random_wald_instance(&mut rng, s + extra, s);
        let got = w(&theta, &v, &l, &c);
        prop_assert!(got >= 0.0);
        let oracle = brute_force_wald(&theta, &v, &l, &c);
        prop_assert!((got - oracle).abs() <= 1e-8 * oracle.max(1.0));
    }

    #[test]
    fn zero_exactly_at_the_hypothesis(seed in any::<u64>(), s in 1usize..=4, extra in 0usize..4) {
        let mut rng = rng(seed);
        let (theta, v, l, _) = random_wald_instance(&mut rng, s + extra, s);
        let c = &l * &theta;
        prop_assert!(w(&theta, &v, &l, &c) < 1e-8);
        let mut off = c.clone();
        off[0] += 0.5;
        prop_assert!(w(&theta, &v, &l, &off) > 1e-8);
    }

    #[test]
    fn additive_under_diagonal_covariance(seed in any::<u64>(), h in 2usize..8) {
        let mut rng = rng(seed);
        let theta = DVector::from_fn(h, |_, _| rng.random_range(-3.0..3.0));
        let v = DMatrix::from_diagonal(&DVector::from_fn(h, |_, _| rng.random_range(0.1..4.0)));
        let i = rng.random_range(0..h);
        let j = (i + 1 + rng.random_range(0..h - 1)) % h;
        let sel = |cols: &[usize]| {
            let mut l = DMatrix::zeros(cols.len(), h);
            for (r, &k) in cols.iter().enumerate() {
                l[(r, k)] = 1.0;
            }
            l
        };
        let z1 = DVector::zeros(1);
        let joint = w(&theta, &v, &sel(&[i, j]), &DVector::zeros(2));
        let sum = w(&theta, &v, &sel(&[i]), &z1) + w(&theta, &v, &sel(&[j]), &z1);
        prop_assert!((joint - sum).abs() <= 1e-8 * sum.max(1.0));
    }

    #[test]
    fn p_value_delegates_to_chisq(seed in any::<u64>(), s in 1usize..=4) {
        let mut rng = rng(seed);
        let (theta, v, l, c) = random_wald_instance(&mut rng, s + 2, s);
        let hyp = Hypothesis::new(l, c, vec![String::new(); s]).unwrap();
        let res = wald_statistic(&theta, &v, &hyp, "").unwrap();
        prop_assert_eq!(res.df, s);
        prop_assert_eq!(res.p_value, chisq_sf(res.statistic, s).unwrap());
    }
}

#[test]
fn single_coefficient_matches_ratio() {
    let mut rng = rng(3);
    let (theta, v, _, _) = random_wald_instance(&mut rng, 5, 1);
    for j in 0..5 {
        let mut l = DMatrix::zeros(1, 5);
        l[(0, j)] = 1.0;
        let got = w(&theta, &v, &l, &DVector::zeros(1));
        let expected = theta[j] * theta[j] / v[(j, j)];
        assert!((got - expected).abs() < 1e-10 * expected.max(1.0));
    }
}

#[test]
fn scalar_example() {
    let theta = DVector::from_vec(vec![2.0]);
    let v = DMatrix::from_element(1, 1, 4.0);
    let l = DMatrix::from_element(1, 1, 1.0);
    assert!((w(&theta, &v, &l, &DVector::zeros(1)) - 1.0).abs() < 1e-15);
}

#[test]
fn kronecker_expansion() {
    let f = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let l = kronecker_l(&DMatrix::identity(2, 2), &f);
    assert_eq!(l, DMatrix::from_row_slice(2, 4, &[0., 1., 0., 0., 0., 0., 0., 1.]));
    assert_eq!(kronecker_l(&DMatrix::identity(3, 3), &DMatrix::identity(2, 2)), DMatrix::identity(6, 6));
}

#[test]
fn parse_equality_between_parameters() {
    let ls = labels(&["beta10", "beta11", "beta20", "beta21", "tau11", "tau12", "tau21", "tau22"]);
    let hyp = parse_hypothesis(&["tau12 = tau22"], &ls).unwrap();
    let mut expected = DMatrix::zeros(1, 8);
    expected[(0, 5)] = 1.0;
    expected[(0, 7)] = -1.0;
    assert_eq!(hyp.l, expected);
    assert_eq!(hyp.c, DVector::zeros(1));
    let hyp = parse_hypothesis(&["beta11 = 0.5", "beta21 = -1e-1"], &ls).unwrap();
    assert_eq!(hyp.c, DVector::from_vec(vec![0.5, -0.1]));
    assert!(matches!(
        parse_hypothesis(&["beta99 = 0"], &ls),
        Err(Error::UnknownLabel { .. })
    ));
}

#[test]
fn redundant_rows_are_rejected() {
    let theta = DVector::from_vec(vec![1.0, 2.0]);
    let v = DMatrix::identity(2, 2);
    let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
    let hyp = Hypothesis::homogeneous(l);
    assert!(matches!(wald_statistic(&theta, &v, &hyp, ""), Err(Error::Rank { .. })));
    let mut v = DMatrix::identity(2, 2);
    v[(1, 1)] = 0.0;
    let hyp = Hypothesis::homogeneous(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
    assert!(matches!(wald_statistic(&theta, &v, &hyp, ""), Err(Error::SingularHypothesis)));
}
