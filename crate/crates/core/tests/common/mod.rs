#![allow(dead_code)]

use mcglm_core::covariance::{n_rho, CovarianceState, DispersionVector};
use mcglm_core::data::Dataset;
use mcglm_core::model::{
    grouping_matrix, LinkFn, MatrixPredictor, MatrixTerm, ModelSpec, OffsetTransform, ResponseSpec, VarianceFn,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian data with numeric covariates `x1..xp` and response `y`.
/// Returns the dataset and the design matrix `[1, x1, ..., xp]`.
pub fn gaussian_data(seed: u64, n: usize, p: usize) -> (Dataset, DMatrix<f64>) {
    let mut rng = rng(seed);
    let norm = Normal::new(0.0, 1.0).unwrap();
    let mut x = DMatrix::from_element(n, p + 1, 1.0);
    for j in 1..=p {
        for i in 0..n {
            x[(i, j)] = norm.sample(&mut rng) * (1.0 + j as f64);
        }
    }
    let beta = DVector::from_fn(p + 1, |j, _| 0.5 * j as f64 - 1.0);
    let noise = DVector::from_fn(n, |_, _| 1.5 * norm.sample(&mut rng));
    let y = &x * beta + noise;
    let mut ds = Dataset::new().with_numeric("y", y.iter().copied().collect()).unwrap();
    for j in 1..=p {
        ds = ds
            .with_numeric(&format!("x{j}"), x.column(j).iter().copied().collect())
            .unwrap();
    }
    (ds, x)
}

pub fn gaussian_formula(p: usize) -> String {
    let rhs: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    format!("y ~ {}", rhs.join(" + "))
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    xtx.try_inverse().unwrap() * x.transpose() * y
}

/// Two Gaussian responses `y1`, `y2` on covariates `x1`, `x2`, with a given
/// correlation between the responses.
pub fn bivariate_gaussian(seed: u64, n: usize, rho: f64) -> Dataset {
    let mut rng = rng(seed);
    let norm = Normal::new(0.0, 1.0).unwrap();
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut y1 = Vec::new();
    let mut y2 = Vec::new();
    for _ in 0..n {
        let a: f64 = norm.sample(&mut rng);
        let b: f64 = norm.sample(&mut rng);
        let e1: f64 = norm.sample(&mut rng);
        let e2: f64 = rho * e1 + (1.0 - rho * rho).sqrt() * norm.sample(&mut rng);
        x1.push(a);
        x2.push(b);
        y1.push(1.0 + 2.0 * a - b + e1);
        y2.push(-0.5 + 0.3 * a + 1.5 * b + 2.0 * e2);
    }
    Dataset::new()
        .with_numeric("y1", y1)
        .unwrap()
        .with_numeric("y2", y2)
        .unwrap()
        .with_numeric("x1", x1)
        .unwrap()
        .with_numeric("x2", x2)
        .unwrap()
}

/// Balanced layout with the term structure `block(5) + water(3) * pot(5)`
/// and three correlated Gaussian responses.
pub fn soya_like(seed: u64) -> Dataset {
    let mut rng = rng(seed);
    let norm = Normal::new(0.0, 1.0).unwrap();
    let blocks = ["I", "II", "III", "IV", "V"];
    let waters = ["37.5", "50", "62.5"];
    let pots = ["0", "30", "60", "120", "180"];
    let mut cols: [Vec<String>; 3] = Default::default();
    let mut ys: [Vec<f64>; 3] = Default::default();
    for (bi, b) in blocks.iter().enumerate() {
        for (wi, w) in waters.iter().enumerate() {
            for (pi, p) in pots.iter().enumerate() {
                cols[0].push(b.to_string());
                cols[1].push(w.to_string());
                cols[2].push(p.to_string());
                let mean = 10.0 + 0.4 * bi as f64 + 1.5 * wi as f64 + 2.0 * (pi as f64).sqrt()
                    + 0.3 * (wi * pi) as f64;
                let common: f64 = norm.sample(&mut rng);
                for (r, y) in ys.iter_mut().enumerate() {
                    let own: f64 = norm.sample(&mut rng);
                    y.push(mean * (1.0 + 0.2 * r as f64) + 0.6 * common + 0.8 * own);
                }
            }
        }
    }
    Dataset::new()
        .with_factor("block", &cols[0])
        .unwrap()
        .with_factor("water", &cols[1])
        .unwrap()
        .with_factor("pot", &cols[2])
        .unwrap()
        .with_numeric("grain", ys[0].clone())
        .unwrap()
        .with_numeric("seeds", ys[1].clone())
        .unwrap()
        .with_numeric("viablepeds", ys[2].clone())
        .unwrap()
}

pub fn soya_spec(responses: &[&str]) -> ModelSpec {
    let rs = responses
        .iter()
        .map(|r| ResponseSpec::gaussian(&format!("{r} ~ block + water * pot")).unwrap())
        .collect();
    ModelSpec::new(rs).unwrap()
}

/// Two count responses with a `METHOD * SEX` layout, a grouping column and
/// an exposure column.
pub fn hunting_like(seed: u64, groups: usize, per_group: usize) -> Dataset {
    let mut rng = rng(seed);
    let norm = Normal::new(0.0, 1.0).unwrap();
    let mut method = Vec::new();
    let mut sex = Vec::new();
    let mut group = Vec::new();
    let mut offset = Vec::new();
    let mut bd = Vec::new();
    let mut ot = Vec::new();
    for g in 0..groups {
        let m = if g % 2 == 0 { "Escopeta" } else { "Trampa" };
        let re1: f64 = 0.4 * norm.sample(&mut rng);
        let re2: f64 = 0.3 * norm.sample(&mut rng);
        for k in 0..per_group {
            let s = if k % 2 == 0 { "Female" } else { "Male" };
            let off = rng.random_range(5.0..15.0f64);
            let mut eta1 = (0.2f64).ln() + re1;
            let mut eta2 = (0.05f64).ln() + re2;
            if m == "Trampa" {
                eta1 -= 0.8;
                eta2 += 0.2;
            }
            if s == "Male" {
                eta1 += 0.5;
                eta2 += 0.1;
            }
            let l1 = off * eta1.exp();
            let l2 = off * eta2.exp();
            bd.push(Poisson::new(l1).unwrap().sample(&mut rng));
            ot.push(Poisson::new(l2).unwrap().sample(&mut rng));
            method.push(m.to_string());
            sex.push(s.to_string());
            group.push(format!("G{g}"));
            offset.push(off);
        }
    }
    Dataset::new()
        .with_numeric("BD", bd)
        .unwrap()
        .with_numeric("OT", ot)
        .unwrap()
        .with_factor("METHOD", &method)
        .unwrap()
        .with_factor("SEX", &sex)
        .unwrap()
        .with_factor("HUNTER.MONTH", &group)
        .unwrap()
        .with_numeric("OFFSET", offset)
        .unwrap()
}

pub fn hunting_spec() -> ModelSpec {
    let mk = |resp: &str| {
        ResponseSpec::new(
            &format!("{resp} ~ METHOD * SEX"),
            LinkFn::Log,
            VarianceFn::poisson_tweedie(1.0),
        )
        .unwrap()
        .with_matrix_pred(vec![
            MatrixTerm::Identity,
            MatrixTerm::Grouping {
                column: "HUNTER.MONTH".into(),
            },
        ])
        .with_offset("OFFSET", OffsetTransform::Log)
    };
    ModelSpec::new(vec![mk("BD"), mk("OT")]).unwrap()
}

/// Symmetric positive definite `n x n` matrix with a controlled spectrum.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * (0.5 + n as f64 * 0.1)
}

pub fn assert_symmetric_psd(m: &DMatrix<f64>) {
    let asym = (m - m.transpose()).amax();
    assert!(asym <= 1e-8 * m.amax().max(1.0), "asymmetry {asym}");
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let min = eig.min();
    assert!(min >= -1e-8 * m.amax().max(1.0), "min eigenvalue {min}");
}

/// Inputs of a covariance state: means, variance functions, matrix
/// predictors, trial counts and dispersion parameters.
pub struct CovCase {
    pub mus: Vec<DVector<f64>>,
    pub variances: Vec<VarianceFn>,
    pub zs: Vec<MatrixPredictor>,
    pub ntrials: Vec<Option<DVector<f64>>>,
    pub lambda: DispersionVector,
}

impl CovCase {
    pub fn state(&self, lambda: &DispersionVector) -> CovarianceState {
        CovarianceState::new(&self.mus, &self.variances, &self.zs, &self.ntrials, lambda).unwrap()
    }
}

/// Random positive definite covariance state with `r` responses and `d`
/// matrix-predictor components each, cycling through the variance kinds.
pub fn random_cov_case(rng: &mut impl Rng, n: usize, r: usize, d: usize) -> CovCase {
    let mut mus = Vec::new();
    let mut variances = Vec::new();
    let mut zs = Vec::new();
    let mut ntrials = Vec::new();
    let mut tau = Vec::new();
    for k in 0..r {
        let kind = rng.random_range(0..4usize);
        let (mu, var, nt) = match kind {
            0 => (
                DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
                VarianceFn::constant(),
                None,
            ),
            1 => (
                DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0)),
                VarianceFn::tweedie(rng.random_range(1.0..2.0)),
                None,
            ),
            2 => (
                DVector::from_fn(n, |_, _| rng.random_range(0.5..5.0)),
                VarianceFn::poisson_tweedie(1.0),
                None,
            ),
            _ => (
                DVector::from_fn(n, |_, _| rng.random_range(0.2..0.8)),
                VarianceFn::binomial(1.0),
                Some(DVector::from_fn(n, |_, _| rng.random_range(1..10) as f64)),
            ),
        };
        let groups: Vec<String> = (0..n).map(|i| format!("g{}", (i + k) % 3)).collect();
        let mut comps = vec![DMatrix::identity(n, n)];
        if d > 1 {
            comps.push(grouping_matrix(&groups));
        }
        let mut t = vec![rng.random_range(0.8..2.0)];
        for _ in 1..d {
            t.push(rng.random_range(0.05..0.3));
        }
        mus.push(mu);
        variances.push(var);
        zs.push(MatrixPredictor::new(comps).unwrap());
        ntrials.push(nt);
        tau.push(t);
    }
    let rho = (0..n_rho(r)).map(|_| rng.random_range(-0.4..0.4)).collect();
    CovCase {
        mus,
        variances,
        zs,
        ntrials,
        lambda: DispersionVector::new(tau, rho).unwrap(),
    }
}

/// Largest relative Frobenius error between the analytic `dC/dlambda` and
/// central differences of the assembled `C`.
pub fn dc_fd_max_rel_error(case: &CovCase, step: f64) -> f64 {
    let analytic = case.state(&case.lambda).dc_dlambda();
    let flat = case.lambda.to_flat();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut up = flat.clone();
        let mut dn = flat.clone();
        up[i] += step;
        dn[i] -= step;
        let cu = case.state(&case.lambda.with_flat(&up)).c().clone();
        let cd = case.state(&case.lambda.with_flat(&dn)).c().clone();
        let fd = (cu - cd) / (2.0 * step);
        let err = (a - &fd).norm() / fd.norm().max(1e-12);
        worst = worst.max(err);
    }
    worst
}

/// Random `(theta, V, L, c)` with `V` symmetric positive definite and `L`
/// of full row rank `s`.
pub fn random_wald_instance(
    rng: &mut impl Rng,
    h: usize,
    s: usize,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let theta = DVector::from_fn(h, |_, _| rng.random_range(-3.0..3.0));
    let v = random_spd(rng, h);
    let l = loop {
        let l = DMatrix::from_fn(s, h, |_, _| rng.random_range(-2.0..2.0));
        if l.clone().svd(false, false).singular_values.min() > 0.1 {
            break l;
        }
    };
    let c = DVector::from_fn(s, |_, _| rng.random_range(-1.0..1.0));
    (theta, v, l, c)
}

/// Random invertible `s x s` matrix with bounded condition number.
pub fn random_invertible(rng: &mut impl Rng, s: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(s, s, |_, _| rng.random_range(-2.0..2.0));
        let sv = m.clone().svd(false, false).singular_values;
        if sv.min() > 0.2 {
            return m;
        }
    }
}

/// `W` by explicit inversion, independent of the library's Cholesky path.
pub fn brute_force_wald(theta: &DVector<f64>, v: &DMatrix<f64>, l: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let d = l * theta - c;
    let m = (l * v * l.transpose()).try_inverse().unwrap();
    (d.transpose() * m * d)[(0, 0)]
}
