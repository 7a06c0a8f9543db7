//! Covariance assembly: `Omega(tau)`, per-response `Sigma_r`, the
//! between-response correlation `Sigma_b`, the joint covariance
//! `C = Bdiag(L_r) (Sigma_b ⊗ I) Bdiag(L_r)^T` and its derivatives with
//! respect to the dispersion parameters.
//!
//! Dispersion parameters are ordered `rho` first (upper triangle of
//! `Sigma_b`, row-major), then `tau_1, ..., tau_R`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{MatrixPredictor, VarianceFn, VarianceKind};

/// Dispersion and correlation parameters `lambda = (rho, tau_1, ..., tau_R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionVector {
    pub tau: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

/// Number of correlation parameters for `r` responses.
pub fn n_rho(r: usize) -> usize {
    r * (r.saturating_sub(1)) / 2
}

/// Position of the pair `(a, b)`, `a < b`, in the row-major upper triangle.
pub fn rho_index(a: usize, b: usize, r: usize) -> usize {
    debug_assert!(a < b && b < r);
    a * (2 * r - a - 1) / 2 + (b - a - 1)
}

/// Pairs `(a, b)` in `rho` order.
pub fn rho_pairs(r: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_rho(r));
    for a in 0..r {
        for b in (a + 1)..r {
            out.push((a, b));
        }
    }
    out
}

impl DispersionVector {
    pub fn new(tau: Vec<Vec<f64>>, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != n_rho(tau.len()) {
            return Err(Error::LengthMismatch {
                what: "correlation parameters".into(),
                expected: n_rho(tau.len()),
                got: rho.len(),
            });
        }
        Ok(Self { tau, rho })
    }

    pub fn n_responses(&self) -> usize {
        self.tau.len()
    }

    pub fn len(&self) -> usize {
        self.rho.len() + self.tau.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.rho.clone();
        for t in &self.tau {
            v.extend_from_slice(t);
        }
        v
    }

    /// Same shape as `self` with values taken from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        debug_assert_eq!(flat.len(), self.len());
        let nr = self.rho.len();
        let rho = flat[..nr].to_vec();
        let mut pos = nr;
        let tau = self
            .tau
            .iter()
            .map(|t| {
                let out = flat[pos..pos + t.len()].to_vec();
                pos += t.len();
                out
            })
            .collect();
        Self { tau, rho }
    }

    /// Flat index of `tau[r][d]`.
    pub fn tau_index(&self, r: usize, d: usize) -> usize {
        self.rho.len() + self.tau[..r].iter().map(Vec::len).sum::<usize>() + d
    }
}

/// `Omega = sum_d tau_d Z_d` (identity covariance link).
pub fn build_omega(tau: &[f64], z: &MatrixPredictor) -> Result<DMatrix<f64>> {
    if tau.len() != z.len() {
        return Err(Error::LengthMismatch {
            what: "dispersion parameters vs matrix predictor".into(),
            expected: z.len(),
            got: tau.len(),
        });
    }
    let n = z.dim();
    let mut omega = DMatrix::zeros(n, n);
    for (t, zd) in tau.iter().zip(z.components()) {
        omega += zd * *t;
    }
    Ok(omega)
}

/// Diagonal of `V(mu)^{1/2}`, with the binomial variance divided by the
/// number of trials when given.
pub fn variance_sqrt(
    mu: &DVector<f64>,
    var: &VarianceFn,
    ntrial: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let mut v = var.eval(mu)?;
    if let Some(n) = ntrial {
        if n.len() != v.len() {
            return Err(Error::LengthMismatch {
                what: "ntrial".into(),
                expected: v.len(),
                got: n.len(),
            });
        }
        v.component_div_assign(n);
    }
    Ok(v.map(f64::sqrt))
}

/// `diag(s) M diag(s)`.
fn scale_both(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| s[i] * m[(i, j)] * s[j])
}

/// `Sigma_r = V^{1/2} Omega V^{1/2}`, plus `diag(mu)` for Poisson-Tweedie.
pub fn build_sigma_r(
    mu: &DVector<f64>,
    var: &VarianceFn,
    omega: &DMatrix<f64>,
    ntrial: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    if omega.nrows() != mu.len() || omega.ncols() != mu.len() {
        return Err(Error::LengthMismatch {
            what: "Omega vs mean vector".into(),
            expected: mu.len(),
            got: omega.nrows(),
        });
    }
    let s = variance_sqrt(mu, var, ntrial)?;
    let mut sigma = scale_both(omega, &s);
    if var.kind == VarianceKind::PoissonTweedie {
        for i in 0..mu.len() {
            sigma[(i, i)] += mu[i];
        }
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Sigma_r".into()));
    }
    Ok(sigma)
}

/// Correlation matrix with unit diagonal and `rho` in the upper triangle.
pub fn build_sigma_b(rho: &[f64], r: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(r, r);
    for (k, (a, b)) in rho_pairs(r).into_iter().enumerate() {
        m[(a, b)] = rho[k];
        m[(b, a)] = rho[k];
    }
    m
}

/// Joint covariance with its Cholesky factorization.
#[derive(Clone, Debug)]
pub struct JointCovariance {
    c: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl JointCovariance {
    pub fn new(c: DMatrix<f64>, lambda: &[f64]) -> Result<Self> {
        let chol = cholesky(&c).ok_or_else(|| Error::NotPositiveDefinite {
            what: "joint covariance C".into(),
            lambda: lambda.to_vec(),
        })?;
        Ok(Self { c, chol })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        crate::linalg::symmetrize(&mut inv);
        inv
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }
}

fn lower_factors(sigmas: &[DMatrix<f64>], lambda: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    sigmas
        .iter()
        .enumerate()
        .map(|(r, s)| {
            cholesky(s).map(|c| c.l()).ok_or_else(|| Error::NotPositiveDefinite {
                what: format!("Sigma of response {}", r + 1),
                lambda: lambda.to_vec(),
            })
        })
        .collect()
}

fn assemble_joint(sigmas: &[DMatrix<f64>], factors: &[DMatrix<f64>], rho: &[f64]) -> DMatrix<f64> {
    let r = sigmas.len();
    let n = sigmas[0].nrows();
    let mut c = DMatrix::zeros(n * r, n * r);
    for a in 0..r {
        c.view_mut((a * n, a * n), (n, n)).copy_from(&sigmas[a]);
    }
    for (k, (a, b)) in rho_pairs(r).into_iter().enumerate() {
        if rho[k] == 0.0 {
            continue;
        }
        let block = (&factors[a] * factors[b].transpose()) * rho[k];
        c.view_mut((a * n, b * n), (n, n)).copy_from(&block);
        c.view_mut((b * n, a * n), (n, n)).copy_from(&block.transpose());
    }
    c
}

fn check_sigma_b(rho: &[f64], r: usize, lambda: &[f64]) -> Result<()> {
    if rho.len() != n_rho(r) {
        return Err(Error::LengthMismatch {
            what: "correlation parameters".into(),
            expected: n_rho(r),
            got: rho.len(),
        });
    }
    if cholesky(&build_sigma_b(rho, r)).is_none() {
        return Err(Error::NotPositiveDefinite {
            what: "between-response correlation matrix".into(),
            lambda: lambda.to_vec(),
        });
    }
    Ok(())
}

/// Generalized Kronecker product of the per-response covariances.
pub fn build_joint_c(sigmas: &[DMatrix<f64>], rho: &[f64]) -> Result<JointCovariance> {
    let r = sigmas.len();
    if r == 0 {
        return Err(Error::InvalidSpec("no responses".into()));
    }
    let n = sigmas[0].nrows();
    if let Some(bad) = sigmas.iter().find(|s| s.nrows() != n || s.ncols() != n) {
        return Err(Error::LengthMismatch {
            what: "Sigma_r dimensions".into(),
            expected: n,
            got: bad.nrows(),
        });
    }
    check_sigma_b(rho, r, rho)?;
    let factors = lower_factors(sigmas, rho)?;
    JointCovariance::new(assemble_joint(sigmas, &factors, rho), rho)
}

/// Everything needed to evaluate `C` and its dispersion derivatives at one point.
#[derive(Clone, Debug)]
pub struct CovarianceState {
    sqrt_v: Vec<DVector<f64>>,
    sigmas: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
    z: Vec<MatrixPredictor>,
    lambda: DispersionVector,
    joint: JointCovariance,
}

impl CovarianceState {
    pub fn new(
        mus: &[DVector<f64>],
        variances: &[VarianceFn],
        zs: &[MatrixPredictor],
        ntrials: &[Option<DVector<f64>>],
        lambda: &DispersionVector,
    ) -> Result<Self> {
        let r = mus.len();
        if variances.len() != r || zs.len() != r || ntrials.len() != r || lambda.tau.len() != r {
            return Err(Error::LengthMismatch {
                what: "per-response covariance inputs".into(),
                expected: r,
                got: lambda.tau.len(),
            });
        }
        let flat = lambda.to_flat();
        check_sigma_b(&lambda.rho, r, &flat)?;
        let mut sqrt_v = Vec::with_capacity(r);
        let mut sigmas = Vec::with_capacity(r);
        for i in 0..r {
            let omega = build_omega(&lambda.tau[i], &zs[i])?;
            sigmas.push(build_sigma_r(&mus[i], &variances[i], &omega, ntrials[i].as_ref())?);
            sqrt_v.push(variance_sqrt(&mus[i], &variances[i], ntrials[i].as_ref())?);
        }
        let factors = lower_factors(&sigmas, &flat)?;
        let joint = JointCovariance::new(assemble_joint(&sigmas, &factors, &lambda.rho), &flat)?;
        Ok(Self {
            sqrt_v,
            sigmas,
            factors,
            z: zs.to_vec(),
            lambda: lambda.clone(),
            joint,
        })
    }

    pub fn joint(&self) -> &JointCovariance {
        &self.joint
    }

    pub fn c(&self) -> &DMatrix<f64> {
        self.joint.matrix()
    }

    pub fn sigmas(&self) -> &[DMatrix<f64>] {
        &self.sigmas
    }

    fn n(&self) -> usize {
        self.sigmas[0].nrows()
    }

    /// `dC/dlambda_i` for every dispersion parameter, in `lambda` order.
    pub fn dc_dlambda(&self) -> Vec<DMatrix<f64>> {
        let r = self.sigmas.len();
        let n = self.n();
        let mut out = Vec::with_capacity(self.lambda.len());
        for (a, b) in rho_pairs(r) {
            let mut m = DMatrix::zeros(n * r, n * r);
            let block = &self.factors[a] * self.factors[b].transpose();
            m.view_mut((a * n, b * n), (n, n)).copy_from(&block);
            m.view_mut((b * n, a * n), (n, n)).copy_from(&block.transpose());
            out.push(m);
        }
        for resp in 0..r {
            for zd in self.z[resp].components() {
                out.push(self.dc_dtau(resp, zd));
            }
        }
        out
    }

    fn dc_dtau(&self, resp: usize, zd: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.sigmas.len();
        let n = self.n();
        let dsigma = scale_both(zd, &self.sqrt_v[resp]);
        if r == 1 {
            return dsigma;
        }
        let mut m = DMatrix::zeros(n * r, n * r);
        m.view_mut((resp * n, resp * n), (n, n)).copy_from(&dsigma);
        let needs_factor = (0..r)
            .filter(|&b| b != resp)
            .any(|b| self.rho_between(resp, b) != 0.0);
        if !needs_factor {
            return m;
        }
        let dl = cholesky_factor_derivative(&self.factors[resp], &dsigma);
        for b in 0..r {
            if b == resp {
                continue;
            }
            let rho = self.rho_between(resp, b);
            if rho == 0.0 {
                continue;
            }
            let block = (&dl * self.factors[b].transpose()) * rho;
            m.view_mut((resp * n, b * n), (n, n)).copy_from(&block);
            m.view_mut((b * n, resp * n), (n, n)).copy_from(&block.transpose());
        }
        m
    }

    fn rho_between(&self, a: usize, b: usize) -> f64 {
        let r = self.sigmas.len();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.lambda.rho[rho_index(lo, hi, r)]
    }
}

/// Derivative of the lower Cholesky factor `L` of `Sigma` in the direction
/// `dSigma`: `dL = L Phi(L^{-1} dSigma L^{-T})`, where `Phi` keeps the
/// strict lower triangle and halves the diagonal.
pub fn cholesky_factor_derivative(l: &DMatrix<f64>, dsigma: &DMatrix<f64>) -> DMatrix<f64> {
    let left = l
        .solve_lower_triangular(dsigma)
        .expect("Cholesky factor has a nonzero diagonal");
    let mut inner = l
        .solve_lower_triangular(&left.transpose())
        .expect("Cholesky factor has a nonzero diagonal")
        .transpose();
    let n = inner.nrows();
    for j in 0..n {
        inner[(j, j)] *= 0.5;
        for i in 0..j {
            inner[(i, j)] = 0.0;
        }
    }
    l * inner
}
