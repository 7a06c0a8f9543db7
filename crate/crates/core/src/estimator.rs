//! Estimating-function fitting: quasi-score for the regression parameters,
//! Pearson estimating function for the dispersion parameters, the modified
//! chaser algorithm and the inverse Godambe information.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{n_rho, CovarianceState, DispersionVector};
use crate::data::Dataset;
use crate::design::{build_design, DesignInfo};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, dependent_columns, symmetrize, trace_of_product};
use crate::model::{
    grouping_matrix, LinkFn, MatrixPredictor, MatrixTerm, ModelSpec, OffsetTransform, VarianceFn,
};

const MAX_HALVINGS: usize = 10;
const BETA_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-abs change of `(beta, lambda)`.
    pub tol: f64,
    /// Step factor for the dispersion update.
    pub alpha: f64,
    pub verbose: bool,
    /// Use empirical third and fourth cumulants of the residuals in the
    /// variability matrix. When false both are taken as zero.
    pub empirical_cumulants: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-4,
            alpha: 1.0,
            verbose: false,
            empirical_cumulants: true,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::InvalidSpec("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidSpec("tol must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidSpec("alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One chaser iteration, for the optional trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub psi_beta_max: f64,
    pub psi_lambda_max: f64,
    pub beta_halvings: usize,
    pub lambda_halvings: usize,
    pub max_change: f64,
}

/// A response with its design and data columns resolved.
#[derive(Debug, Clone)]
pub struct BoundResponse {
    pub design: DesignInfo,
    pub y: DVector<f64>,
    pub offset: DVector<f64>,
    pub ntrial: Option<DVector<f64>>,
    pub link: LinkFn,
    pub variance: VarianceFn,
    pub z: MatrixPredictor,
}

/// Model specification bound to a complete-case dataset.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub responses: Vec<BoundResponse>,
    pub n: usize,
    spans: Vec<Range<usize>>,
}

impl BoundModel {
    /// Binds `spec` to `data`; `data` must already be free of missing values
    /// in the bound columns.
    pub fn bind(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        let n = data.n_rows();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let mut responses = Vec::with_capacity(spec.responses.len());
        let mut spans = Vec::new();
        let mut k = 0;
        for (r, rs) in spec.responses.iter().enumerate() {
            let design = build_design(&rs.formula, data)?;
            let dependent = dependent_columns(&design.x);
            if !dependent.is_empty() {
                return Err(Error::Rank {
                    what: format!("design matrix of response {}", r + 1),
                    labels: dependent.iter().map(|&j| design.column_labels[j].clone()).collect(),
                });
            }
            let y = DVector::from_column_slice(data.numeric(&rs.formula.response)?);
            let offset = match &rs.offset_column {
                None => DVector::zeros(n),
                Some(col) => {
                    let raw = DVector::from_column_slice(data.numeric(col)?);
                    match rs.offset_transform {
                        OffsetTransform::None => raw,
                        OffsetTransform::Log => LinkFn::Log.apply_vec(&raw)?,
                    }
                }
            };
            let ntrial = match &rs.ntrial_column {
                None => None,
                Some(col) => {
                    let v = DVector::from_column_slice(data.numeric(col)?);
                    if let Some(i) = v.iter().position(|&t| !(t > 0.0)) {
                        return Err(Error::Domain { what: "ntrial", index: i, value: v[i] });
                    }
                    if let Some(i) = y.iter().position(|&t| !(0.0..=1.0).contains(&t)) {
                        return Err(Error::Domain {
                            what: "binomial proportion",
                            index: i,
                            value: y[i],
                        });
                    }
                    Some(v)
                }
            };
            let comps = rs
                .matrix_pred
                .iter()
                .map(|t| match t {
                    MatrixTerm::Identity => Ok(DMatrix::identity(n, n)),
                    MatrixTerm::Grouping { column } => {
                        Ok(grouping_matrix(&data.column(column)?.as_strings()))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            spans.push(k..k + design.n_cols());
            k += design.n_cols();
            responses.push(BoundResponse {
                design,
                y,
                offset,
                ntrial,
                link: rs.link,
                variance: rs.variance_fn(),
                z: MatrixPredictor::new(comps)?,
            });
        }
        Ok(Self { responses, n, spans })
    }

    pub fn n_beta(&self) -> usize {
        self.spans.last().map_or(0, |s| s.end)
    }

    pub fn beta_spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    pub fn n_responses(&self) -> usize {
        self.responses.len()
    }

    /// Dispersion vector of the right shape filled with starting values.
    pub fn initial_lambda(&self) -> DispersionVector {
        let tau = self
            .responses
            .iter()
            .map(|r| (0..r.z.len()).map(|d| if d == 0 { 1.0 } else { 0.1 }).collect())
            .collect();
        DispersionVector {
            tau,
            rho: vec![0.0; n_rho(self.n_responses())],
        }
    }

    /// Least-squares fit of the linearized response on each design.
    pub fn initial_beta(&self) -> Result<DVector<f64>> {
        let mut beta = DVector::zeros(self.n_beta());
        for (r, resp) in self.responses.iter().enumerate() {
            let mu0 = resp.y.map_with_location(|i, _, y| match resp.link {
                LinkFn::Identity => y,
                LinkFn::Log => y.max(0.0) + 0.1,
                LinkFn::Logit => {
                    let n = resp.ntrial.as_ref().map_or(1.0, |t| t[i]);
                    (y * n + 0.5) / (n + 1.0)
                }
            });
            let eta0 = resp.link.apply_vec(&mu0)? - &resp.offset;
            let x = &resp.design.x;
            let xtx = x.transpose() * x;
            let chol = xtx
                .cholesky()
                .ok_or_else(|| Error::Singular(format!("X'X of response {}", r + 1)))?;
            let b = chol.solve(&(x.transpose() * eta0));
            beta.rows_mut(self.spans[r].start, b.len()).copy_from(&b);
        }
        Ok(beta)
    }
}

/// Quantities at one `(beta, lambda)` point shared by the estimating functions.
struct Point {
    resid: DVector<f64>,
    d: DMatrix<f64>,
    cov: CovarianceState,
    c_inv: DMatrix<f64>,
    /// `C^{-1} r`.
    u: DVector<f64>,
}

fn means(model: &BoundModel, beta: &DVector<f64>) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut mus = Vec::with_capacity(model.n_responses());
    let mut dmus = Vec::with_capacity(model.n_responses());
    for (resp, span) in model.responses.iter().zip(&model.spans) {
        let b = beta.rows(span.start, span.len());
        let eta = &resp.design.x * b + &resp.offset;
        mus.push(resp.link.inverse_vec(&eta)?);
        dmus.push(resp.link.deriv_vec(&eta)?);
    }
    Ok((mus, dmus))
}

fn covariance_at(
    model: &BoundModel,
    mus: &[DVector<f64>],
    lambda: &DispersionVector,
) -> Result<CovarianceState> {
    let variances: Vec<VarianceFn> = model.responses.iter().map(|r| r.variance).collect();
    let zs: Vec<MatrixPredictor> = model.responses.iter().map(|r| r.z.clone()).collect();
    let ntrials: Vec<Option<DVector<f64>>> = model.responses.iter().map(|r| r.ntrial.clone()).collect();
    CovarianceState::new(mus, &variances, &zs, &ntrials, lambda)
}

fn evaluate(model: &BoundModel, beta: &DVector<f64>, lambda: &DispersionVector) -> Result<Point> {
    let n = model.n;
    let nr = n * model.n_responses();
    let (mus, dmus) = means(model, beta)?;
    let mut resid = DVector::zeros(nr);
    let mut d = DMatrix::zeros(nr, model.n_beta());
    for (r, (resp, span)) in model.responses.iter().zip(&model.spans).enumerate() {
        for i in 0..n {
            resid[r * n + i] = resp.y[i] - mus[r][i];
            for (jj, j) in span.clone().enumerate() {
                d[(r * n + i, j)] = resp.design.x[(i, jj)] * dmus[r][i];
            }
        }
    }
    let cov = covariance_at(model, &mus, lambda)?;
    let c_inv = cov.joint().inverse();
    if c_inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inverse of C".into()));
    }
    let u = &c_inv * &resid;
    Ok(Point { resid, d, cov, c_inv, u })
}

/// Quasi-score and its sensitivity and variability.
#[derive(Debug, Clone)]
pub struct QuasiScore {
    pub psi: DVector<f64>,
    pub sensitivity: DMatrix<f64>,
    pub variability: DMatrix<f64>,
}

fn quasi_from_point(p: &Point) -> QuasiScore {
    let psi = p.d.transpose() * &p.u;
    let mut v = p.d.transpose() * &p.c_inv * &p.d;
    symmetrize(&mut v);
    QuasiScore { psi, sensitivity: -&v, variability: v }
}

/// `psi_beta = D^T C^{-1} (y - mu)`, `S_beta = -D^T C^{-1} D`, `V_beta = -S_beta`.
pub fn quasi_score(model: &BoundModel, beta: &DVector<f64>, lambda: &DispersionVector) -> Result<QuasiScore> {
    Ok(quasi_from_point(&evaluate(model, beta, lambda)?))
}

/// Pearson estimating function with its sensitivity and variability.
#[derive(Debug, Clone)]
pub struct PearsonFn {
    pub psi: DVector<f64>,
    pub sensitivity: DMatrix<f64>,
    pub variability: DMatrix<f64>,
}

/// `C^{-1} dC/dlambda_i` for every dispersion parameter.
fn a_matrices(p: &Point) -> Vec<DMatrix<f64>> {
    p.cov.dc_dlambda().iter().map(|dc| &p.c_inv * dc).collect()
}

/// Diagonal of `W_i = C^{-1} dC_i C^{-1} = A_i C^{-1}`.
fn w_diagonal(a: &DMatrix<f64>, c_inv: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(a.nrows(), |l, _| a.row(l).transpose().dot(&c_inv.column(l)))
}

fn pearson_from_point(p: &Point, a: &[DMatrix<f64>], with_variability: bool, cumulants: bool) -> PearsonFn {
    let q = a.len();
    let dcs = p.cov.dc_dlambda();
    let mut psi = DVector::zeros(q);
    for i in 0..q {
        psi[i] = p.u.dot(&(&dcs[i] * &p.u)) - a[i].trace();
    }
    let mut tr = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let t = trace_of_product(&a[i], &a[j]);
            tr[(i, j)] = t;
            tr[(j, i)] = t;
        }
    }
    let sensitivity = -&tr;
    let mut variability = &tr * 2.0;
    if with_variability && cumulants {
        let c = p.cov.c();
        let k4 = DVector::from_fn(p.resid.len(), |l, _| p.resid[l].powi(4) - 3.0 * c[(l, l)].powi(2));
        let diags: Vec<DVector<f64>> = a.iter().map(|ai| w_diagonal(ai, &p.c_inv)).collect();
        for i in 0..q {
            for j in i..q {
                let extra: f64 = (0..k4.len()).map(|l| k4[l] * diags[i][l] * diags[j][l]).sum();
                variability[(i, j)] += extra;
                if i != j {
                    variability[(j, i)] += extra;
                }
            }
        }
    }
    PearsonFn { psi, sensitivity, variability }
}

/// `psi_lambda_i = r^T W_i r - tr(W_i C)`, `S_ij = -tr(W_i C W_j C)` and
/// `V_ij = 2 tr(W_i C W_j C) + sum_l k4_l W_i,ll W_j,ll`.
pub fn pearson_fn(
    model: &BoundModel,
    beta: &DVector<f64>,
    lambda: &DispersionVector,
    empirical_cumulants: bool,
) -> Result<PearsonFn> {
    let p = evaluate(model, beta, lambda)?;
    let a = a_matrices(&p);
    Ok(pearson_from_point(&p, &a, true, empirical_cumulants))
}

/// Cross blocks of the joint sensitivity and variability.
#[derive(Debug, Clone)]
pub struct CrossBlocks {
    /// `Q x K`.
    pub s_lambda_beta: DMatrix<f64>,
    /// `K x Q`.
    pub s_beta_lambda: DMatrix<f64>,
    /// `Q x K`.
    pub v_lambda_beta: DMatrix<f64>,
}

fn cross_from_point(
    model: &BoundModel,
    beta: &DVector<f64>,
    lambda: &DispersionVector,
    p: &Point,
    a: &[DMatrix<f64>],
    cumulants: bool,
) -> Result<CrossBlocks> {
    let q = a.len();
    let k = model.n_beta();
    let mut s_lb = DMatrix::zeros(q, k);
    for (resp, span) in model.responses.iter().zip(&model.spans) {
        if !resp.variance.depends_on_mean() {
            continue;
        }
        for j in span.clone() {
            let h = BETA_FD_STEP * beta[j].abs().max(1.0);
            let mut bp = beta.clone();
            bp[j] += h;
            let mut bm = beta.clone();
            bm[j] -= h;
            let cp = covariance_at(model, &means(model, &bp)?.0, lambda)?;
            let cm = covariance_at(model, &means(model, &bm)?.0, lambda)?;
            let dc = (cp.c() - cm.c()) / (2.0 * h);
            let b = &p.c_inv * dc;
            for i in 0..q {
                s_lb[(i, j)] = -trace_of_product(&a[i], &b);
            }
        }
    }
    let mut v_lb = DMatrix::zeros(q, k);
    if cumulants {
        let cd = &p.c_inv * &p.d;
        let r3 = p.resid.map(|r| r.powi(3));
        for i in 0..q {
            let w = w_diagonal(&a[i], &p.c_inv).component_mul(&r3);
            let row = cd.transpose() * w;
            v_lb.row_mut(i).copy_from(&row.transpose());
        }
    }
    Ok(CrossBlocks {
        s_lambda_beta: s_lb,
        s_beta_lambda: DMatrix::zeros(k, q),
        v_lambda_beta: v_lb,
    })
}

/// Cross sensitivity and variability blocks at `(beta, lambda)`.
///
/// `S_beta_lambda` is zero in expectation and returned as such;
/// `S_lambda_beta_ij = -tr(W_i dC/dbeta_j)` with `dC/dbeta_j` from central
/// differences; `V_lambda_beta` uses the empirical third cumulant.
pub fn cross_blocks(
    model: &BoundModel,
    beta: &DVector<f64>,
    lambda: &DispersionVector,
    empirical_cumulants: bool,
) -> Result<CrossBlocks> {
    let p = evaluate(model, beta, lambda)?;
    let a = a_matrices(&p);
    cross_from_point(model, beta, lambda, &p, &a, empirical_cumulants)
}

/// Fitted model: estimates, inverse Godambe information and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub designs: Vec<DesignInfo>,
    pub beta: DVector<f64>,
    pub beta_spans: Vec<Range<usize>>,
    pub lambda: DispersionVector,
    /// Inverse Godambe information over `(beta, rho, tau)`.
    pub godambe_inv: DMatrix<f64>,
    pub n_obs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

/// `beta<r><j>` with 1-based response and 0-based coefficient index.
pub fn beta_label(r: usize, j: usize) -> String {
    if r + 1 < 10 && j < 10 {
        format!("beta{}{}", r + 1, j)
    } else {
        format!("beta{}_{}", r + 1, j)
    }
}

/// `tau<r><d>` with 1-based response and 1-based component index.
pub fn tau_label(r: usize, d: usize) -> String {
    if r + 1 < 10 && d + 1 < 10 {
        format!("tau{}{}", r + 1, d + 1)
    } else {
        format!("tau{}_{}", r + 1, d + 1)
    }
}

impl FittedModel {
    pub fn n_responses(&self) -> usize {
        self.beta_spans.len()
    }

    pub fn n_beta(&self) -> usize {
        self.beta.len()
    }

    /// Dimension of `theta* = (beta, tau)`.
    pub fn n_theta_star(&self) -> usize {
        self.n_beta() + self.lambda.tau.iter().map(Vec::len).sum::<usize>()
    }

    /// Indices of `theta*` within the full `(beta, rho, tau)` vector.
    fn star_indices(&self) -> Vec<usize> {
        let k = self.n_beta();
        let nr = self.lambda.rho.len();
        (0..k).chain((k + nr)..(k + self.lambda.len())).collect()
    }

    pub fn theta_star(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.beta.iter().copied().collect();
        for t in &self.lambda.tau {
            v.extend_from_slice(t);
        }
        DVector::from_vec(v)
    }

    /// `J*^{-1}`: the inverse Godambe information without the correlation rows and columns.
    pub fn vcov_star(&self) -> DMatrix<f64> {
        self.godambe_inv.select_rows(&self.star_indices()).select_columns(&self.star_indices())
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_theta_star());
        for (r, span) in self.beta_spans.iter().enumerate() {
            out.extend((0..span.len()).map(|j| beta_label(r, j)));
        }
        for (r, t) in self.lambda.tau.iter().enumerate() {
            out.extend((0..t.len()).map(|d| tau_label(r, d)));
        }
        out
    }

    /// Position of `beta_{r,j}` in `theta*`.
    pub fn beta_index(&self, r: usize, j: usize) -> usize {
        self.beta_spans[r].start + j
    }

    /// Position of `tau_{r,d}` in `theta*` (`d` 0-based).
    pub fn tau_index(&self, r: usize, d: usize) -> usize {
        self.n_beta() + self.lambda.tau[..r].iter().map(Vec::len).sum::<usize>() + d
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.vcov_star().diagonal().map(f64::sqrt)
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::Domain { .. } | Error::NotPositiveDefinite { .. } | Error::NonFinite(_))
}

fn solve_square(m: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let x = m
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(x)
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Drop incomplete rows, bind, and run the chaser.
pub fn fit(spec: &ModelSpec, data: &Dataset, opts: &FitOptions) -> Result<FittedModel> {
    opts.validate()?;
    let (clean, dropped) = data.drop_incomplete(&spec.bound_columns())?;
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    let model = BoundModel::bind(spec, &clean)?;
    fit_bound(spec, &model, opts)
}

/// Run the modified chaser on an already bound model.
pub fn fit_bound(spec: &ModelSpec, model: &BoundModel, opts: &FitOptions) -> Result<FittedModel> {
    opts.validate()?;
    let mut beta = model.initial_beta()?;
    let mut lambda = model.initial_lambda();
    let mut point = evaluate(model, &beta, &lambda)?;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let qs = quasi_from_point(&point);
        let step_b = solve_square(&qs.variability, &qs.psi, "quasi-score sensitivity")?;
        let ((beta_new, point_b), halvings_b) = halving_search(|f| {
            let cand = &beta + &step_b * f;
            let p = evaluate(model, &cand, &lambda)?;
            Ok((cand, p))
        })?;

        let a = a_matrices(&point_b);
        let pf = pearson_from_point(&point_b, &a, false, false);
        let step_l = solve_square(&pf.sensitivity, &pf.psi, "Pearson sensitivity")?;
        let flat = DVector::from_vec(lambda.to_flat());
        let ((lambda_new, point_l), halvings_l) = halving_search(|f| {
            let cand = lambda.with_flat((&flat - &step_l * (opts.alpha * f)).as_slice());
            let p = evaluate(model, &beta_new, &cand)?;
            Ok((cand, p))
        })?;

        let change_l = max_abs(&(DVector::from_vec(lambda_new.to_flat()) - &flat));
        let change = max_abs(&(&beta_new - &beta)).max(change_l);
        let record = IterationRecord {
            iteration: iter,
            psi_beta_max: max_abs(&qs.psi),
            psi_lambda_max: max_abs(&pf.psi),
            beta_halvings: halvings_b,
            lambda_halvings: halvings_l,
            max_change: change,
        };
        if opts.verbose {
            log::info!(
                "iter {iter}: |psi_beta| {:.3e} |psi_lambda| {:.3e} change {:.3e} halvings {}/{}",
                record.psi_beta_max,
                record.psi_lambda_max,
                change,
                halvings_b,
                halvings_l
            );
        }
        trace.push(record);
        beta = beta_new;
        lambda = lambda_new;
        point = point_l;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("chaser did not converge in {} iterations", opts.max_iter);
    }

    let godambe_inv = godambe_inverse(model, &beta, &lambda, &point, opts.empirical_cumulants)?;
    Ok(FittedModel {
        spec: spec.clone(),
        designs: model.responses.iter().map(|r| r.design.clone()).collect(),
        beta,
        beta_spans: model.spans.clone(),
        lambda,
        godambe_inv,
        n_obs: model.n,
        iterations,
        converged,
        trace,
    })
}

/// Try the full step, then halve it on recoverable failures.
fn halving_search<T>(mut attempt: impl FnMut(f64) -> Result<T>) -> Result<(T, usize)> {
    let mut factor = 1.0;
    let mut halvings = 0;
    loop {
        match attempt(factor) {
            Ok(v) => return Ok((v, halvings)),
            Err(e) if recoverable(&e) && halvings < MAX_HALVINGS => {
                log::debug!("step rejected ({e}); halving");
                factor *= 0.5;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// `J^{-1} = S^{-1} V S^{-T}` over `(beta, rho, tau)`.
/// Largest weight `w <= 1` such that `v0 + w * extra` keeps at least half of
/// the model-based variability `v0` in every direction.
fn cumulant_shrinkage(v0: &DMatrix<f64>, extra: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(v0).ok_or_else(|| Error::Singular("model-based variability matrix".into()))?;
    let l = chol.l();
    let half = l
        .solve_lower_triangular(extra)
        .ok_or_else(|| Error::Singular("model-based variability matrix".into()))?;
    let mut m = l
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::Singular("model-based variability matrix".into()))?;
    symmetrize(&mut m);
    let min = m.symmetric_eigen().eigenvalues.min();
    if min < -0.5 {
        let w = 0.5 / -min;
        log::warn!("empirical cumulant correction shrunk by factor {w:.4} to keep the variability matrix positive definite");
        Ok(w)
    } else {
        Ok(1.0)
    }
}

fn godambe_inverse(
    model: &BoundModel,
    beta: &DVector<f64>,
    lambda: &DispersionVector,
    p: &Point,
    cumulants: bool,
) -> Result<DMatrix<f64>> {
    let qs = quasi_from_point(p);
    let a = a_matrices(p);
    let pf = pearson_from_point(p, &a, true, false);
    let cross = cross_from_point(model, beta, lambda, p, &a, cumulants)?;
    let k = beta.len();
    let q = a.len();
    let mut s = DMatrix::zeros(k + q, k + q);
    let mut v = DMatrix::zeros(k + q, k + q);
    s.view_mut((0, 0), (k, k)).copy_from(&qs.sensitivity);
    s.view_mut((0, k), (k, q)).copy_from(&cross.s_beta_lambda);
    s.view_mut((k, 0), (q, k)).copy_from(&cross.s_lambda_beta);
    s.view_mut((k, k), (q, q)).copy_from(&pf.sensitivity);
    v.view_mut((0, 0), (k, k)).copy_from(&qs.variability);
    v.view_mut((k, k), (q, q)).copy_from(&pf.variability);
    if cumulants {
        let full = pearson_from_point(p, &a, true, true);
        let mut extra = DMatrix::zeros(k + q, k + q);
        extra.view_mut((0, k), (k, q)).copy_from(&cross.v_lambda_beta.transpose());
        extra.view_mut((k, 0), (q, k)).copy_from(&cross.v_lambda_beta);
        extra
            .view_mut((k, k), (q, q))
            .copy_from(&(full.variability - &pf.variability));
        let w = cumulant_shrinkage(&v, &extra)?;
        v += extra * w;
    }
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Singular("joint sensitivity matrix".into()))?;
    let mut j_inv = &s_inv * v * s_inv.transpose();
    symmetrize(&mut j_inv);
    if j_inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("inverse Godambe information".into()));
    }
    Ok(j_inv)
}
