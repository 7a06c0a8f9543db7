//! Declarative model description: link and variance functions, matrix
//! linear predictors and the per-response specification.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::Formula;

/// Link function `g` relating the mean to the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFn {
    Identity,
    Log,
    Logit,
}

impl LinkFn {
    /// `eta = g(mu)`.
    pub fn apply(self, mu: f64) -> Option<f64> {
        match self {
            LinkFn::Identity => mu.is_finite().then_some(mu),
            LinkFn::Log => (mu > 0.0 && mu.is_finite()).then(|| mu.ln()),
            LinkFn::Logit => (mu > 0.0 && mu < 1.0).then(|| (mu / (1.0 - mu)).ln()),
        }
    }

    /// `mu = g^{-1}(eta)`.
    pub fn inverse(self, eta: f64) -> Option<f64> {
        if !eta.is_finite() {
            return None;
        }
        let mu = match self {
            LinkFn::Identity => eta,
            LinkFn::Log => eta.exp(),
            LinkFn::Logit => logistic(eta),
        };
        mu.is_finite().then_some(mu)
    }

    /// `d mu / d eta` evaluated at `eta`.
    pub fn deriv(self, eta: f64) -> Option<f64> {
        if !eta.is_finite() {
            return None;
        }
        let d = match self {
            LinkFn::Identity => 1.0,
            LinkFn::Log => eta.exp(),
            LinkFn::Logit => {
                let mu = logistic(eta);
                mu * (1.0 - mu)
            }
        };
        d.is_finite().then_some(d)
    }

    pub fn apply_vec(self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        map_checked(mu, "link", |v| self.apply(v))
    }

    pub fn inverse_vec(self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        map_checked(eta, "inverse link", |v| self.inverse(v))
    }

    pub fn deriv_vec(self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        map_checked(eta, "link derivative", |v| self.deriv(v))
    }
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn map_checked(
    x: &DVector<f64>,
    what: &'static str,
    f: impl Fn(f64) -> Option<f64>,
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(x.len());
    for (i, &v) in x.iter().enumerate() {
        out[i] = f(v).ok_or(Error::Domain {
            what,
            index: i,
            value: v,
        })?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceKind {
    #[serde(rename = "constant")]
    Constant,
    #[serde(rename = "tweedie")]
    Tweedie,
    #[serde(rename = "poisson_tweedie")]
    PoissonTweedie,
    #[serde(rename = "binomialP")]
    BinomialP,
}

/// Variance function with its (fixed) power parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceFn {
    pub kind: VarianceKind,
    pub power: f64,
}

impl VarianceFn {
    pub fn constant() -> Self {
        Self {
            kind: VarianceKind::Constant,
            power: 0.0,
        }
    }

    pub fn tweedie(power: f64) -> Self {
        Self {
            kind: VarianceKind::Tweedie,
            power,
        }
    }

    pub fn poisson_tweedie(power: f64) -> Self {
        Self {
            kind: VarianceKind::PoissonTweedie,
            power,
        }
    }

    pub fn binomial(power: f64) -> Self {
        Self {
            kind: VarianceKind::BinomialP,
            power,
        }
    }

    /// Elementwise variance function values.
    ///
    /// For `poisson_tweedie` this is only the `mu^p` part; the additive
    /// `diag(mu)` term is added when the covariance is assembled.
    pub fn eval(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.power;
        match self.kind {
            VarianceKind::Constant => Ok(DVector::from_element(mu.len(), 1.0)),
            VarianceKind::Tweedie if p == 0.0 => Ok(DVector::from_element(mu.len(), 1.0)),
            VarianceKind::Tweedie | VarianceKind::PoissonTweedie => {
                map_checked(mu, "tweedie variance", |m| (m > 0.0).then(|| m.powf(p)))
            }
            VarianceKind::BinomialP => map_checked(mu, "binomial variance", |m| {
                (m > 0.0 && m < 1.0).then(|| m.powf(p) * (1.0 - m).powf(p))
            }),
        }
    }

    /// Whether the covariance depends on the mean (and therefore on beta).
    pub fn depends_on_mean(&self) -> bool {
        match self.kind {
            VarianceKind::Constant => false,
            VarianceKind::Tweedie => self.power != 0.0,
            VarianceKind::PoissonTweedie | VarianceKind::BinomialP => true,
        }
    }
}

/// Known symmetric `N x N` matrices `Z_0..Z_D` of a matrix linear predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPredictor {
    components: Vec<DMatrix<f64>>,
}

impl MatrixPredictor {
    pub fn new(components: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidSpec("matrix predictor needs at least one matrix".into()));
        };
        let n = first.nrows();
        for (d, z) in components.iter().enumerate() {
            if z.nrows() != n || z.ncols() != n {
                return Err(Error::LengthMismatch {
                    what: format!("matrix predictor component {d}"),
                    expected: n,
                    got: z.nrows().max(z.ncols()),
                });
            }
            let asym = (z - z.transpose()).amax();
            if asym > 1e-12 * z.amax().max(1.0) {
                return Err(Error::InvalidSpec(format!(
                    "matrix predictor component {d} is not symmetric"
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            components: vec![DMatrix::identity(n, n)],
        }
    }

    pub fn components(&self) -> &[DMatrix<f64>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].nrows()
    }
}

/// `Z = A A^T` for the `N x G` membership matrix `A` of a grouping factor:
/// entry `(i, j)` is one when rows `i` and `j` share a group.
pub fn grouping_matrix<S: AsRef<str>>(groups: &[S]) -> DMatrix<f64> {
    let n = groups.len();
    DMatrix::from_fn(n, n, |i, j| {
        if groups[i].as_ref() == groups[j].as_ref() {
            1.0
        } else {
            0.0
        }
    })
}

/// One matrix in a response's matrix linear predictor, by construction rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MatrixTerm {
    Identity,
    Grouping { column: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetTransform {
    #[default]
    None,
    Log,
}

/// Column type override for CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Factor,
}

fn default_matrix_pred() -> Vec<MatrixTerm> {
    vec![MatrixTerm::Identity]
}

fn default_power() -> f64 {
    1.0
}

/// Specification of one response: formula, link, variance, matrix predictor,
/// optional offset (link scale) and optional binomial trial counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub formula: Formula,
    pub link: LinkFn,
    pub variance: VarianceKind,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_matrix_pred")]
    pub matrix_pred: Vec<MatrixTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_column: Option<String>,
    #[serde(default)]
    pub offset_transform: OffsetTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ntrial_column: Option<String>,
}

impl ResponseSpec {
    pub fn new(formula: &str, link: LinkFn, variance: VarianceFn) -> Result<Self> {
        Ok(Self {
            formula: formula.parse()?,
            link,
            variance: variance.kind,
            power: variance.power,
            matrix_pred: default_matrix_pred(),
            offset_column: None,
            offset_transform: OffsetTransform::None,
            ntrial_column: None,
        })
    }

    /// Gaussian response: identity link, constant variance, independent rows.
    pub fn gaussian(formula: &str) -> Result<Self> {
        Self::new(formula, LinkFn::Identity, VarianceFn::constant())
    }

    pub fn with_matrix_pred(mut self, terms: Vec<MatrixTerm>) -> Self {
        self.matrix_pred = terms;
        self
    }

    pub fn with_offset(mut self, column: &str, transform: OffsetTransform) -> Self {
        self.offset_column = Some(column.to_string());
        self.offset_transform = transform;
        self
    }

    pub fn with_ntrial(mut self, column: &str) -> Self {
        self.ntrial_column = Some(column.to_string());
        self
    }

    pub fn variance_fn(&self) -> VarianceFn {
        VarianceFn {
            kind: self.variance,
            power: self.power,
        }
    }

    /// All data columns this response reads.
    pub fn bound_columns(&self) -> Vec<String> {
        let mut cols = vec![self.formula.response.clone()];
        cols.extend(self.formula.variables());
        for term in &self.matrix_pred {
            if let MatrixTerm::Grouping { column } = term {
                cols.push(column.clone());
            }
        }
        cols.extend(self.offset_column.iter().cloned());
        cols.extend(self.ntrial_column.iter().cloned());
        cols
    }

    fn validate(&self) -> Result<()> {
        if self.matrix_pred.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "response '{}' has an empty matrix predictor",
                self.formula.response
            )));
        }
        if self.ntrial_column.is_some() && self.variance != VarianceKind::BinomialP {
            return Err(Error::InvalidSpec(format!(
                "response '{}': ntrial requires the binomialP variance",
                self.formula.response
            )));
        }
        if !self.power.is_finite() {
            return Err(Error::InvalidSpec("power must be finite".into()));
        }
        Ok(())
    }
}

/// Full description of an `R`-response model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub responses: Vec<ResponseSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub column_types: BTreeMap<String, ColumnKind>,
}

impl ModelSpec {
    pub fn new(responses: Vec<ResponseSpec>) -> Result<Self> {
        let spec = Self {
            responses,
            column_types: BTreeMap::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_column_type(mut self, column: &str, kind: ColumnKind) -> Self {
        self.column_types.insert(column.to_string(), kind);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.responses.is_empty() {
            return Err(Error::InvalidSpec("at least one response is required".into()));
        }
        self.responses.iter().try_for_each(ResponseSpec::validate)
    }

    pub fn n_responses(&self) -> usize {
        self.responses.len()
    }

    /// Union of bound columns over all responses, in first-use order.
    pub fn bound_columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.responses {
            for c in r.bound_columns() {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }
}
