//! ANOVA and MANOVA tables built from Wald tests on a fitted model.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{DesignInfo, DesignTerm};
use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::wald::{wald_test, Hypothesis, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnovaType {
    I,
    II,
    III,
}

impl AnovaType {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::I),
            2 => Some(Self::II),
            3 => Some(Self::III),
            _ => None,
        }
    }
}

impl fmt::Display for AnovaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTable {
    /// Echo of the predictor, e.g. `grain ~ block + water * pot`.
    pub caption: String,
    /// Header of the label column.
    pub label_header: String,
    pub rows: Vec<TestResult>,
}

/// Design columns (relative to the response's block) tested for term `t`.
pub fn term_columns(design: &DesignInfo, t: usize, ty: AnovaType) -> Vec<usize> {
    let terms = &design.terms;
    let chosen: Vec<&DesignTerm> = match ty {
        AnovaType::I => terms[t..].iter().collect(),
        AnovaType::II => {
            let term = &terms[t];
            std::iter::once(term)
                .chain(terms.iter().filter(|u| term.is_contained_in(u)))
                .collect()
        }
        AnovaType::III => vec![&terms[t]],
    };
    let mut cols: Vec<usize> = chosen.iter().flat_map(|u| u.span.clone()).collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

fn selection_matrix(rows: &[usize], h: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(rows.len(), h);
    for (i, &j) in rows.iter().enumerate() {
        l[(i, j)] = 1.0;
    }
    l
}

fn test_selection(model: &FittedModel, cols: &[usize], label: &str) -> Result<TestResult> {
    let l = selection_matrix(cols, model.n_theta_star());
    let mut hyp = Hypothesis::homogeneous(l);
    hyp.row_labels = cols.iter().map(|&j| model.labels()[j].clone()).collect();
    let mut res = wald_test(model, &hyp)?;
    res.label = label.to_string();
    Ok(res)
}

fn response_caption(model: &FittedModel, r: usize) -> String {
    model.spec.responses[r].formula.source().to_string()
}

/// Right-hand side without spaces, as echoed for joint tables.
fn shared_caption(model: &FittedModel) -> String {
    let rhs: String = model.spec.responses[0]
        .formula
        .rhs_source()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    format!("~ {rhs}")
}

/// One ANOVA table per response.
pub fn anova(model: &FittedModel, ty: AnovaType) -> Result<Vec<TestTable>> {
    (0..model.n_responses())
        .map(|r| {
            let design = &model.designs[r];
            let offset = model.beta_spans[r].start;
            let rows = (0..design.terms.len())
                .map(|t| {
                    let cols: Vec<usize> =
                        term_columns(design, t, ty).into_iter().map(|j| j + offset).collect();
                    test_selection(model, &cols, &design.terms[t].label)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TestTable {
                caption: response_caption(model, r),
                label_header: "Covariate".into(),
                rows,
            })
        })
        .collect()
}

pub fn anova_type_i(model: &FittedModel) -> Result<Vec<TestTable>> {
    anova(model, AnovaType::I)
}

pub fn anova_type_ii(model: &FittedModel) -> Result<Vec<TestTable>> {
    anova(model, AnovaType::II)
}

pub fn anova_type_iii(model: &FittedModel) -> Result<Vec<TestTable>> {
    anova(model, AnovaType::III)
}

/// Check that every response has the same term structure and columns.
pub fn check_shared_predictor(model: &FittedModel) -> Result<()> {
    let first = &model.designs[0];
    for (r, d) in model.designs.iter().enumerate().skip(1) {
        if d.terms != first.terms || d.column_labels != first.column_labels {
            return Err(Error::PredictorMismatch(format!(
                "response {} has predictor '{}' but response 1 has '{}'",
                r + 1,
                model.spec.responses[r].formula.rhs_source(),
                model.spec.responses[0].formula.rhs_source()
            )));
        }
    }
    Ok(())
}

/// Joint table over all responses with `L = I_R ⊗ F`.
pub fn manova(model: &FittedModel, ty: AnovaType) -> Result<TestTable> {
    check_shared_predictor(model)?;
    let design = &model.designs[0];
    let rows = (0..design.terms.len())
        .map(|t| {
            let local = term_columns(design, t, ty);
            let cols: Vec<usize> = model
                .beta_spans
                .iter()
                .flat_map(|span| local.iter().map(move |&j| span.start + j))
                .collect();
            test_selection(model, &cols, &design.terms[t].label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TestTable {
        caption: shared_caption(model),
        label_header: "Covariate".into(),
        rows,
    })
}

pub fn manova_type_i(model: &FittedModel) -> Result<TestTable> {
    manova(model, AnovaType::I)
}

pub fn manova_type_ii(model: &FittedModel) -> Result<TestTable> {
    manova(model, AnovaType::II)
}

pub fn manova_type_iii(model: &FittedModel) -> Result<TestTable> {
    manova(model, AnovaType::III)
}

/// Distinct group indices in ascending order.
fn distinct(groups: &[usize]) -> Vec<usize> {
    let mut d = groups.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

/// Default row names for dispersion ANOVA of response `r` (0-based).
pub fn default_dispersion_names(groups: &[Vec<usize>]) -> Vec<Vec<String>> {
    groups
        .iter()
        .enumerate()
        .map(|(r, g)| distinct(g).iter().map(|i| format!("tau{}{}", r + 1, i)).collect())
        .collect()
}

/// Default row names for the joint dispersion table.
pub fn default_manova_dispersion_names(groups: &[usize]) -> Vec<String> {
    distinct(groups).iter().map(|i| format!("tau{i}")).collect()
}

/// Per response, one row per distinct index in `groups[r]` testing that
/// all dispersion parameters carrying that index are zero.
pub fn anova_dispersion(
    model: &FittedModel,
    groups: &[Vec<usize>],
    names: &[Vec<String>],
) -> Result<Vec<TestTable>> {
    let r_count = model.n_responses();
    if groups.len() != r_count {
        return Err(Error::LengthMismatch {
            what: "dispersion groups (one list per response)".into(),
            expected: r_count,
            got: groups.len(),
        });
    }
    if names.len() != r_count {
        return Err(Error::LengthMismatch {
            what: "dispersion names (one list per response)".into(),
            expected: r_count,
            got: names.len(),
        });
    }
    (0..r_count)
        .map(|r| {
            let n_tau = model.lambda.tau[r].len();
            if groups[r].len() != n_tau {
                return Err(Error::LengthMismatch {
                    what: format!("dispersion groups of response {}", r + 1),
                    expected: n_tau,
                    got: groups[r].len(),
                });
            }
            let ids = distinct(&groups[r]);
            if names[r].len() != ids.len() {
                return Err(Error::LengthMismatch {
                    what: format!("dispersion names of response {}", r + 1),
                    expected: ids.len(),
                    got: names[r].len(),
                });
            }
            let rows = ids
                .iter()
                .zip(&names[r])
                .map(|(&id, name)| {
                    let cols: Vec<usize> = (0..n_tau)
                        .filter(|&d| groups[r][d] == id)
                        .map(|d| model.tau_index(r, d))
                        .collect();
                    test_selection(model, &cols, name)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TestTable {
                caption: response_caption(model, r),
                label_header: "Dispersion".into(),
                rows,
            })
        })
        .collect()
}

/// One row per distinct index, testing the grouped dispersion parameters
/// of every response jointly.
pub fn manova_dispersion(model: &FittedModel, groups: &[usize], names: &[String]) -> Result<TestTable> {
    for (r, t) in model.lambda.tau.iter().enumerate() {
        if t.len() != groups.len() {
            return Err(Error::PredictorMismatch(format!(
                "response {} has {} dispersion parameters but {} groups were given",
                r + 1,
                t.len(),
                groups.len()
            )));
        }
    }
    let ids = distinct(groups);
    if names.len() != ids.len() {
        return Err(Error::LengthMismatch {
            what: "dispersion names".into(),
            expected: ids.len(),
            got: names.len(),
        });
    }
    let rows = ids
        .iter()
        .zip(names)
        .map(|(&id, name)| {
            let cols: Vec<usize> = (0..model.n_responses())
                .flat_map(|r| {
                    (0..groups.len())
                        .filter(move |&d| groups[d] == id)
                        .map(move |d| model.tau_index(r, d))
                })
                .collect();
            test_selection(model, &cols, name)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TestTable {
        caption: shared_caption(model),
        label_header: "Covariate".into(),
        rows,
    })
}

/// Estimates with standard errors, for summaries.
pub fn coefficient_table(model: &FittedModel) -> Vec<(String, f64, f64)> {
    let theta: DVector<f64> = model.theta_star();
    let se = model.std_errors();
    model
        .labels()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, theta[i], se[i]))
        .collect()
}
