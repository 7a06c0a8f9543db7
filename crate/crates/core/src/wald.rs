//! Wald tests of `H0: L theta* = c`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chisq::chisq_sf;
use crate::error::{Error, Result};
use crate::estimator::{beta_label, tau_label, FittedModel};
use crate::linalg::{cholesky, kron, rank};

/// Linear hypothesis `L theta* = c` with one printable label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub l: DMatrix<f64>,
    pub c: DVector<f64>,
    pub row_labels: Vec<String>,
}

impl Hypothesis {
    pub fn new(l: DMatrix<f64>, c: DVector<f64>, row_labels: Vec<String>) -> Result<Self> {
        if c.len() != l.nrows() {
            return Err(Error::LengthMismatch {
                what: "hypothesis right-hand side".into(),
                expected: l.nrows(),
                got: c.len(),
            });
        }
        if row_labels.len() != l.nrows() {
            return Err(Error::LengthMismatch {
                what: "hypothesis row labels".into(),
                expected: l.nrows(),
                got: row_labels.len(),
            });
        }
        Ok(Self { l, c, row_labels })
    }

    /// `L theta* = 0` with unlabeled rows.
    pub fn homogeneous(l: DMatrix<f64>) -> Self {
        let s = l.nrows();
        let row_labels = (1..=s).map(|i| format!("row{i}")).collect();
        Self {
            l,
            c: DVector::zeros(s),
            row_labels,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.l.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub label: String,
    pub df: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// `G ⊗ F`.
pub fn kronecker_l(g: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    kron(g, f)
}

fn split_digits(digits: &str) -> Vec<(usize, usize)> {
    let ok = |s: &str| !s.is_empty() && (s == "0" || !s.starts_with('0'));
    (1..digits.len())
        .filter_map(|k| {
            let (a, b) = digits.split_at(k);
            if ok(a) && ok(b) {
                Some((a.parse().ok()?, b.parse().ok()?))
            } else {
                None
            }
        })
        .collect()
}

/// Resolve a parameter label to its position in `labels`.
///
/// Exact matches win. Otherwise a compact label whose digits can be split
/// into response and parameter indices in several ways (`beta112`) is
/// resolved when exactly one split names an existing parameter.
pub fn resolve_label(label: &str, labels: &[String]) -> Result<usize> {
    if let Some(i) = labels.iter().position(|l| l == label) {
        return Ok(i);
    }
    let unknown = || Error::UnknownLabel {
        label: label.to_string(),
        valid: labels.to_vec(),
    };
    let (prefix, digits) = if let Some(d) = label.strip_prefix("beta") {
        ("beta", d)
    } else if let Some(d) = label.strip_prefix("tau") {
        ("tau", d)
    } else {
        return Err(unknown());
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(unknown());
    }
    let mut found: Vec<usize> = Vec::new();
    for (r, j) in split_digits(digits) {
        if r == 0 || (prefix == "tau" && j == 0) {
            continue;
        }
        let canonical = if prefix == "beta" {
            beta_label(r - 1, j)
        } else {
            tau_label(r - 1, j - 1)
        };
        if let Some(i) = labels.iter().position(|l| *l == canonical) {
            if !found.contains(&i) {
                found.push(i);
            }
        }
    }
    match found.len() {
        0 => Err(unknown()),
        1 => Ok(found[0]),
        _ => Err(Error::AmbiguousLabel {
            label: label.to_string(),
            candidates: found.iter().map(|&i| labels[i].clone()).collect(),
        }),
    }
}

fn is_param(token: &str) -> bool {
    token.starts_with("beta") || token.starts_with("tau")
}

/// Parse lines of the form `param = number` or `param = param` into a
/// hypothesis over the parameters named by `labels` (in `theta*` order).
pub fn parse_hypothesis<S: AsRef<str>>(lines: &[S], labels: &[String]) -> Result<Hypothesis> {
    if lines.is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            message: "no hypothesis given".into(),
        });
    }
    let h = labels.len();
    let s = lines.len();
    let mut l = DMatrix::zeros(s, h);
    let mut c = DVector::zeros(s);
    let mut row_labels = Vec::with_capacity(s);
    for (row, line) in lines.iter().enumerate() {
        let line = line.as_ref();
        let eq = line.find('=').ok_or_else(|| Error::Syntax {
            offset: line.len(),
            message: "expected '='".into(),
        })?;
        let lhs = line[..eq].trim();
        let rhs = line[eq + 1..].trim();
        if lhs.is_empty() {
            return Err(Error::Syntax {
                offset: 0,
                message: "missing parameter before '='".into(),
            });
        }
        if rhs.is_empty() {
            return Err(Error::Syntax {
                offset: eq + 1,
                message: "missing right-hand side".into(),
            });
        }
        let i = resolve_label(lhs, labels)?;
        l[(row, i)] += 1.0;
        if is_param(rhs) {
            let j = resolve_label(rhs, labels)?;
            l[(row, j)] -= 1.0;
        } else {
            let value: f64 = rhs.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Syntax {
                    offset: eq + 1 + (line[eq + 1..].len() - line[eq + 1..].trim_start().len()),
                    message: format!("'{rhs}' is neither a number nor a parameter"),
                }
            })?;
            c[row] = value;
        }
        row_labels.push(format!("{lhs} = {rhs}"));
    }
    Ok(Hypothesis { l, c, row_labels })
}

/// `W = (L theta - c)^T (L V L^T)^{-1} (L theta - c)` referred to chi-square
/// with `rows(L)` degrees of freedom.
pub fn wald_statistic(
    theta: &DVector<f64>,
    vcov: &DMatrix<f64>,
    hyp: &Hypothesis,
    label: &str,
) -> Result<TestResult> {
    let h = theta.len();
    if hyp.l.ncols() != h || vcov.nrows() != h || vcov.ncols() != h {
        return Err(Error::LengthMismatch {
            what: "hypothesis columns vs parameter vector".into(),
            expected: h,
            got: hyp.l.ncols(),
        });
    }
    let s = hyp.n_rows();
    if s == 0 {
        return Err(Error::InvalidDf(0));
    }
    if rank(&hyp.l) < s {
        return Err(Error::Rank {
            what: "hypothesis matrix L".into(),
            labels: hyp.row_labels.clone(),
        });
    }
    let d = &hyp.l * theta - &hyp.c;
    let middle = &hyp.l * vcov * hyp.l.transpose();
    let chol = cholesky(&middle).ok_or(Error::SingularHypothesis)?;
    let statistic = d.dot(&chol.solve(&d)).max(0.0);
    let p_value = chisq_sf(statistic, s)?;
    Ok(TestResult {
        label: label.to_string(),
        df: s,
        statistic,
        p_value,
    })
}

/// Wald test against a fitted model's `theta*` and `J*^{-1}`.
pub fn wald_test(model: &FittedModel, hyp: &Hypothesis) -> Result<TestResult> {
    let label = hyp.row_labels.join(", ");
    wald_statistic(&model.theta_star(), &model.vcov_star(), hyp, &label)
}

/// Parse and test in one step.
pub fn linear_hypothesis<S: AsRef<str>>(model: &FittedModel, lines: &[S]) -> Result<(Hypothesis, TestResult)> {
    let hyp = parse_hypothesis(lines, &model.labels())?;
    let res = wald_test(model, &hyp)?;
    Ok((hyp, res))
}
