//! Design matrices with treatment contrasts and term bookkeeping.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset};
use crate::error::{Error, Result};
use crate::formula::{Formula, Term};

pub const INTERCEPT: &str = "Intercept";

/// One formula term (or the intercept) and the design columns it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignTerm {
    pub label: String,
    /// Empty for the intercept.
    pub vars: Vec<String>,
    pub span: Range<usize>,
}

impl DesignTerm {
    pub fn is_intercept(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn df(&self) -> usize {
        self.span.len()
    }

    fn as_term(&self) -> Term {
        Term::new(self.vars.iter().cloned())
    }

    /// Whether `other` is a higher-order term containing every variable of `self`.
    pub fn is_contained_in(&self, other: &DesignTerm) -> bool {
        !self.is_intercept() && self.as_term().is_strictly_contained_in(&other.as_term())
    }
}

/// Value of an explanatory variable for one (possibly virtual) row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Level(String),
    Number(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInfo {
    pub x: DMatrix<f64>,
    pub terms: Vec<DesignTerm>,
    pub column_labels: Vec<String>,
    /// Factor -> ordered levels; the first level is the reference.
    pub level_maps: BTreeMap<String, Vec<String>>,
    /// Sample means of numeric explanatory variables.
    pub numeric_means: BTreeMap<String, f64>,
}

impl DesignInfo {
    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn term(&self, label: &str) -> Option<&DesignTerm> {
        self.terms.iter().find(|t| t.label == label)
    }

    pub fn is_factor(&self, var: &str) -> bool {
        self.level_maps.contains_key(var)
    }

    /// Encode one row given a value for every explanatory variable.
    pub fn encode_row(&self, cells: &BTreeMap<String, Cell>) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.n_cols());
        for term in &self.terms {
            if term.is_intercept() {
                row.push(1.0);
                continue;
            }
            let codings = term
                .vars
                .iter()
                .map(|v| {
                    let cell = cells.get(v).ok_or_else(|| Error::MissingColumn(v.clone()))?;
                    self.main_effect_coding(v, cell)
                })
                .collect::<Result<Vec<_>>>()?;
            row.extend(tensor_product(&codings));
        }
        debug_assert_eq!(row.len(), self.n_cols());
        Ok(row)
    }

    fn main_effect_coding(&self, var: &str, cell: &Cell) -> Result<Vec<f64>> {
        match (self.level_maps.get(var), cell) {
            (Some(levels), Cell::Level(l)) => {
                let idx = levels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::InvalidSpec(format!("unknown level '{l}' of factor '{var}'")))?;
                let mut v = vec![0.0; levels.len() - 1];
                if idx > 0 {
                    v[idx - 1] = 1.0;
                }
                Ok(v)
            }
            (None, Cell::Number(x)) => Ok(vec![*x]),
            _ => Err(Error::InvalidSpec(format!(
                "variable '{var}' given a value of the wrong type"
            ))),
        }
    }
}

/// Products of one entry from each coding, first coding varying fastest.
fn tensor_product(codings: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for c in codings {
        let mut next = Vec::with_capacity(out.len() * c.len());
        for &b in c {
            for &a in &out {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

fn tensor_labels(parts: &[Vec<String>]) -> Vec<String> {
    let mut out = vec![String::new()];
    for p in parts {
        let mut next = Vec::with_capacity(out.len() * p.len());
        for b in p {
            for a in &out {
                next.push(if a.is_empty() { b.clone() } else { format!("{a}:{b}") });
            }
        }
        out = next;
    }
    out
}

/// Levels in deterministic order: numeric order when every level parses as
/// a number, lexicographic otherwise.
pub fn sorted_levels<'a>(values: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut levels: Vec<String> = values.into_iter().map(str::to_string).collect();
    levels.sort();
    levels.dedup();
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        levels = paired.into_iter().map(|(_, l)| l).collect();
    }
    levels
}

/// Build the design matrix: intercept, numeric columns copied, factors
/// dummy-coded against their first level, interactions as products.
pub fn build_design(formula: &Formula, data: &Dataset) -> Result<DesignInfo> {
    let n = data.n_rows();
    let mut level_maps = BTreeMap::new();
    let mut numeric_means = BTreeMap::new();
    let mut row_cells: Vec<BTreeMap<String, Cell>> = vec![BTreeMap::new(); n];

    for var in formula.variables() {
        match data.column(&var)? {
            Column::Factor(values) => {
                let levels = sorted_levels(values.iter().flatten().map(String::as_str));
                if levels.len() < 2 {
                    return Err(Error::DegenerateFactor(var));
                }
                for (i, v) in values.iter().enumerate() {
                    let v = v.clone().ok_or_else(|| {
                        Error::InvalidSpec(format!("missing value in '{var}' at row {i}"))
                    })?;
                    row_cells[i].insert(var.clone(), Cell::Level(v));
                }
                level_maps.insert(var, levels);
            }
            Column::Numeric(values) => {
                let mean = values.iter().sum::<f64>() / n as f64;
                for (i, &v) in values.iter().enumerate() {
                    row_cells[i].insert(var.clone(), Cell::Number(v));
                }
                numeric_means.insert(var, mean);
            }
        }
    }

    let mut terms = vec![DesignTerm {
        label: INTERCEPT.to_string(),
        vars: Vec::new(),
        span: 0..1,
    }];
    let mut column_labels = vec![INTERCEPT.to_string()];
    for term in &formula.terms {
        let parts: Vec<Vec<String>> = term
            .vars()
            .iter()
            .map(|v| match level_maps.get(v) {
                Some(levels) => levels[1..].iter().map(|l| format!("{v}{l}")).collect(),
                None => vec![v.clone()],
            })
            .collect();
        let labels = tensor_labels(&parts);
        let start = column_labels.len();
        column_labels.extend(labels);
        terms.push(DesignTerm {
            label: term.label(),
            vars: term.vars().to_vec(),
            span: start..column_labels.len(),
        });
    }

    let mut info = DesignInfo {
        x: DMatrix::zeros(n, column_labels.len()),
        terms,
        column_labels,
        level_maps,
        numeric_means,
    };
    for (i, cells) in row_cells.iter().enumerate() {
        let row = info.encode_row(cells)?;
        for (j, v) in row.into_iter().enumerate() {
            info.x[(i, j)] = v;
        }
    }
    Ok(info)
}
