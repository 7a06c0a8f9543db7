//! Multiple comparisons between adjusted means of factor-level combinations,
//! with Bonferroni-corrected Wald tests.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::data::{Column, Dataset};
use crate::design::{Cell, DesignInfo};
use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::suites::{check_shared_predictor, TestTable};
use crate::wald::{wald_test, Hypothesis, TestResult};

/// Adjusted-means matrix `K0` and the pairwise contrasts `K1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSet {
    pub k0: DMatrix<f64>,
    pub combo_labels: Vec<String>,
    pub k1: DMatrix<f64>,
    pub contrast_labels: Vec<String>,
}

/// Level combinations in grid order, first factor varying fastest.
fn grid(levels: &[&Vec<String>]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = vec![Vec::new()];
    for lv in levels {
        let mut next = Vec::with_capacity(out.len() * lv.len());
        for l in lv.iter() {
            for prefix in &out {
                let mut c = prefix.clone();
                c.push(l.clone());
                next.push(c);
            }
        }
        out = next;
    }
    out
}

fn observed_combos(data: &Dataset, factors: &[String]) -> Result<BTreeSet<Vec<String>>> {
    let cols: Vec<Vec<String>> = factors
        .iter()
        .map(|f| Ok(data.column(f)?.as_strings()))
        .collect::<Result<_>>()?;
    Ok((0..data.n_rows())
        .map(|i| cols.iter().map(|c| c[i].clone()).collect())
        .collect())
}

/// Rows of adjusted means for every observed combination of `factors`.
///
/// Unrelated factors sit at their reference level and numeric covariates at
/// their sample mean; both cancel in the contrasts.
pub fn build_k0(
    design: &DesignInfo,
    response: usize,
    factors: &[String],
    data: &Dataset,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    if factors.is_empty() {
        return Err(Error::InvalidSpec("at least one factor is required".into()));
    }
    for f in factors {
        if design.is_factor(f) {
            continue;
        }
        return Err(match data.column(f) {
            Ok(Column::Factor(_)) => Error::FactorNotInFormula {
                factor: f.clone(),
                response: response + 1,
            },
            _ => Error::UnknownFactor(f.clone()),
        });
    }
    let levels: Vec<&Vec<String>> = factors.iter().map(|f| &design.level_maps[f]).collect();
    let observed = observed_combos(data, factors)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for combo in grid(&levels) {
        if !observed.contains(&combo) {
            log::warn!("level combination {} is not observed; skipped", combo.join(":"));
            continue;
        }
        let mut cells: BTreeMap<String, Cell> = BTreeMap::new();
        for (var, lv) in &design.level_maps {
            cells.insert(var.clone(), Cell::Level(lv[0].clone()));
        }
        for (var, mean) in &design.numeric_means {
            cells.insert(var.clone(), Cell::Number(*mean));
        }
        for (f, l) in factors.iter().zip(&combo) {
            cells.insert(f.clone(), Cell::Level(l.clone()));
        }
        rows.push(design.encode_row(&cells)?);
        labels.push(combo.join(":"));
    }
    let k = design.n_cols();
    let k0 = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    Ok((k0, labels))
}

/// Pairwise differences `K0[i] - K0[j]` for `i < j`, labeled `Li-Lj`.
pub fn build_k1(k0: &DMatrix<f64>, labels: &[String]) -> (DMatrix<f64>, Vec<String>) {
    let g = k0.nrows();
    let mut rows = Vec::with_capacity(g * g.saturating_sub(1) / 2);
    let mut out_labels = Vec::with_capacity(rows.capacity());
    for i in 0..g {
        for j in (i + 1)..g {
            rows.push(k0.row(i) - k0.row(j));
            out_labels.push(format!("{}-{}", labels[i], labels[j]));
        }
    }
    let k1 = if rows.is_empty() {
        DMatrix::zeros(0, k0.ncols())
    } else {
        DMatrix::from_rows(&rows)
    };
    (k1, out_labels)
}

pub fn contrast_set(design: &DesignInfo, response: usize, factors: &[String], data: &Dataset) -> Result<ContrastSet> {
    let (k0, combo_labels) = build_k0(design, response, factors, data)?;
    let (k1, contrast_labels) = build_k1(&k0, &combo_labels);
    Ok(ContrastSet {
        k0,
        combo_labels,
        k1,
        contrast_labels,
    })
}

/// `min(1, p * m)`.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

fn complete_rows(model: &FittedModel, data: &Dataset) -> Result<Dataset> {
    Ok(data.drop_incomplete(&model.spec.bound_columns())?.0)
}

/// Contrast rows in label order, with their source index.
fn sorted_contrasts(labels: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    idx
}

fn run_contrasts(
    model: &FittedModel,
    set: &ContrastSet,
    starts: &[usize],
) -> Result<Vec<TestResult>> {
    let m = set.k1.nrows();
    if m == 0 {
        return Err(Error::InvalidSpec("fewer than two observed level combinations".into()));
    }
    let h = model.n_theta_star();
    let k = set.k1.ncols();
    sorted_contrasts(&set.contrast_labels)
        .into_iter()
        .map(|c| {
            let mut l = DMatrix::zeros(starts.len(), h);
            for (row, &start) in starts.iter().enumerate() {
                for j in 0..k {
                    l[(row, start + j)] = set.k1[(c, j)];
                }
            }
            let label = set.contrast_labels[c].clone();
            let hyp = Hypothesis::new(l, nalgebra::DVector::zeros(starts.len()), vec![label.clone(); starts.len()])?;
            let mut res = wald_test(model, &hyp)?;
            res.label = label;
            res.p_value = bonferroni(res.p_value, m);
            Ok(res)
        })
        .collect()
}

/// Per-response comparisons; `effects[r]` lists the factors for response `r`.
pub fn multcomp(model: &FittedModel, effects: &[Vec<String>], data: &Dataset) -> Result<Vec<TestTable>> {
    if effects.len() != model.n_responses() {
        return Err(Error::LengthMismatch {
            what: "effects (one list per response)".into(),
            expected: model.n_responses(),
            got: effects.len(),
        });
    }
    let data = complete_rows(model, data)?;
    (0..model.n_responses())
        .map(|r| {
            let set = contrast_set(&model.designs[r], r, &effects[r], &data)?;
            let rows = run_contrasts(model, &set, &[model.beta_spans[r].start])?;
            Ok(TestTable {
                caption: model.spec.responses[r].formula.source().to_string(),
                label_header: "Contrast".into(),
                rows,
            })
        })
        .collect()
}

/// Joint comparisons over all responses with `I_R ⊗ K1`.
pub fn mult_multcomp(model: &FittedModel, effects: &[String], data: &Dataset) -> Result<TestTable> {
    check_shared_predictor(model)?;
    let data = complete_rows(model, data)?;
    let set = contrast_set(&model.designs[0], 0, effects, &data)?;
    let starts: Vec<usize> = model.beta_spans.iter().map(|s| s.start).collect();
    let rows = run_contrasts(model, &set, &starts)?;
    let rhs: String = model.spec.responses[0]
        .formula
        .rhs_source()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    Ok(TestTable {
        caption: format!("~ {rhs}"),
        label_header: "Contrast".into(),
        rows,
    })
}
