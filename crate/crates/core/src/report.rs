//! Plain-text rendering of test tables and fit summaries.

use crate::estimator::FittedModel;
use crate::suites::{coefficient_table, AnovaType, TestTable};
use crate::wald::{Hypothesis, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Anova(AnovaType),
    Manova(AnovaType),
    AnovaDispersion,
    ManovaDispersion,
    Multcomp,
    MultMultcomp,
}

impl ReportKind {
    pub fn title(self) -> String {
        match self {
            Self::Anova(t) => format!("ANOVA type {t} using Wald statistic for fixed effects"),
            Self::Manova(t) => format!("MANOVA type {t} using Wald statistic for fixed effects"),
            Self::AnovaDispersion => "ANOVA type III using Wald statistic for dispersion parameters".into(),
            Self::ManovaDispersion => "MANOVA type III using Wald statistic for dispersion parameters".into(),
            Self::Multcomp => "Multiple comparisons test for each outcome using Wald statistic".into(),
            Self::MultMultcomp => "Multivariate multiple comparisons test using Wald statistic".into(),
        }
    }

    fn is_joint(self) -> bool {
        matches!(self, Self::Manova(_) | Self::ManovaDispersion | Self::MultMultcomp)
    }
}

/// Right-aligned fixed-width columns separated by one space.
fn render_grid(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain(std::iter::once(header[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = line(header);
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn result_cells(r: &TestResult) -> [String; 3] {
    [r.df.to_string(), fmt4(r.statistic), fmt4(r.p_value)]
}

/// Table body with a row-number column, label column and `Df`, `Chi`, `Pr(>Chi)`.
pub fn format_table(t: &TestTable) -> String {
    let header: Vec<String> = ["", t.label_header.as_str(), "Df", "Chi", "Pr(>Chi)"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let [df, chi, p] = result_cells(r);
            vec![(i + 1).to_string(), r.label.clone(), df, chi, p]
        })
        .collect();
    render_grid(&header, &rows)
}

pub fn render(kind: ReportKind, tables: &[TestTable]) -> String {
    let mut out = kind.title();
    out.push('\n');
    for t in tables {
        out.push_str(&format!("\nCall: {}\n", t.caption));
        if !kind.is_joint() {
            out.push('\n');
        }
        out.push_str(&format_table(t));
    }
    out
}

pub fn render_lht(hyp: &Hypothesis, res: &TestResult) -> String {
    let mut out = String::from("Linear hypothesis test\n\nHypothesis:\n");
    for (i, l) in hyp.row_labels.iter().enumerate() {
        out.push_str(&format!("{} {}\n", i + 1, l));
    }
    out.push_str("\nResults:\n");
    let header: Vec<String> = ["", "Df", "Chi", "Pr(>Chi)"].iter().map(|s| s.to_string()).collect();
    let [df, chi, p] = result_cells(res);
    out.push_str(&render_grid(&header, &[vec!["1".into(), df, chi, p]]));
    out
}

pub fn convergence_banner(model: &FittedModel) -> Option<String> {
    (!model.converged).then(|| {
        format!(
            "WARNING: the fitting algorithm did not converge after {} iterations; results may be unreliable.\n",
            model.iterations
        )
    })
}

pub fn render_summary(model: &FittedModel) -> String {
    let mut out = String::new();
    for (r, rs) in model.spec.responses.iter().enumerate() {
        out.push_str(&format!(
            "Response {}: {}\n  link: {:?}  variance: {:?} (power {})  matrix predictor terms: {}\n",
            r + 1,
            rs.formula.source(),
            rs.link,
            rs.variance,
            fmt4(rs.power),
            model.lambda.tau[r].len()
        ));
    }
    out.push('\n');
    let header: Vec<String> = ["Parameter", "Estimate", "Std.error", "Z value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = coefficient_table(model)
        .into_iter()
        .map(|(l, est, se)| vec![l, fmt4(est), fmt4(se), fmt4(est / se)])
        .collect();
    out.push_str(&render_grid(&header, &rows));
    if !model.lambda.rho.is_empty() {
        out.push_str("\nCorrelation parameters:\n");
        let pairs = crate::covariance::rho_pairs(model.n_responses());
        for ((a, b), v) in pairs.iter().zip(&model.lambda.rho) {
            out.push_str(&format!("  rho{}{} {}\n", a + 1, b + 1, fmt4(*v)));
        }
    }
    out.push_str(&format!(
        "\nObservations: {}  Iterations: {}  Converged: {}\n",
        model.n_obs, model.iterations, model.converged
    ));
    out
}
