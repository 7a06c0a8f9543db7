//! Command-line front end: load data and a model spec, fit (or reuse a cached
//! fit) and print one of the test tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mcglm_core::estimator::{fit, FitOptions, FittedModel};
use mcglm_core::persist::{load_fit, save_fit};
use mcglm_core::report::{convergence_banner, render, render_lht, render_summary, ReportKind};
use mcglm_core::suites::{
    anova, anova_dispersion, default_dispersion_names, default_manova_dispersion_names, manova,
    manova_dispersion, AnovaType,
};
use mcglm_core::multcomp::{mult_multcomp, multcomp};
use mcglm_core::wald::linear_hypothesis;
use mcglm_core::{Dataset, ModelSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mcglm_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn module(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.module(),
            CliError::Usage(_) | CliError::Io(_) => "cli",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "mcglm", version, about = "Fit multivariate covariance GLMs and run Wald tests")]
pub struct Cli {
    /// CSV file with a header row.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Model specification (JSON).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Reuse this fit file when present, otherwise write it after fitting.
    #[arg(long, global = true)]
    pub fit_cache: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Reserved; fitting is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the iteration trace to this file.
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, global = true, default_value_t = 1e-4)]
    pub tol: f64,
    /// Step factor for the dispersion update.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub alpha: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and print the estimates.
    Fit {
        /// Save the fitted model to this file.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Print estimates, standard errors and convergence information.
    Summary,
    /// ANOVA table per response.
    Anova(TypeArg),
    /// Joint table over all responses.
    Manova(TypeArg),
    /// Dispersion tests per response, e.g. `--groups "0,1;0,1"`.
    AnovaDisp(GroupArgs),
    /// Joint dispersion tests, e.g. `--groups "0,1"`.
    ManovaDisp(GroupArgs),
    /// Pairwise comparisons of adjusted means.
    Multcomp {
        /// Comma-separated factor names.
        #[arg(long, value_delimiter = ',', required = true)]
        effects: Vec<String>,
        #[arg(long, conflicts_with = "multivariate")]
        per_response: bool,
        #[arg(long)]
        multivariate: bool,
    },
    /// General linear hypothesis, e.g. `--hypothesis "beta11 = 0"`.
    Lht {
        #[arg(long = "hypothesis", required = true)]
        hypotheses: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct TypeArg {
    #[arg(long = "type", value_parser = clap::value_parser!(u8).range(1..=3))]
    pub kind: u8,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Index lists, one per response separated by `;`.
    #[arg(long)]
    pub groups: Option<String>,
    /// Row names, lists separated by `;`.
    #[arg(long)]
    pub names: Option<String>,
}

/// `"0,1;0,1"` -> `[[0, 1], [0, 1]]`.
pub fn parse_groups(text: &str) -> Result<Vec<Vec<usize>>> {
    text.split(';')
        .map(|part| {
            part.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| CliError::Usage(format!("invalid group index '{}'", s.trim())))
                })
                .collect()
        })
        .collect()
}

/// `"a,b;c,d"` -> `[["a", "b"], ["c", "d"]]`.
pub fn parse_names(text: &str) -> Vec<Vec<String>> {
    text.split(';')
        .map(|part| part.split(',').map(|s| s.trim().to_string()).collect())
        .collect()
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

fn load_inputs(cli: &Cli) -> Result<(ModelSpec, Dataset)> {
    let model_path = required(&cli.model, "model")?;
    let data_path = required(&cli.data, "data")?;
    let spec = ModelSpec::from_json(&fs::read_to_string(model_path)?)?;
    let data = Dataset::from_csv_path(data_path, &spec.column_types)?;
    Ok((spec, data))
}

fn write_trace(path: &Path, model: &FittedModel) -> Result<()> {
    let mut out = String::from("iteration psi_beta_max psi_lambda_max beta_halvings lambda_halvings max_change\n");
    for r in &model.trace {
        out.push_str(&format!(
            "{} {:.6e} {:.6e} {} {} {:.6e}\n",
            r.iteration, r.psi_beta_max, r.psi_lambda_max, r.beta_halvings, r.lambda_halvings, r.max_change
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn obtain_fit(cli: &Cli, spec: &ModelSpec, data: &Dataset) -> Result<FittedModel> {
    if let Some(cache) = &cli.fit_cache {
        if cache.exists() {
            log::info!("loading cached fit from {}", cache.display());
            return Ok(load_fit(cache, Some(spec))?);
        }
    }
    let opts = FitOptions {
        max_iter: cli.max_iter,
        tol: cli.tol,
        alpha: cli.alpha,
        verbose: cli.trace.is_some(),
        ..FitOptions::default()
    };
    let model = fit(spec, data, &opts)?;
    if let Some(path) = &cli.trace {
        write_trace(path, &model)?;
    }
    if let Some(cache) = &cli.fit_cache {
        save_fit(&model, cache)?;
    }
    Ok(model)
}

fn anova_type(kind: u8) -> Result<AnovaType> {
    AnovaType::from_number(kind).ok_or_else(|| CliError::Usage(format!("invalid ANOVA type {kind}")))
}

fn flatten_single(groups: Vec<Vec<usize>>) -> Result<Vec<usize>> {
    match <[Vec<usize>; 1]>::try_from(groups) {
        Ok([g]) => Ok(g),
        Err(_) => Err(CliError::Usage("manova-disp takes a single index list".into())),
    }
}

fn report(cli: &Cli, model: &FittedModel, data: &Dataset) -> Result<String> {
    Ok(match &cli.command {
        Command::Fit { save } => {
            if let Some(path) = save {
                save_fit(model, path)?;
            }
            render_summary(model)
        }
        Command::Summary => render_summary(model),
        Command::Anova(t) => {
            let ty = anova_type(t.kind)?;
            render(ReportKind::Anova(ty), &anova(model, ty)?)
        }
        Command::Manova(t) => {
            let ty = anova_type(t.kind)?;
            render(ReportKind::Manova(ty), &[manova(model, ty)?])
        }
        Command::AnovaDisp(g) => {
            let groups = match &g.groups {
                Some(text) => parse_groups(text)?,
                None => model.lambda.tau.iter().map(|t| (0..t.len()).collect()).collect(),
            };
            let names = match &g.names {
                Some(text) => parse_names(text),
                None => default_dispersion_names(&groups),
            };
            render(ReportKind::AnovaDispersion, &anova_dispersion(model, &groups, &names)?)
        }
        Command::ManovaDisp(g) => {
            let groups = match &g.groups {
                Some(text) => flatten_single(parse_groups(text)?)?,
                None => (0..model.lambda.tau[0].len()).collect(),
            };
            let names = match &g.names {
                Some(text) => parse_names(text).into_iter().flatten().collect(),
                None => default_manova_dispersion_names(&groups),
            };
            render(ReportKind::ManovaDispersion, &[manova_dispersion(model, &groups, &names)?])
        }
        Command::Multcomp {
            effects,
            multivariate,
            ..
        } => {
            if *multivariate {
                render(ReportKind::MultMultcomp, &[mult_multcomp(model, effects, data)?])
            } else {
                let per = vec![effects.clone(); model.n_responses()];
                render(ReportKind::Multcomp, &multcomp(model, &per, data)?)
            }
        }
        Command::Lht { hypotheses } => {
            let (hyp, res) = linear_hypothesis(model, hypotheses)?;
            render_lht(&hyp, &res)
        }
    })
}

/// Report text and whether the fit converged.
pub fn execute(cli: &Cli) -> Result<(String, bool)> {
    let (spec, data) = load_inputs(cli)?;
    let model = obtain_fit(cli, &spec, &data)?;
    let mut text = convergence_banner(&model).unwrap_or_default();
    text.push_str(&report(cli, &model, &data)?);
    Ok((text, model.converged))
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Exit code: 0 on success, 2 when the fit did not converge (the report is
/// still written), 1 on any error.
pub fn run(cli: &Cli) -> i32 {
    let outcome = execute(cli).and_then(|(text, converged)| {
        emit(cli, &text)?;
        Ok(converged)
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error [{}]: {}", e.module(), msg);
            1
        }
    }
}
