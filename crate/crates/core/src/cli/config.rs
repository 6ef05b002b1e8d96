//! TOML experiment configuration. See `docs/config.md` for the schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_rational::Rational64;
use serde::Deserialize;
use toml::Spanned;

use super::CliError;
use crate::model::{
    build_linear_rational_class, ClassEntry, InputToken, ModelClass, Prior, TabularClassificationModel,
    DEFAULT_SIGMA_FLOOR,
};
use crate::quadrature::QuadratureSpec;
use crate::simulate::{InputProcess, PredictorSet, Scenario};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Overrides every scenario's seed when present.
    pub seed: Option<u64>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub scenario: BTreeMap<String, Spanned<ScenarioConfig>>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    Regression,
    Classification,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub kind: ScenarioKind,
    pub horizon: Spanned<i64>,
    pub runs: Spanned<i64>,
    #[serde(default)]
    pub seed: u64,
    /// Index of the true model; defaults to 0.
    pub true_model: Option<Spanned<i64>>,
    pub predictors: Option<Spanned<Vec<String>>>,
    pub class: Spanned<ClassConfig>,
    pub inputs: Spanned<InputConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RationalValue {
    Int(i64),
    Text(String),
}

impl RationalValue {
    fn parse(&self) -> Result<Rational64, String> {
        match self {
            RationalValue::Int(v) => Ok(Rational64::from_integer(*v)),
            RationalValue::Text(s) => s.trim().parse().map_err(|_| format!("'{s}' is not a rational like \"3/4\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorConfig {
    #[default]
    Uniform,
    CodeLength,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassConfig {
    /// Every `(slope, intercept)` pair of the two grids.
    LinearGrid {
        slopes: Vec<RationalValue>,
        intercepts: Vec<RationalValue>,
        sigma: f64,
        #[serde(default)]
        prior: PriorConfig,
        sigma_floor: Option<f64>,
    },
    /// One table per model: `tables[model][symbol][label]`.
    Tabular {
        tables: Vec<Vec<Vec<f64>>>,
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    IidUniform { low: f64, high: f64 },
    FixedCycle { values: Option<Vec<f64>>, symbols: Option<Vec<u32>> },
    GaussianWalk { step: f64 },
    IidSymbols { count: u32 },
}

/// A scenario ready to execute.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub kind: ScenarioKind,
    pub scenario: Scenario,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<i64>,
    pub horizon: Option<i64>,
    pub predictors: Option<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: ExperimentConfig,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| line_of(&text, s.start)).unwrap_or(1);
            CliError::Config {
                path: path.to_path_buf(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        config.quadrature.validate().map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: text.lines().position(|l| l.trim() == "[quadrature]").map_or(1, |i| i + 1),
            message: e.to_string(),
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            text,
            config,
        })
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            line: line_of(&self.text, offset),
            message: message.into(),
        }
    }

    pub fn scenario_names(&self) -> Vec<&str> {
        self.config.scenario.keys().map(String::as_str).collect()
    }

    /// Builds scenario `name` with `overrides` applied; every range check
    /// reports the line of the offending field.
    pub fn resolve(&self, name: &str, overrides: &Overrides) -> Result<ResolvedScenario, CliError> {
        let spanned = self.config.scenario.get(name).ok_or_else(|| CliError::UnknownScenario {
            name: name.to_string(),
            known: self.scenario_names().join(", "),
        })?;
        let block = spanned.get_ref();
        let at = |s: &std::ops::Range<usize>| s.start;

        let horizon = overrides.horizon.unwrap_or(*block.horizon.get_ref());
        if horizon < 1 {
            return Err(self.err(at(&block.horizon.span()), "horizon must be ≥ 1"));
        }
        let runs = overrides.runs.unwrap_or(*block.runs.get_ref());
        if runs < 1 {
            return Err(self.err(at(&block.runs.span()), "runs must be ≥ 1"));
        }
        let predictors = match (&overrides.predictors, &block.predictors) {
            (Some(list), _) => PredictorSet::parse(list).map_err(|e| CliError::Usage(e.to_string()))?,
            (None, Some(list)) => PredictorSet::parse(&list.get_ref().join(","))
                .map_err(|e| self.err(at(&list.span()), e.to_string()))?,
            (None, None) => PredictorSet::ALL,
        };

        let class_span = at(&block.class.span());
        let class = build_class(block.class.get_ref()).map_err(|m| self.err(class_span, m))?;
        let (true_index, true_at) = match &block.true_model {
            Some(t) => (*t.get_ref(), at(&t.span())),
            None => (0, spanned.span().start),
        };
        let in_class = usize::try_from(true_index).ok().filter(|&i| class.len().is_some_and(|n| i < n));
        let Some(true_index) = in_class else {
            return Err(self.err(
                true_at,
                format!("true_model {true_index} is outside the class of {} members", class.len().unwrap_or(0)),
            ));
        };
        let inputs_span = at(&block.inputs.span());
        let inputs = build_inputs(block.inputs.get_ref()).map_err(|m| self.err(inputs_span, m))?;

        let scenario = Scenario {
            name: name.to_string(),
            class: Arc::new(class),
            true_index,
            inputs,
            horizon: horizon as usize,
            runs: runs as usize,
            seed: overrides.seed.or(self.config.seed).unwrap_or(block.seed),
            predictors,
            quadrature: self.config.quadrature,
        };
        scenario
            .validate()
            .map_err(|e| self.err(spanned.span().start, e.to_string()))?;
        let kind_matches = match block.kind {
            ScenarioKind::Regression => matches!(block.class.get_ref(), ClassConfig::LinearGrid { .. }),
            ScenarioKind::Classification => matches!(block.class.get_ref(), ClassConfig::Tabular { .. }),
        };
        if !kind_matches {
            return Err(self.err(class_span, "class type does not match the scenario kind"));
        }
        Ok(ResolvedScenario {
            kind: block.kind,
            scenario,
        })
    }
}

fn build_class(cfg: &ClassConfig) -> Result<ModelClass, String> {
    match cfg {
        ClassConfig::LinearGrid {
            slopes,
            intercepts,
            sigma,
            prior,
            sigma_floor,
        } => {
            let slopes: Vec<Rational64> = slopes.iter().map(RationalValue::parse).collect::<Result<_, _>>()?;
            let intercepts: Vec<Rational64> = intercepts.iter().map(RationalValue::parse).collect::<Result<_, _>>()?;
            let grid: Vec<_> = slopes
                .iter()
                .flat_map(|a| intercepts.iter().map(move |b| (*a, *b)))
                .collect();
            let prior = match prior {
                PriorConfig::Uniform => Prior::Uniform,
                PriorConfig::CodeLength => Prior::CodeLength,
            };
            build_linear_rational_class(&grid, *sigma, prior, sigma_floor.unwrap_or(DEFAULT_SIGMA_FLOOR))
                .map_err(|e| e.to_string())
        }
        ClassConfig::Tabular { tables, weights } => {
            if tables.is_empty() {
                return Err("tabular class needs at least one table".into());
            }
            let weights = match weights {
                Some(w) if w.len() != tables.len() => {
                    return Err(format!("{} weights for {} tables", w.len(), tables.len()));
                }
                Some(w) => w.clone(),
                None => vec![1.0 / tables.len() as f64; tables.len()],
            };
            let entries = tables
                .iter()
                .zip(weights)
                .map(|(rows, w)| {
                    TabularClassificationModel::from_table(rows.clone()).map(|m| ClassEntry::new(w, m))
                })
                .collect::<crate::Result<Vec<_>>>()
                .map_err(|e| e.to_string())?;
            ModelClass::finite(entries).map_err(|e| e.to_string())
        }
    }
}

fn build_inputs(cfg: &InputConfig) -> Result<InputProcess, String> {
    Ok(match cfg {
        InputConfig::IidUniform { low, high } => InputProcess::IidUniform { low: *low, high: *high },
        InputConfig::FixedCycle { values, symbols } => match (values, symbols) {
            (Some(v), None) => InputProcess::FixedCycle(v.iter().map(|x| InputToken::scalar(*x)).collect()),
            (None, Some(s)) => InputProcess::FixedCycle(s.iter().map(|x| InputToken::symbol(*x)).collect()),
            _ => return Err("fixed-cycle needs exactly one of `values` or `symbols`".into()),
        },
        InputConfig::GaussianWalk { step } => InputProcess::GaussianWalk { step: *step },
        InputConfig::IidSymbols { count } => InputProcess::IidSymbols { count: *count },
    })
}
