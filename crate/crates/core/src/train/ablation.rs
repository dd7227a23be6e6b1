use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::engine::Trainer;
use crate::data::TrainingSample;
use crate::error::{Error, Result};
use crate::eval::MetricPair;
use crate::nn::StyleMode;

/// One configuration of the style-label / component-encoder ablation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: String,
    pub style_mode: StyleMode,
    pub components_enabled: bool,
}

impl AblationConfig {
    pub fn new(name: &str, style_mode: StyleMode, components_enabled: bool) -> Self {
        Self {
            name: name.to_string(),
            style_mode,
            components_enabled,
        }
    }

    /// Embedding labels without component encoder, one-hot without, embedding
    /// with, and one-hot with (the full model).
    pub fn standard_matrix() -> Vec<Self> {
        vec![
            Self::new("embedding", StyleMode::Embedding, false),
            Self::new("onehot", StyleMode::Onehot, false),
            Self::new("embedding+components", StyleMode::Embedding, true),
            Self::new("onehot+components", StyleMode::Onehot, true),
        ]
    }

    /// Parses `name style_mode components` lines (`#` starts a comment).
    pub fn parse_matrix(text: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, mode, comps] = fields[..] else {
                return Err(Error::Config(format!(
                    "ablation matrix line {}: expected `name style_mode components`",
                    i + 1
                )));
            };
            let components_enabled = match comps {
                "true" | "on" | "yes" => true,
                "false" | "off" | "no" => false,
                other => {
                    return Err(Error::Config(format!(
                        "ablation matrix line {}: invalid components flag {other:?}",
                        i + 1
                    )))
                }
            };
            out.push(Self::new(name, mode.parse()?, components_enabled));
        }
        if out.is_empty() {
            return Err(Error::Config("ablation matrix is empty".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: AblationConfig,
    pub metrics: MetricPair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn format_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.config.name.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = format!("{:<width$}{:>12}{:>10}\n", "Method", "MSE", "SSIM");
        for r in &self.rows {
            writeln!(
                out,
                "{:<width$}{:>12.4}{:>10.4}",
                r.config.name, r.metrics.mse, r.metrics.ssim
            )
            .unwrap();
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tstyle_mode\tcomponents\tmse\tssim\n");
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.config.name, r.config.style_mode, r.config.components_enabled, r.metrics.mse, r.metrics.ssim
            )
            .unwrap();
        }
        out
    }
}

/// Trains every configuration from the same seed and data order, then scores
/// each on the test samples.
pub fn run_ablation(
    matrix: &[AblationConfig],
    base: &TrainConfig,
    train: &[TrainingSample],
    test: &[TrainingSample],
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(matrix.len());
    for entry in matrix {
        let cfg = TrainConfig {
            style_mode: entry.style_mode,
            components_enabled: entry.components_enabled,
            ..base.clone()
        };
        log::info!("ablation: training {}", entry.name);
        let mut trainer = Trainer::new(cfg)?;
        trainer.train(train, None, None)?;
        let report = trainer.evaluate(test)?;
        rows.push(AblationRow {
            config: entry.clone(),
            metrics: report.overall,
        });
    }
    Ok(AblationReport { rows })
}
