//! Scoring of parameter estimates and Gaussian predictive distributions.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{std_normal_cdf, std_normal_pdf};

/// `(mean(θ̂ − θ), sqrt(mean((θ̂ − θ)²)))`.
pub fn bias_rmse(estimates: &[f64], truth: f64) -> Result<(f64, f64)> {
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no estimates to score".into()));
    }
    let n = estimates.len() as f64;
    let bias = estimates.iter().map(|e| e - truth).sum::<f64>() / n;
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n;
    Ok((bias, mse.sqrt()))
}

/// CRPS of `N(mean, sd²)` at `y`:
/// `sd [z(2Φ(z) − 1) + 2φ(z) − 1/√π]` with `z = (y − mean)/sd`.
pub fn crps_gaussian(mean: f64, sd: f64, y: f64) -> Result<f64> {
    if !(sd >= 0.0) {
        return Err(Error::InvalidInput(format!("predictive sd must be non-negative, got {sd}")));
    }
    if sd == 0.0 {
        return Ok((y - mean).abs());
    }
    let z = (y - mean) / sd;
    Ok(sd * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / PI.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionScores {
    pub rmse: f64,
    pub crps: f64,
}

/// RMSE of the predictive means and mean CRPS against true values.
pub fn prediction_scores(mean: &[f64], sd: &[f64], truth: &[f64]) -> Result<PredictionScores> {
    if mean.len() != sd.len() || mean.len() != truth.len() {
        return Err(Error::InvalidInput("prediction and truth lengths differ".into()));
    }
    if mean.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    let n = mean.len() as f64;
    let mut se = 0.0;
    let mut crps = 0.0;
    for i in 0..mean.len() {
        se += (mean[i] - truth[i]).powi(2);
        crps += crps_gaussian(mean[i], sd[i], truth[i])?;
    }
    Ok(PredictionScores {
        rmse: (se / n).sqrt(),
        crps: crps / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterScore {
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    pub fits: usize,
    pub failures: usize,
    pub parameters: Vec<ParameterScore>,
    pub prediction: PredictionScores,
}

impl ModelScores {
    pub fn parameter(&self, name: &str) -> Option<&ParameterScore> {
        self.parameters.iter().find(|p| p.parameter == name)
    }
}

/// Bias/RMSE per model and parameter plus predictive scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub title: String,
    pub models: Vec<ModelScores>,
}

impl ScoreTable {
    pub fn model(&self, name: &str) -> Option<&ModelScores> {
        self.models.iter().find(|m| m.model.eq_ignore_ascii_case(name))
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for m in &self.models {
            for p in &m.parameters {
                if !names.contains(&p.parameter) {
                    names.push(p.parameter.clone());
                }
            }
        }
        names
    }

    /// Long-format CSV: one row per model, metric and parameter.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,metric,parameter,value,unit\n");
        for m in &self.models {
            for p in &m.parameters {
                let unit = unit_of(&p.parameter);
                let _ = writeln!(out, "{},bias,{},{},{unit}", m.model, p.parameter, p.bias);
                let _ = writeln!(out, "{},rmse,{},{},{unit}", m.model, p.parameter, p.rmse);
            }
            let _ = writeln!(out, "{},pred_rmse,eta,{},logit", m.model, m.prediction.rmse);
            let _ = writeln!(out, "{},pred_crps,eta,{},logit", m.model, m.prediction.crps);
            let _ = writeln!(out, "{},fits,all,{},count", m.model, m.fits);
            let _ = writeln!(out, "{},failures,all,{},count", m.model, m.failures);
        }
        out
    }

    /// Aligned text table, bias and RMSE blocks followed by prediction scores.
    pub fn to_text(&self) -> String {
        let names = self.parameter_names();
        let mut header = vec!["metric".to_string(), "model".to_string()];
        header.extend(names.iter().map(|n| format!("{n}[{}]", unit_of(n))));
        header.push("pred_rmse[logit]".into());
        header.push("pred_crps[logit]".into());
        let mut rows = vec![header];
        for metric in ["bias", "rmse"] {
            for m in &self.models {
                let mut row = vec![metric.to_string(), m.model.clone()];
                for n in &names {
                    row.push(match m.parameter(n) {
                        Some(p) => format!("{:.4}", if metric == "bias" { p.bias } else { p.rmse }),
                        None => "-".into(),
                    });
                }
                if metric == "rmse" {
                    row.push(format!("{:.4}", m.prediction.rmse));
                    row.push(format!("{:.4}", m.prediction.crps));
                } else {
                    row.push("-".into());
                    row.push("-".into());
                }
                rows.push(row);
            }
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "# {}", self.title);
        }
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

fn unit_of(parameter: &str) -> &'static str {
    match parameter {
        "rho" => "km",
        "sigma2" => "logit^2",
        _ => "logit",
    }
}
