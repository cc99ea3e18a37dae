use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::experiment::run_experiment;
use super::stats::mean;
use crate::error::{HpflError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    pub mean_latency: f64,
    pub mean_importance: f64,
    pub mean_a_eff: f64,
    pub final_loss: f64,
    pub final_acc: f64,
}

/// `start:stop:step` (inclusive, rounded to 9 decimals) or a comma list.
pub fn parse_values(text: &str) -> Result<Vec<String>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 1 {
        let out: Vec<String> = text
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if out.is_empty() {
            return Err(HpflError::config("values", "empty value list"));
        }
        return Ok(out);
    }
    if parts.len() != 3 {
        return Err(HpflError::config("values", "expected start:stop:step"));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| HpflError::config("values", format!("not a number: {s:?}")))
    };
    let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) || stop < start {
        return Err(HpflError::config("values", "need step > 0 and stop >= start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| {
            let v = ((start + i as f64 * step) * 1e9).round() / 1e9;
            format!("{v}")
        })
        .collect())
}

/// One run per value of `param`, summarised over all rounds.
pub fn sweep(cfg: &ScenarioConfig, param: &str, values: &[String]) -> Result<Vec<SweepPoint>> {
    values
        .iter()
        .map(|value| {
            let run = run_experiment(&cfg.with_param(param, value)?)?;
            let r = &run.reports;
            let last = r.last();
            Ok(SweepPoint {
                value: value.clone(),
                mean_latency: mean(&r.iter().map(|x| x.latency).collect::<Vec<_>>()),
                mean_importance: mean(&r.iter().map(|x| x.importance).collect::<Vec<_>>()),
                mean_a_eff: mean(&r.iter().map(|x| x.a_eff as f64).collect::<Vec<_>>()),
                final_loss: last.map_or(f64::NAN, |x| x.loss),
                final_acc: last.map_or(f64::NAN, |x| x.acc),
            })
        })
        .collect()
}
