//! Experiment presets shipped as JSON data files.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::montecarlo::{ldp_slope_experiment, ConcentrationConfig, ExperimentConfig, LdpTable};
use crate::rate_functions::RateValue;
use crate::rng::substream_key;

const DESK: &str = include_str!("../presets/desk.json");
const QUICK: &str = include_str!("../presets/quick.json");
const THOROUGH: &str = include_str!("../presets/thorough.json");

pub const PRESET_NAMES: [&str; 3] = ["desk", "quick", "thorough"];

/// Pass rule applied to an experiment's table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// Report only.
    None,
    /// `|ratio - 1| <= max` on every row.
    RelativeError { max: f64 },
    /// `lo <= ratio <= hi` on every row.
    RatioRange { lo: f64, hi: f64 },
    /// Every rate estimate is positive and `p̂` never increases along the listed thresholds.
    PositiveDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpExperiment {
    pub label: String,
    pub config: ExperimentConfig,
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub ldp: Vec<LdpExperiment>,
    #[serde(default)]
    pub concentration: Option<ConcentrationConfig>,
}

impl Preset {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "desk" => DESK,
            "quick" => QUICK,
            "thorough" => THOROUGH,
            other => return invalid(format!("unknown preset {other:?}; expected one of {PRESET_NAMES:?}")),
        };
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Replaces every seed by one derived from `seed` and the experiment's position.
    pub fn reseed(&mut self, seed: u64) {
        for (i, e) in self.ldp.iter_mut().enumerate() {
            e.config.seed = substream_key(seed, i as u64, 0);
        }
        if let Some(c) = &mut self.concentration {
            c.seed = substream_key(seed, self.ldp.len() as u64, 0);
        }
    }

    pub fn set_workers(&mut self, workers: Option<usize>) {
        if workers.is_none() {
            return;
        }
        for e in &mut self.ldp {
            e.config.workers = workers;
        }
        if let Some(c) = &mut self.concentration {
            c.workers = workers;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub label: String,
    pub check: Check,
    pub pass: bool,
    pub detail: String,
}

pub fn evaluate(label: &str, table: &LdpTable, check: &Check) -> CheckOutcome {
    let (pass, detail) = match check {
        Check::None => (true, "report only".to_string()),
        Check::RelativeError { max } => ratio_rule(table, |r| (r - 1.0).abs() <= *max, &format!("|ratio - 1| <= {max}")),
        Check::RatioRange { lo, hi } => ratio_rule(table, |r| *lo <= r && r <= *hi, &format!("{lo} <= ratio <= {hi}")),
        Check::PositiveDecay => {
            let positive = table.rows.iter().all(|row| match row.point.estimate.rate_estimate {
                RateValue::Finite(v) => v > 0.0,
                RateValue::Infinite => true,
            });
            let mut decay = true;
            for size in table.rows.iter().map(|r| r.point.size).collect::<std::collections::BTreeSet<_>>() {
                let p: Vec<f64> =
                    table.rows.iter().filter(|r| r.point.size == size).map(|r| r.point.estimate.p_hat).collect();
                decay &= p.windows(2).all(|w| w[1] <= w[0]);
            }
            (positive && decay, format!("positive rates: {positive}, p_hat nonincreasing: {decay}"))
        }
    };
    CheckOutcome { label: label.to_string(), check: check.clone(), pass, detail }
}

fn ratio_rule(table: &LdpTable, ok: impl Fn(f64) -> bool, rule: &str) -> (bool, String) {
    let ratios: Vec<Option<f64>> = table.rows.iter().map(|r| r.ratio).collect();
    let pass = !ratios.is_empty() && ratios.iter().all(|r| r.is_some_and(&ok));
    let shown: Vec<String> = ratios.iter().map(|r| r.map_or("undefined".into(), |v| format!("{v:.4}"))).collect();
    (pass, format!("{rule}; ratios [{}]", shown.join(", ")))
}

/// Runs one experiment and applies its check.
pub fn run_experiment(exp: &LdpExperiment) -> Result<(LdpTable, CheckOutcome)> {
    let table = ldp_slope_experiment(&exp.config)?;
    let outcome = evaluate(&exp.label, &table, &exp.check);
    Ok((table, outcome))
}
