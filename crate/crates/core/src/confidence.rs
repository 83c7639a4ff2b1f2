//! Token-level confidence (the Chow family) and per-model z-score calibration.
//!
//! Raw log-probability statistics from different models live on different
//! scales; [`CalibrationStats`] records each model's mean and spread on a
//! calibration subset so scores can be compared after [`z_normalize`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Standard deviations below this are treated as degenerate.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfidenceError {
    #[error("cannot score an empty log-probability sequence")]
    EmptySequence,
    #[error("log-probability at position {index} is {value}; expected a finite value <= 0")]
    InvalidLogProb { index: usize, value: f64 },
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("model {model:?} has {count} calibration samples; at least 2 are required")]
    InsufficientSamples { model: String, count: usize },
    #[error("calibration sample for model {0:?} is not finite")]
    NonFiniteSample(String),
    #[error("no calibration statistics for model {0:?}")]
    UnknownModel(String),
    #[error("model {model:?} has standard deviation {std} below the floor {SIGMA_FLOOR}")]
    DegenerateCalibration { model: String, std: f64 },
    #[error("invalid calibration document: {0}")]
    InvalidDocument(String),
}

/// Natural-log probabilities of generated tokens, in generation order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LogProbSeq(Vec<f64>);

impl LogProbSeq {
    pub fn new(values: Vec<f64>) -> Result<Self, ConfidenceError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v > 0.0)
        {
            return Err(ConfidenceError::InvalidLogProb { index, value });
        }
        Ok(LogProbSeq(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'de> Deserialize<'de> for LogProbSeq {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        LogProbSeq::new(values).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChowVariant {
    Sum,
    Avg,
    Quantile { q: f64 },
}

impl ChowVariant {
    pub fn quantile(q: f64) -> Result<Self, ConfidenceError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(ConfidenceError::InvalidQuantile(q));
        }
        Ok(ChowVariant::Quantile { q })
    }

    pub fn validate(&self) -> Result<(), ConfidenceError> {
        match *self {
            ChowVariant::Quantile { q } if !(0.0..=1.0).contains(&q) => {
                Err(ConfidenceError::InvalidQuantile(q))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ChowVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChowVariant::Sum => f.write_str("sum"),
            ChowVariant::Avg => f.write_str("avg"),
            ChowVariant::Quantile { q } => write!(f, "quantile@{q}"),
        }
    }
}

/// Linear-interpolation quantile of an ascending-sorted, non-empty slice.
///
/// `q = 0` yields the minimum and `q = 1` the maximum. The result is kept
/// inside the bracketing order statistics, so it is monotone in `q`.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if hi == lo || frac == 0.0 {
        return sorted[lo];
    }
    let v = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    v.clamp(sorted[lo], sorted[hi])
}

/// Confidence of one generated sequence under a Chow variant.
pub fn chow_score(lp: &LogProbSeq, variant: ChowVariant) -> Result<f64, ConfidenceError> {
    chow_score_raw(lp.as_slice(), variant)
}

/// As [`chow_score`], on an unchecked slice.
pub fn chow_score_raw(values: &[f64], variant: ChowVariant) -> Result<f64, ConfidenceError> {
    if values.is_empty() {
        return Err(ConfidenceError::EmptySequence);
    }
    match variant {
        ChowVariant::Sum => Ok(values.iter().sum()),
        ChowVariant::Avg => Ok(values.iter().sum::<f64>() / values.len() as f64),
        ChowVariant::Quantile { q } => {
            variant.validate()?;
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            Ok(sorted_quantile(&sorted, q))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Per-model mean and population standard deviation of one Chow variant.
///
/// Immutable once fitted; share freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    variant: ChowVariant,
    models: BTreeMap<String, ModelStats>,
}

impl CalibrationStats {
    pub fn variant(&self) -> ChowVariant {
        self.variant
    }

    pub fn get(&self, model: &str) -> Option<&ModelStats> {
        self.models.get(model)
    }

    pub fn models(&self) -> impl Iterator<Item = (&str, &ModelStats)> {
        self.models.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Parses and validates the persisted JSON form
    /// `{"variant": {...}, "models": {"<id>": {"mean", "std", "n"}}}`.
    pub fn from_json(text: &str) -> Result<Self, ConfidenceError> {
        let stats: CalibrationStats = serde_json::from_str(text)
            .map_err(|e| ConfidenceError::InvalidDocument(e.to_string()))?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration stats are always serializable")
    }

    fn validate(&self) -> Result<(), ConfidenceError> {
        self.variant
            .validate()
            .map_err(|e| ConfidenceError::InvalidDocument(e.to_string()))?;
        for (id, s) in &self.models {
            if !s.mean.is_finite() || !s.std.is_finite() || s.std < 0.0 {
                return Err(ConfidenceError::InvalidDocument(format!(
                    "model {id:?}: mean and std must be finite with std >= 0"
                )));
            }
            if s.n < 2 {
                return Err(ConfidenceError::InvalidDocument(format!(
                    "model {id:?}: sample count {} < 2",
                    s.n
                )));
            }
        }
        Ok(())
    }
}

/// Fits mean and population (divide-by-N) standard deviation per model.
///
/// Single pass (Welford) so large calibration sets need no second scan.
pub fn fit_calibration<K, V>(
    samples: &BTreeMap<K, V>,
    variant: ChowVariant,
) -> Result<CalibrationStats, ConfidenceError>
where
    K: AsRef<str>,
    V: AsRef<[f64]>,
{
    variant.validate()?;
    let mut models = BTreeMap::new();
    for (id, values) in samples {
        let id = id.as_ref();
        let values = values.as_ref();
        if values.len() < 2 {
            return Err(ConfidenceError::InsufficientSamples {
                model: id.to_string(),
                count: values.len(),
            });
        }
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (k, &x) in values.iter().enumerate() {
            if !x.is_finite() {
                return Err(ConfidenceError::NonFiniteSample(id.to_string()));
            }
            let delta = x - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (x - mean);
        }
        let std = (m2 / values.len() as f64).max(0.0).sqrt();
        models.insert(
            id.to_string(),
            ModelStats {
                mean,
                std,
                n: values.len(),
            },
        );
    }
    Ok(CalibrationStats { variant, models })
}

/// `(raw - mean) / std` using the model's fitted statistics.
pub fn z_normalize(raw: f64, model: &str, stats: &CalibrationStats) -> Result<f64, ConfidenceError> {
    let s = stats
        .get(model)
        .ok_or_else(|| ConfidenceError::UnknownModel(model.to_string()))?;
    if s.std < SIGMA_FLOOR {
        return Err(ConfidenceError::DegenerateCalibration {
            model: model.to_string(),
            std: s.std,
        });
    }
    Ok((raw - s.mean) / s.std)
}
