use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::clients::Generation;

/// Per-model cost of one token, either given directly or as 2 x parameters
/// (forward-pass FLOPs per token).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelCost {
    UnitCost { unit_cost_per_token: f64 },
    Parameters { parameters: f64 },
}

impl ModelCost {
    pub fn unit_cost(self) -> f64 {
        match self {
            ModelCost::UnitCost { unit_cost_per_token } => unit_cost_per_token,
            ModelCost::Parameters { parameters } => 2.0 * parameters,
        }
    }
}

/// Query cost = unit cost x (prompt + completion tokens).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostModel {
    models: BTreeMap<String, ModelCost>,
}

impl CostModel {
    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn new(models: BTreeMap<String, ModelCost>) -> Result<Self, EvalError> {
        let m = CostModel { models };
        m.validate()?;
        Ok(m)
    }

    pub fn from_unit_costs<I, S>(costs: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self::new(
            costs
                .into_iter()
                .map(|(k, v)| (k.into(), ModelCost::UnitCost { unit_cost_per_token: v }))
                .collect(),
        )
    }

    pub fn from_parameter_counts<I, S>(params: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self::new(
            params
                .into_iter()
                .map(|(k, v)| (k.into(), ModelCost::Parameters { parameters: v }))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (id, c) in &self.models {
            let u = c.unit_cost();
            if !u.is_finite() || u <= 0.0 {
                return Err(EvalError::InvalidArgument(format!(
                    "unit cost for {id:?} must be positive, got {u}"
                )));
            }
        }
        Ok(())
    }

    pub fn unit_cost(&self, model_id: &str) -> Result<f64, EvalError> {
        self.models
            .get(model_id)
            .map(|c| c.unit_cost())
            .ok_or_else(|| EvalError::UnknownModelCost(model_id.to_string()))
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.models.contains_key(model_id)
    }

    pub fn generation_cost(&self, g: &Generation) -> Result<f64, EvalError> {
        Ok(self.unit_cost(&g.model_id)? * (g.prompt_tokens + g.completion_tokens) as f64)
    }
}
