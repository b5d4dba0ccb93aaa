//! Request bodies shared by the HTTP API and the command line.

use cfbd::dose_model::{DoseGrid1, DoseGrid2, Grid};
use cfbd::simulator::{builtin_scenario, Rates};
use cfbd::{DesignConfig, Scenario};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ApiError;

/// Parses a JSON body, mapping failures to 400s that name the offending
/// field when serde reports one.
pub fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| body_error(&e))
}

fn body_error(e: &serde_json::Error) -> ApiError {
    let msg = e.to_string();
    let err = ApiError::bad_request(msg.clone());
    match field_in_message(&msg) {
        Some(f) => err.with_field(f),
        None => err,
    }
}

fn field_in_message(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Lays a partial config object over `base`.
pub fn overlay_config(base: DesignConfig, partial: Option<&Value>) -> Result<DesignConfig, ApiError> {
    let Some(partial) = partial else {
        return Ok(base);
    };
    let Value::Object(fields) = partial else {
        return Err(ApiError::bad_request("config must be a JSON object").with_field("config"));
    };
    let mut merged = serde_json::to_value(base).map_err(|e| ApiError::internal(e.to_string()))?;
    if let Value::Object(m) = &mut merged {
        for (k, v) in fields {
            m.insert(k.clone(), v.clone());
        }
    }
    let cfg: DesignConfig = serde_json::from_value(merged).map_err(|e| body_error(&e))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `POST /trials` body. Everything is optional; the default is a
/// six-level one-agent trial.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewTrial {
    pub agents: Option<u8>,
    /// One-agent dose levels when no grid is given.
    pub levels: Option<usize>,
    /// Two-agent shape when no grid is given.
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub config: Option<Value>,
    pub grid: Option<Grid>,
}

impl NewTrial {
    pub fn resolve(&self) -> Result<(DesignConfig, Grid), ApiError> {
        let from_grid = self.grid.as_ref().map(|g| match g {
            Grid::One(_) => 1,
            Grid::Two(_) => 2,
        });
        let agents = match (self.agents, from_grid) {
            (Some(a), Some(g)) if a != g => {
                return Err(ApiError::bad_request(format!("agents = {a} but the grid is for {g}")).with_field("agents"))
            }
            (a, g) => a.or(g).unwrap_or(1),
        };
        let base = match agents {
            1 => DesignConfig::one_agent(),
            2 => DesignConfig::two_agent(),
            _ => return Err(ApiError::bad_request("agents must be 1 or 2").with_field("agents")),
        };
        let cfg = overlay_config(base, self.config.as_ref())?;
        let grid = match (&self.grid, agents) {
            (Some(g), _) => g.clone(),
            (None, 1) => Grid::One(
                DoseGrid1::default_prior(self.levels.unwrap_or(6), cfg.theta0, cfg.delta0)
                    .map_err(|e| ApiError::from(e).with_field("levels"))?,
            ),
            (None, _) => Grid::Two(
                DoseGrid2::default_prior(self.rows.unwrap_or(4), self.cols.unwrap_or(4), cfg.theta0)
                    .map_err(|e| ApiError::from(e).with_field("rows"))?,
            ),
        };
        Ok((cfg, grid))
    }
}

/// Simulation request, as posted to `/simulations` or read from a
/// scenario file. Either `scenario` names a built-in scenario or `rates`
/// describes a custom one.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRequest {
    pub scenario: Option<String>,
    pub name: Option<String>,
    pub agents: Option<u8>,
    pub rates: Option<Rates>,
    pub theta0: Option<f64>,
    pub delta0: Option<f64>,
    /// Partial design config laid over the scenario's defaults.
    pub design: Option<Value>,
    pub grid: Option<Grid>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
}

pub const DEFAULT_REPS: u64 = 1000;
pub const DEFAULT_SEED: u64 = 1;

/// A fully specified simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSimulation {
    pub scenario: Scenario,
    pub config: DesignConfig,
    pub grid: Grid,
    pub reps: u64,
    pub seed: u64,
}

impl SimulationRequest {
    pub fn resolve(&self) -> Result<ResolvedSimulation, ApiError> {
        let scenario = self.scenario()?;
        if let Some(a) = self.agents {
            if a != scenario.rates.agents() {
                return Err(ApiError::bad_request(format!(
                    "agents = {a} but the rates are for {}",
                    scenario.rates.agents()
                ))
                .with_field("agents"));
            }
        }
        if let Some(Value::Object(d)) = &self.design {
            for key in ["theta0", "delta0"] {
                if d.contains_key(key) {
                    return Err(ApiError::bad_request(format!("set {key} on the scenario, not the design"))
                        .with_field(format!("design.{key}")));
                }
            }
        }
        let config = overlay_config(scenario.default_config(), self.design.as_ref())?;
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => scenario.default_grid(&config)?,
        };
        let reps = self.reps.unwrap_or(DEFAULT_REPS);
        if reps == 0 {
            return Err(ApiError::bad_request("reps must be at least 1").with_field("reps"));
        }
        Ok(ResolvedSimulation {
            scenario,
            config,
            grid,
            reps,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    fn scenario(&self) -> Result<Scenario, ApiError> {
        match (&self.scenario, &self.rates) {
            (Some(_), Some(_)) => Err(ApiError::bad_request("give either a scenario name or rates, not both").with_field("rates")),
            (Some(name), None) => {
                if self.theta0.is_some() || self.delta0.is_some() {
                    return Err(ApiError::bad_request("built-in scenarios fix theta0 and delta0").with_field("theta0"));
                }
                builtin_scenario(name)
                    .ok_or_else(|| ApiError::bad_request(format!("unknown scenario `{name}`")).with_field("scenario"))
            }
            (None, Some(rates)) => {
                let default_theta = if rates.agents() == 1 { 0.30 } else { 0.20 };
                let s = Scenario {
                    name: self.name.clone().unwrap_or_else(|| "custom".into()),
                    rates: rates.clone(),
                    theta0: self.theta0.unwrap_or(default_theta),
                    delta0: self.delta0.unwrap_or(0.05),
                };
                s.validate()?;
                Ok(s)
            }
            (None, None) => Err(ApiError::bad_request("a scenario name or rates are required").with_field("scenario")),
        }
    }
}
