//! Monte Carlo operating characteristics.
//!
//! Replicate `k` draws every DLT from `RngStream::new(seed, k)`, and each
//! replicate reduces to integer tallies. Tallies merge by addition, so the
//! aggregate is identical for any worker count or scheduling order.

use serde::{Deserialize, Serialize};

use crate::decision::DesignConfig;
use crate::dose_model::{CohortOutcome, Dose, DoseGrid1, DoseGrid2, Grid};
use crate::engine::TrialState;
use crate::error::{Error, Result};
use crate::stats::{bernoulli, RngStream};

/// True DLT probabilities, per dose level or per combination (row-major
/// by agent-1 level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rates {
    One(Vec<f64>),
    Two(Vec<Vec<f64>>),
}

impl Rates {
    pub fn agents(&self) -> u8 {
        match self {
            Rates::One(_) => 1,
            Rates::Two(_) => 2,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Rates::One(r) => (1, r.len()),
            Rates::Two(r) => (r.len(), r.first().map_or(0, Vec::len)),
        }
    }

    /// Row-major rates.
    pub fn flat(&self) -> Vec<f64> {
        match self {
            Rates::One(r) => r.clone(),
            Rates::Two(r) => r.iter().flatten().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub rates: Rates,
    pub theta0: f64,
    pub delta0: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.rates.shape();
        if let Rates::Two(r) = &self.rates {
            if rows < 2 || r.iter().any(|row| row.len() != cols) {
                return Err(Error::config("rates", "two-agent rates must form a rectangular grid with at least 2 rows"));
            }
        }
        if cols < 2 {
            return Err(Error::config("rates", "need at least 2 dose levels"));
        }
        if let Some(p) = self.rates.flat().into_iter().find(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("rates", format!("rate {p} outside [0, 1]")));
        }
        Ok(())
    }

    /// Default design for this scenario: the matching agent-count setting
    /// with the scenario's target and margin.
    pub fn default_config(&self) -> DesignConfig {
        let base = match self.rates {
            Rates::One(_) => DesignConfig::one_agent(),
            Rates::Two(_) => DesignConfig::two_agent(),
        };
        DesignConfig {
            theta0: self.theta0,
            delta0: self.delta0,
            ..base
        }
    }

    /// Weak default prior sized to the scenario.
    pub fn default_grid(&self, cfg: &DesignConfig) -> Result<Grid> {
        Ok(match self.rates.shape() {
            (_, cols) if self.rates.agents() == 1 => {
                Grid::One(DoseGrid1::default_prior(cols, cfg.theta0, cfg.delta0)?)
            }
            (rows, cols) => Grid::Two(DoseGrid2::default_prior(rows, cols, cfg.theta0)?),
        })
    }
}

fn one(name: &str, theta0: f64, rates: [f64; 6]) -> Scenario {
    Scenario {
        name: name.into(),
        rates: Rates::One(rates.to_vec()),
        theta0,
        delta0: 0.05,
    }
}

fn two(name: &str, rates: [[f64; 4]; 4]) -> Scenario {
    Scenario {
        name: name.into(),
        rates: Rates::Two(rates.iter().map(|r| r.to_vec()).collect()),
        theta0: 0.20,
        delta0: 0.05,
    }
}

/// The six single-agent and seven two-agent benchmark scenarios.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        one("one-agent-1", 0.30, [0.02, 0.03, 0.06, 0.10, 0.18, 0.30]),
        one("one-agent-2", 0.30, [0.05, 0.10, 0.20, 0.30, 0.50, 0.50]),
        one("one-agent-3", 0.30, [0.30, 0.53, 0.77, 0.87, 0.95, 0.98]),
        one("one-agent-4", 0.20, [0.00, 0.00, 0.00, 0.01, 0.07, 0.20]),
        one("one-agent-5", 0.20, [0.01, 0.02, 0.09, 0.20, 0.50, 0.68]),
        one("one-agent-6", 0.20, [0.15, 0.20, 0.38, 0.52, 0.70, 0.80]),
        two(
            "two-agent-A",
            [
                [0.04, 0.10, 0.16, 0.22],
                [0.08, 0.14, 0.20, 0.26],
                [0.12, 0.18, 0.24, 0.30],
                [0.16, 0.22, 0.28, 0.34],
            ],
        ),
        two(
            "two-agent-B",
            [
                [0.02, 0.05, 0.08, 0.11],
                [0.04, 0.07, 0.10, 0.13],
                [0.06, 0.09, 0.12, 0.15],
                [0.08, 0.11, 0.14, 0.17],
            ],
        ),
        two(
            "two-agent-C",
            [
                [0.10, 0.25, 0.40, 0.55],
                [0.20, 0.35, 0.50, 0.65],
                [0.30, 0.45, 0.60, 0.75],
                [0.40, 0.55, 0.70, 0.85],
            ],
        ),
        two(
            "two-agent-D",
            [
                [0.44, 0.50, 0.56, 0.62],
                [0.48, 0.54, 0.60, 0.66],
                [0.52, 0.58, 0.64, 0.70],
                [0.56, 0.62, 0.68, 0.74],
            ],
        ),
        two(
            "two-agent-E",
            [
                [0.08, 0.09, 0.10, 0.11],
                [0.18, 0.19, 0.20, 0.21],
                [0.28, 0.29, 0.30, 0.31],
                [0.29, 0.30, 0.31, 0.41],
            ],
        ),
        two(
            "two-agent-F",
            [
                [0.12, 0.16, 0.44, 0.50],
                [0.13, 0.18, 0.45, 0.52],
                [0.14, 0.20, 0.46, 0.54],
                [0.15, 0.22, 0.47, 0.55],
            ],
        ),
        two(
            "two-agent-G",
            [
                [0.01, 0.04, 0.06, 0.10],
                [0.02, 0.10, 0.15, 0.30],
                [0.03, 0.15, 0.30, 0.50],
                [0.04, 0.20, 0.45, 0.80],
            ],
        ),
    ]
}

/// Looks up a built-in scenario by name. Short forms `1`..`6` and `A`..`G`
/// are accepted too.
pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    let full = match name {
        "1" | "2" | "3" | "4" | "5" | "6" => format!("one-agent-{name}"),
        "A" | "B" | "C" | "D" | "E" | "F" | "G" => format!("two-agent-{name}"),
        other => other.to_string(),
    };
    builtin_scenarios().into_iter().find(|s| s.name == full)
}

/// Exact integer totals over a set of replicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    /// Patients treated per dose, row-major.
    pub patients: Vec<u64>,
    pub dlts: Vec<u64>,
    /// Replicates recommending each dose.
    pub recommended: Vec<u64>,
    pub none_recommended: u64,
    pub replicates: u64,
}

impl Tally {
    fn zeros(doses: usize) -> Self {
        Self {
            patients: vec![0; doses],
            dlts: vec![0; doses],
            recommended: vec![0; doses],
            none_recommended: 0,
            replicates: 0,
        }
    }

    /// Sums two tallies; associative and commutative.
    pub fn merge(mut self, other: &Tally) -> Self {
        for (a, b) in self.patients.iter_mut().zip(&other.patients) {
            *a += b;
        }
        for (a, b) in self.dlts.iter_mut().zip(&other.dlts) {
            *a += b;
        }
        for (a, b) in self.recommended.iter_mut().zip(&other.recommended) {
            *a += b;
        }
        self.none_recommended += other.none_recommended;
        self.replicates += other.replicates;
        self
    }

    pub fn total_patients(&self) -> u64 {
        self.patients.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub design: String,
    pub scenario: String,
    pub agents: u8,
    /// `(rows, cols)`; one-agent results are a single row.
    pub shape: (usize, usize),
    /// True DLT rates the replicates were drawn from, row-major.
    pub true_rates: Vec<f64>,
    pub theta0: f64,
    /// Percent of all treated patients at each dose, row-major.
    pub allocation_pct: Vec<f64>,
    /// Percent of replicates recommending each dose, row-major.
    pub recommendation_pct: Vec<f64>,
    pub none_pct: f64,
    /// Mean number of patients per trial.
    pub expected_n: f64,
    pub reps: u64,
    pub seed: u64,
    pub tally: Tally,
}

impl OperatingCharacteristics {
    fn from_tally(tally: Tally, scenario: &Scenario, cfg: &DesignConfig, seed: u64) -> Self {
        let reps = tally.replicates;
        let total = tally.total_patients();
        let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        Self {
            design: cfg.design_name().into(),
            scenario: scenario.name.clone(),
            agents: scenario.rates.agents(),
            shape: scenario.rates.shape(),
            true_rates: scenario.rates.flat(),
            theta0: scenario.theta0,
            allocation_pct: tally.patients.iter().map(|&n| pct(n, total)).collect(),
            recommendation_pct: tally.recommended.iter().map(|&n| pct(n, reps)).collect(),
            none_pct: pct(tally.none_recommended, reps),
            expected_n: if reps == 0 { 0.0 } else { total as f64 / reps as f64 },
            reps,
            seed,
            tally,
        }
    }

    /// Percent recommending the dose at row-major position `k`.
    pub fn recommendation_at(&self, dose: Dose) -> f64 {
        let (_, cols) = self.shape;
        let k = match dose {
            Dose::Single(j) => j,
            Dose::Combo(i, j) => i * cols + j,
        };
        self.recommendation_pct[k]
    }
}

/// Runs one simulated trial from `rng` and returns its tally.
pub fn simulate_trial(
    scenario: &Scenario,
    cfg: &DesignConfig,
    grid: &Grid,
    rng: &mut RngStream,
) -> Result<Tally> {
    let rates = scenario.rates.flat();
    let mut state = TrialState::start(cfg.clone(), grid.clone())?.without_events();
    while !state.is_stopped() {
        let dose = state.current;
        let k = grid.flat_index(dose).expect("engine assigns doses inside the grid");
        let n = state.next_cohort_size();
        let mut t = 0;
        for _ in 0..n {
            t += u32::from(bernoulli(rates[k], rng)?);
        }
        state.report_cohort(CohortOutcome::new(dose, n, t)?)?;
    }
    let mut tally = Tally::zeros(rates.len());
    for (k, d) in state.tallies.iter().enumerate() {
        tally.patients[k] = u64::from(d.n);
        tally.dlts[k] = u64::from(d.t);
    }
    match state.recommendation {
        Some(dose) => tally.recommended[grid.flat_index(dose).expect("dose inside grid")] += 1,
        None => tally.none_recommended += 1,
    }
    tally.replicates = 1;
    Ok(tally)
}

/// How replicates are spread over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Rayon's global pool.
    Parallel,
    /// A dedicated pool with this many workers.
    Workers(usize),
}

fn check_inputs(scenario: &Scenario, cfg: &DesignConfig, grid: &Grid, reps: u64) -> Result<()> {
    if reps == 0 {
        return Err(Error::config("reps", "must be at least 1"));
    }
    scenario.validate()?;
    cfg.validate()?;
    let grid_shape = grid.shape();
    let agents_match = matches!(
        (&scenario.rates, grid),
        (Rates::One(_), Grid::One(_)) | (Rates::Two(_), Grid::Two(_))
    );
    if !agents_match || grid_shape != scenario.rates.shape() {
        return Err(Error::config(
            "grid",
            format!(
                "prior grid {:?} does not match scenario rates {:?}",
                grid_shape,
                scenario.rates.shape()
            ),
        ));
    }
    Ok(())
}

/// Simulates `reps` trials with the scenario's default prior.
pub fn run_replicates(
    scenario: &Scenario,
    cfg: &DesignConfig,
    reps: u64,
    seed: u64,
) -> Result<OperatingCharacteristics> {
    let grid = scenario.default_grid(cfg)?;
    run_replicates_with(scenario, cfg, &grid, reps, seed, Execution::Parallel)
}

pub fn run_replicates_with(
    scenario: &Scenario,
    cfg: &DesignConfig,
    grid: &Grid,
    reps: u64,
    seed: u64,
    execution: Execution,
) -> Result<OperatingCharacteristics> {
    use rayon::prelude::*;

    check_inputs(scenario, cfg, grid, reps)?;
    let doses = grid.dose_count();
    let one_rep = |k: u64| simulate_trial(scenario, cfg, grid, &mut RngStream::new(seed, k));
    let reduce = || {
        (0..reps)
            .into_par_iter()
            .map(one_rep)
            .try_reduce(|| Tally::zeros(doses), |a, b| Ok(a.merge(&b)))
    };
    let tally = match execution {
        Execution::Serial => (0..reps).try_fold(Tally::zeros(doses), |acc, k| {
            one_rep(k).map(|t| acc.merge(&t))
        })?,
        Execution::Parallel => reduce()?,
        Execution::Workers(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(reduce)?,
    };
    Ok(OperatingCharacteristics::from_tally(tally, scenario, cfg, seed))
}

/// Distance bands around the target, in percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    /// 0 to 2 points, including doses exactly at target.
    Within2,
    /// More than 2, at most 5.
    Within5,
    /// More than 5, at most 10.
    Within10,
    Beyond10,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Within2, Band::Within5, Band::Within10, Band::Beyond10];

    pub fn of(rate: f64, theta0: f64) -> Band {
        // rounded to absorb binary noise in e.g. |0.22 - 0.20| * 100
        let pts = ((rate - theta0).abs() * 100.0 * 1e6).round() / 1e6;
        if pts <= 2.0 {
            Band::Within2
        } else if pts <= 5.0 {
            Band::Within5
        } else if pts <= 10.0 {
            Band::Within10
        } else {
            Band::Beyond10
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Band::Within2 => "1-2 pts",
            Band::Within5 => "3-5 pts",
            Band::Within10 => "6-10 pts",
            Band::Beyond10 => ">10 pts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub band: Band,
    pub allocation_pct: f64,
    pub recommendation_pct: f64,
    /// Running totals from the nearest band outward.
    pub cumulative_allocation_pct: f64,
    pub cumulative_recommendation_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub design: String,
    pub scenario: String,
    pub rows: Vec<BandRow>,
    pub none_pct: f64,
    pub expected_n: f64,
    pub reps: u64,
    pub seed: u64,
}

/// Groups a two-agent result by distance of each cell's true rate from
/// the target.
pub fn band_group(oc: &OperatingCharacteristics, scenario: &Scenario) -> Result<BandTable> {
    let Rates::Two(_) = scenario.rates else {
        return Err(Error::Report("band grouping needs a two-agent scenario".into()));
    };
    if oc.agents != 2 || oc.shape != scenario.rates.shape() {
        return Err(Error::Report("band grouping needs a matching two-agent result".into()));
    }
    Ok(band_rows(oc, &scenario.rates.flat(), scenario.theta0))
}

pub(crate) fn band_rows(oc: &OperatingCharacteristics, rates: &[f64], theta0: f64) -> BandTable {
    let bands: Vec<Band> = rates.iter().map(|&r| Band::of(r, theta0)).collect();
    let reps = oc.tally.replicates;
    let total = oc.tally.total_patients();
    let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let mut cum_alloc = 0u64;
    let mut cum_rec = 0u64;
    let rows = Band::ALL
        .iter()
        .map(|&band| {
            let in_band = |v: &[u64]| -> u64 {
                v.iter().zip(&bands).filter(|(_, b)| **b == band).map(|(n, _)| n).sum()
            };
            let alloc = in_band(&oc.tally.patients);
            let rec = in_band(&oc.tally.recommended);
            cum_alloc += alloc;
            cum_rec += rec;
            BandRow {
                band,
                allocation_pct: pct(alloc, total),
                recommendation_pct: pct(rec, reps),
                cumulative_allocation_pct: pct(cum_alloc, total),
                cumulative_recommendation_pct: pct(cum_rec, reps),
            }
        })
        .collect();
    BandTable {
        design: oc.design.clone(),
        scenario: oc.scenario.clone(),
        rows,
        none_pct: oc.none_pct,
        expected_n: oc.expected_n,
        reps,
        seed: oc.seed,
    }
}
