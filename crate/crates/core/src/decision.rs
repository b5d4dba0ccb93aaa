//! Expected-utility dose assignment, stopping rules and MTD estimation.
//!
//! The gain for treating at a dose with DLT rate `p` is piecewise linear,
//! `-alpha0 * (theta0 - p)` below target and `-eta0 * (p - theta0)` above.
//! Its expectation under a Beta posterior has a closed form in two Beta
//! CDFs, so no sampling or quadrature is needed anywhere in the design.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dose_model::{Cell, DoseGrid1, DoseGrid2};
use crate::error::{Error, Result};
use crate::stats::{beta_cdf, beta_tail, BetaParams};

/// Whether the next dose may skip untried levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Escalation {
    /// Any dose may be assigned.
    None,
    /// An untried dose is admissible only once its immediate lower
    /// neighbours have been tried.
    #[default]
    NoSkip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Target DLT probability.
    pub theta0: f64,
    /// `theta0 + delta0` is the highest acceptable DLT probability.
    pub delta0: f64,
    /// Posterior probability threshold for the all-doses-toxic rule.
    pub r1: f64,
    /// Posterior probability threshold for the MTD⁺-toxic rule.
    pub r2: f64,
    /// Underdosing weight.
    pub alpha0: f64,
    /// Overdosing weight.
    pub eta0: f64,
    pub n_min: u32,
    pub n_max: u32,
    pub cohort_size: u32,
    /// Equalize effective sample sizes after every update (c-CFBD).
    pub calibrate: bool,
    pub escalation: Escalation,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self::one_agent()
    }
}

impl DesignConfig {
    /// Single-agent setting: 30% target, 35% ceiling, 10 to 24 patients.
    pub fn one_agent() -> Self {
        Self {
            theta0: 0.30,
            delta0: 0.05,
            r1: 0.5,
            r2: 0.95,
            alpha0: 1.0,
            eta0: 1.0,
            n_min: 10,
            n_max: 24,
            cohort_size: 1,
            calibrate: false,
            escalation: Escalation::NoSkip,
        }
    }

    /// Drug-combination setting: 20% target, 25% ceiling, 10 to 50 patients.
    pub fn two_agent() -> Self {
        Self {
            theta0: 0.20,
            n_max: 50,
            ..Self::one_agent()
        }
    }

    pub fn with_calibration(mut self, on: bool) -> Self {
        self.calibrate = on;
        self
    }

    /// Highest acceptable DLT rate.
    pub fn ceiling(&self) -> f64 {
        self.theta0 + self.delta0
    }

    /// Short design label used in reports.
    pub fn design_name(&self) -> &'static str {
        if self.calibrate {
            "c-CFBD"
        } else {
            "CFBD"
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |field: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must lie in (0, 1), got {v}")))
            }
        };
        unit("theta0", self.theta0)?;
        if !(self.delta0 > 0.0 && self.ceiling() < 1.0) {
            return Err(Error::config(
                "delta0",
                format!("theta0 + delta0 must lie in (theta0, 1), got {}", self.ceiling()),
            ));
        }
        unit("r1", self.r1)?;
        unit("r2", self.r2)?;
        for (field, v) in [("alpha0", self.alpha0), ("eta0", self.eta0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if self.n_max == 0 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        if self.n_min > self.n_max {
            return Err(Error::config(
                "n_min",
                format!("n_min ({}) exceeds n_max ({})", self.n_min, self.n_max),
            ));
        }
        if self.cohort_size == 0 {
            return Err(Error::config("cohort_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    None,
    /// Maximum sample size reached.
    MaxN,
    /// Even the lowest dose is likely too toxic.
    AllToxic,
    /// The dose above the current MTD estimate is likely too toxic.
    MtdPlusToxic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStop")]
pub struct StopStatus {
    stopped: bool,
    reason: StopReason,
}

#[derive(Deserialize)]
struct RawStop {
    stopped: bool,
    reason: StopReason,
}

impl TryFrom<RawStop> for StopStatus {
    type Error = Error;

    fn try_from(raw: RawStop) -> Result<Self> {
        if raw.stopped == (raw.reason == StopReason::None) {
            return Err(Error::Domain("stop flag and reason disagree".into()));
        }
        Ok(Self {
            stopped: raw.stopped,
            reason: raw.reason,
        })
    }
}

impl StopStatus {
    pub const RUNNING: StopStatus = StopStatus {
        stopped: false,
        reason: StopReason::None,
    };

    pub fn stop(reason: StopReason) -> Self {
        Self {
            stopped: reason != StopReason::None,
            reason,
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn reason(&self) -> StopReason {
        self.reason
    }
}

/// Posterior expected gain of treating at a dose with prior `p`.
pub fn expected_utility(p: BetaParams, cfg: &DesignConfig) -> f64 {
    let theta = cfg.theta0;
    let mean = p.mean();
    // F(theta; a+1, b) is the CDF of the size-biased law p * f(p) / mean.
    let shifted = BetaParams::new(p.a() + 1.0, p.b()).expect("a + 1 stays positive");
    let below = theta * cdf(theta, p) - mean * cdf(theta, shifted);
    -(cfg.alpha0 + cfg.eta0) * below - cfg.eta0 * (mean - theta)
}

fn cdf(x: f64, p: BetaParams) -> f64 {
    beta_cdf(x, p).expect("theta0 validated to lie in (0, 1)")
}

fn tail(x: f64, p: BetaParams) -> f64 {
    beta_tail(x, p).expect("ceiling validated to lie in (0, 1)")
}

/// First index of the maximum; later entries must be strictly larger to win.
fn argmax_first(candidates: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, u) in candidates {
        if best.is_none_or(|(_, b)| u > b) {
            best = Some((idx, u));
        }
    }
    best.map(|(idx, _)| idx)
}

pub fn utilities1(grid: &DoseGrid1, cfg: &DesignConfig) -> Vec<f64> {
    grid.params().iter().map(|p| expected_utility(*p, cfg)).collect()
}

pub fn utilities2(grid: &DoseGrid2, cfg: &DesignConfig) -> Vec<f64> {
    grid.params().iter().map(|p| expected_utility(*p, cfg)).collect()
}

/// Doses the next cohort may receive, given the highest level tried so far.
pub fn admissible1(levels: usize, highest_tried: Option<usize>, rule: Escalation) -> std::ops::Range<usize> {
    match rule {
        Escalation::None => 0..levels,
        Escalation::NoSkip => 0..highest_tried.map_or(1, |h| (h + 2).min(levels)),
    }
}

/// Cells the next cohort may receive. Under no-skip an untried cell needs
/// each in-grid neighbour one level lower on either agent to be tried.
pub fn admissible2(rows: usize, cols: usize, tried: &BTreeSet<Cell>, rule: Escalation) -> Vec<Cell> {
    let all = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j)));
    match rule {
        Escalation::None => all.collect(),
        Escalation::NoSkip => all
            .filter(|&(i, j)| {
                tried.contains(&(i, j))
                    || ((i == 0 || tried.contains(&(i - 1, j)))
                        && (j == 0 || tried.contains(&(i, j - 1))))
            })
            .collect(),
    }
}

/// Orders cells for tie-breaking: lower total level first, then lower row.
pub fn tie_break_order(cells: &mut [Cell]) {
    cells.sort_by_key(|&(i, j)| (i + j, i));
}

pub(crate) fn pick1(utilities: &[f64], admissible: std::ops::Range<usize>) -> usize {
    argmax_first(admissible.map(|j| (j, utilities[j]))).expect("admissible set is never empty")
}

pub(crate) fn pick2(utilities: &[f64], cols: usize, mut admissible: Vec<Cell>) -> Cell {
    tie_break_order(&mut admissible);
    let k = argmax_first(
        admissible
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| (k, utilities[i * cols + j])),
    )
    .expect("admissible set is never empty");
    admissible[k]
}

/// One-step-look-ahead assignment for a single agent.
pub fn select_dose1(grid: &DoseGrid1, highest_tried: Option<usize>, cfg: &DesignConfig) -> usize {
    let u = utilities1(grid, cfg);
    pick1(&u, admissible1(grid.len(), highest_tried, cfg.escalation))
}

/// One-step-look-ahead assignment for a drug combination.
pub fn select_dose2(grid: &DoseGrid2, tried: &BTreeSet<Cell>, cfg: &DesignConfig) -> Cell {
    let u = utilities2(grid, cfg);
    pick2(
        &u,
        grid.cols(),
        admissible2(grid.rows(), grid.cols(), tried, cfg.escalation),
    )
}

/// MTD estimate: the best expected utility among doses whose posterior
/// mean does not exceed the acceptable ceiling.
pub fn estimate_mtd1(grid: &DoseGrid1, cfg: &DesignConfig) -> Option<usize> {
    mtd1_from(grid, &utilities1(grid, cfg), cfg)
}

pub(crate) fn mtd1_from(grid: &DoseGrid1, utilities: &[f64], cfg: &DesignConfig) -> Option<usize> {
    let ceiling = cfg.ceiling();
    argmax_first(
        grid.params()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.mean() <= ceiling)
            .map(|(j, _)| (j, utilities[j])),
    )
}

pub fn estimate_mtd2(grid: &DoseGrid2, cfg: &DesignConfig) -> Option<Cell> {
    mtd2_from(grid, &utilities2(grid, cfg), cfg)
}

pub(crate) fn mtd2_from(grid: &DoseGrid2, utilities: &[f64], cfg: &DesignConfig) -> Option<Cell> {
    let ceiling = cfg.ceiling();
    let mut safe: Vec<Cell> = grid
        .cells()
        .filter(|&c| grid.get(c).is_some_and(|p| p.mean() <= ceiling))
        .collect();
    if safe.is_empty() {
        return None;
    }
    tie_break_order(&mut safe);
    let cols = grid.cols();
    let k = argmax_first(
        safe.iter()
            .enumerate()
            .map(|(k, &(i, j))| (k, utilities[i * cols + j])),
    )?;
    Some(safe[k])
}

/// Rules 1 and 2 (sample-size bounds), which take precedence over the rest.
fn sample_size_rule(n_total: u32, cfg: &DesignConfig) -> Option<StopStatus> {
    if n_total >= cfg.n_max {
        Some(StopStatus::stop(StopReason::MaxN))
    } else if n_total < cfg.n_min {
        Some(StopStatus::RUNNING)
    } else {
        None
    }
}

/// Stopping rules for a single agent.
///
/// With no MTD estimate (every dose fails the safety screen) the dose above
/// "no dose" is the lowest one, so rule 4 then tests dose 1 against `r2`.
pub fn check_stop1(grid: &DoseGrid1, n_total: u32, mtd: Option<usize>, cfg: &DesignConfig) -> StopStatus {
    if let Some(status) = sample_size_rule(n_total, cfg) {
        return status;
    }
    let ceiling = cfg.ceiling();
    let params = grid.params();
    if tail(ceiling, params[0]) > cfg.r1 {
        return StopStatus::stop(StopReason::AllToxic);
    }
    let next_up = mtd.map_or(Some(0), |m| (m + 1 < params.len()).then_some(m + 1));
    match next_up {
        Some(j) if tail(ceiling, params[j]) > cfg.r2 => StopStatus::stop(StopReason::MtdPlusToxic),
        _ => StopStatus::RUNNING,
    }
}

/// Minimal cells strictly above `mtd` in the partial order. With no
/// estimate this is the lowest cell.
pub fn cells_above(rows: usize, cols: usize, mtd: Option<Cell>) -> Vec<Cell> {
    match mtd {
        None => vec![(0, 0)],
        Some((i, j)) => [(i + 1, j), (i, j + 1)]
            .into_iter()
            .filter(|&(r, c)| r < rows && c < cols)
            .collect(),
    }
}

/// Stopping rules for a drug combination. Rule 4 fires when every minimal
/// cell above the MTD estimate is likely too toxic.
pub fn check_stop2(grid: &DoseGrid2, n_total: u32, mtd: Option<Cell>, cfg: &DesignConfig) -> StopStatus {
    if let Some(status) = sample_size_rule(n_total, cfg) {
        return status;
    }
    let ceiling = cfg.ceiling();
    let at = |c: Cell| grid.get(c).expect("cell within grid");
    if tail(ceiling, at((0, 0))) > cfg.r1 {
        return StopStatus::stop(StopReason::AllToxic);
    }
    let above = cells_above(grid.rows(), grid.cols(), mtd);
    let min_tail = above
        .iter()
        .map(|&c| tail(ceiling, at(c)))
        .fold(f64::INFINITY, f64::min);
    if !above.is_empty() && min_tail > cfg.r2 {
        StopStatus::stop(StopReason::MtdPlusToxic)
    } else {
        StopStatus::RUNNING
    }
}
