//! Beta hyperparameter grids for one- and two-agent trials.
//!
//! A cohort outcome at one dose is extrapolated to every comparable dose:
//! non-DLTs count as non-DLTs at all lower doses and DLTs count as DLTs at
//! all higher doses. This keeps the posterior means monotone (one agent) or
//! consistent with the partial order on combinations (two agents), but it
//! grows the effective sample size unevenly. [`DoseGrid1::calibrate`] and
//! [`DoseGrid2::calibrate`] rescale each dose to the grid-average ESS while
//! leaving every mean untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::BetaParams;

/// Slack allowed when checking monotone means, absorbing rounding in ties.
pub const MONOTONE_TOL: f64 = 1e-12;

/// A dose combination `(agent-1 level, agent-2 level)`, zero-based.
pub type Cell = (usize, usize);

/// A dose in either design: a level index or a combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dose {
    Single(usize),
    Combo(usize, usize),
}

impl Dose {
    /// One-based label as printed in trial tables: `3` or `2,4`.
    pub fn label(&self) -> String {
        match *self {
            Dose::Single(j) => format!("{}", j + 1),
            Dose::Combo(i, j) => format!("{},{}", i + 1, j + 1),
        }
    }
}

impl From<usize> for Dose {
    fn from(j: usize) -> Self {
        Dose::Single(j)
    }
}

impl From<Cell> for Dose {
    fn from((i, j): Cell) -> Self {
        Dose::Combo(i, j)
    }
}

/// Patients treated and DLTs seen in one cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawOutcome")]
pub struct CohortOutcome {
    pub dose: Dose,
    pub n: u32,
    pub t: u32,
}

#[derive(Deserialize)]
struct RawOutcome {
    dose: Dose,
    n: u32,
    t: u32,
}

impl TryFrom<RawOutcome> for CohortOutcome {
    type Error = Error;

    fn try_from(raw: RawOutcome) -> Result<Self> {
        CohortOutcome::new(raw.dose, raw.n, raw.t)
    }
}

impl CohortOutcome {
    pub fn new(dose: impl Into<Dose>, n: u32, t: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("cohort must treat at least one patient".into()));
        }
        if t > n {
            return Err(Error::Domain(format!("{t} DLTs among {n} patients")));
        }
        Ok(Self {
            dose: dose.into(),
            n,
            t,
        })
    }

    fn counts(&self) -> (f64, f64) {
        (f64::from(self.t), f64::from(self.n - self.t))
    }
}

/// Relation between two combinations under the partial order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Less,
    Greater,
    Equal,
    Incomparable,
}

/// Compares two combinations: `(i, j) < (i', j')` when `i <= i'`, `j <= j'`
/// and the cells differ.
pub fn compare_cells(lhs: Cell, rhs: Cell) -> Comparison {
    let (i, j) = lhs;
    let (k, l) = rhs;
    if lhs == rhs {
        Comparison::Equal
    } else if i <= k && j <= l {
        Comparison::Less
    } else if i >= k && j >= l {
        Comparison::Greater
    } else {
        Comparison::Incomparable
    }
}

fn evenly_spaced(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |k| lo + step * k as f64)
}

/// Shared calibration: every ESS becomes the grid average, means unchanged.
fn calibrate_params(params: &[BetaParams]) -> (Vec<BetaParams>, f64) {
    let target = params.iter().map(BetaParams::ess).sum::<f64>() / params.len() as f64;
    let out = params
        .iter()
        .map(|p| p.shrink(p.ess() / target))
        .collect();
    (out, target)
}

/// One-agent grid: a Beta prior per dose level, means nondecreasing in dose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Grid1Doc", into = "Grid1Doc")]
pub struct DoseGrid1 {
    params: Vec<BetaParams>,
}

#[derive(Serialize, Deserialize)]
struct Grid1Doc {
    doses: Vec<BetaParams>,
}

impl TryFrom<Grid1Doc> for DoseGrid1 {
    type Error = Error;

    fn try_from(doc: Grid1Doc) -> Result<Self> {
        DoseGrid1::new(doc.doses)
    }
}

impl From<DoseGrid1> for Grid1Doc {
    fn from(g: DoseGrid1) -> Self {
        Grid1Doc { doses: g.params }
    }
}

impl DoseGrid1 {
    pub fn new(params: Vec<BetaParams>) -> Result<Self> {
        if params.len() < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 dose levels, got {}",
                params.len()
            )));
        }
        let grid = Self { params };
        if let Some(j) = grid.first_monotone_violation() {
            return Err(Error::Domain(format!(
                "prior means must be nondecreasing: dose {} mean {} > dose {} mean {}",
                j + 1,
                grid.params[j].mean(),
                j + 2,
                grid.params[j + 1].mean()
            )));
        }
        Ok(grid)
    }

    /// Weak default prior: means evenly spaced from `theta0/2` up to
    /// `theta0 + 2*delta0`, ESS 1 at every dose.
    pub fn default_prior(levels: usize, theta0: f64, delta0: f64) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Domain(format!("need at least 2 dose levels, got {levels}")));
        }
        let hi = (theta0 + 2.0 * delta0).min(0.99);
        let params = evenly_spaced(theta0 / 2.0, hi, levels)
            .map(|m| BetaParams::from_mean_ess(m, 1.0))
            .collect::<Result<_>>()?;
        Self::new(params)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[BetaParams] {
        &self.params
    }

    pub fn get(&self, dose: usize) -> Option<BetaParams> {
        self.params.get(dose).copied()
    }

    pub fn means(&self) -> Vec<f64> {
        self.params.iter().map(BetaParams::mean).collect()
    }

    pub fn ess(&self) -> Vec<f64> {
        self.params.iter().map(BetaParams::ess).collect()
    }

    fn first_monotone_violation(&self) -> Option<usize> {
        self.params
            .windows(2)
            .position(|w| w[0].mean() > w[1].mean() + MONOTONE_TOL)
    }

    pub fn is_monotone(&self) -> bool {
        self.first_monotone_violation().is_none()
    }

    /// True when `a` is nondecreasing and `b` nonincreasing across doses.
    /// Updates and calibration both keep this, and it implies monotone
    /// means. Equal-ESS monotone priors always have it.
    pub fn has_ordered_counts(&self) -> bool {
        self.params
            .windows(2)
            .all(|w| w[0].a() <= w[1].a() + MONOTONE_TOL && w[0].b() + MONOTONE_TOL >= w[1].b())
    }

    /// Extrapolating update after a cohort at one dose level.
    ///
    /// Means stay monotone if [`has_ordered_counts`](Self::has_ordered_counts)
    /// holds beforehand; a grid with monotone means but uneven ESS can lose
    /// monotonicity here.
    pub fn update(&self, outcome: &CohortOutcome) -> Result<Self> {
        let Dose::Single(at) = outcome.dose else {
            return Err(Error::Domain("one-agent grid needs a single dose index".into()));
        };
        if at >= self.len() {
            return Err(Error::Domain(format!(
                "dose index {at} out of range for {} levels",
                self.len()
            )));
        }
        let (toxic, safe) = outcome.counts();
        let params = self
            .params
            .iter()
            .enumerate()
            .map(|(j, p)| match j.cmp(&at) {
                std::cmp::Ordering::Less => p.observe(0.0, safe),
                std::cmp::Ordering::Equal => p.observe(toxic, safe),
                std::cmp::Ordering::Greater => p.observe(toxic, 0.0),
            })
            .collect();
        Ok(Self { params })
    }

    /// Rescales every dose to the average ESS across doses.
    pub fn calibrate(&self) -> Self {
        self.calibrate_with_target().0
    }

    /// Like [`calibrate`](Self::calibrate), also returning the common ESS.
    pub fn calibrate_with_target(&self) -> (Self, f64) {
        let (params, target) = calibrate_params(&self.params);
        (Self { params }, target)
    }
}

/// Two-agent grid: an `rows x cols` matrix of Beta priors, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Grid2Doc", into = "Grid2Doc")]
pub struct DoseGrid2 {
    rows: usize,
    cols: usize,
    params: Vec<BetaParams>,
}

#[derive(Serialize, Deserialize)]
struct Grid2Doc {
    rows: Vec<Vec<BetaParams>>,
}

impl TryFrom<Grid2Doc> for DoseGrid2 {
    type Error = Error;

    fn try_from(doc: Grid2Doc) -> Result<Self> {
        DoseGrid2::from_rows(doc.rows)
    }
}

impl From<DoseGrid2> for Grid2Doc {
    fn from(g: DoseGrid2) -> Self {
        Grid2Doc {
            rows: g.params.chunks(g.cols).map(<[_]>::to_vec).collect(),
        }
    }
}

impl DoseGrid2 {
    pub fn from_rows(rows: Vec<Vec<BetaParams>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows < 2 || n_cols < 2 {
            return Err(Error::Domain(format!(
                "need at least a 2x2 grid, got {n_rows}x{n_cols}"
            )));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Domain("grid rows have unequal lengths".into()));
        }
        let grid = Self {
            rows: n_rows,
            cols: n_cols,
            params: rows.into_iter().flatten().collect(),
        };
        if let Some((lo, hi)) = grid.first_order_violation() {
            return Err(Error::Domain(format!(
                "prior means violate the partial order between {} and {}",
                Dose::from(lo).label(),
                Dose::from(hi).label()
            )));
        }
        Ok(grid)
    }

    /// Weak default prior: mean `theta0 * (i + j) / (rows + cols)` with
    /// one-based levels, clipped to `[0.01, 0.8]`, ESS 1 per cell.
    pub fn default_prior(rows: usize, cols: usize, theta0: f64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::Domain(format!(
                "need at least a 2x2 grid, got {rows}x{cols}"
            )));
        }
        let total = (rows + cols) as f64;
        let grid = (1..=rows)
            .map(|i| {
                (1..=cols)
                    .map(|j| {
                        let m = (theta0 * (i + j) as f64 / total).clamp(0.01, 0.8);
                        BetaParams::from_mean_ess(m, 1.0)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(grid)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> &[BetaParams] {
        &self.params
    }

    pub fn get(&self, (i, j): Cell) -> Option<BetaParams> {
        (i < self.rows && j < self.cols).then(|| self.params[i * self.cols + j])
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| (i, j)))
    }

    pub fn means(&self) -> Vec<f64> {
        self.params.iter().map(BetaParams::mean).collect()
    }

    pub fn ess(&self) -> Vec<f64> {
        self.params.iter().map(BetaParams::ess).collect()
    }

    pub fn contains(&self, (i, j): Cell) -> bool {
        i < self.rows && j < self.cols
    }

    /// Partial-order comparison with range checking.
    pub fn compare(&self, lhs: Cell, rhs: Cell) -> Result<Comparison> {
        for c in [lhs, rhs] {
            if !self.contains(c) {
                return Err(Error::Domain(format!(
                    "cell ({}, {}) outside {}x{} grid",
                    c.0, c.1, self.rows, self.cols
                )));
            }
        }
        Ok(compare_cells(lhs, rhs))
    }

    fn mean_at(&self, (i, j): Cell) -> f64 {
        self.params[i * self.cols + j].mean()
    }

    // Checking immediate neighbours suffices: the order is generated by them.
    fn first_order_violation(&self) -> Option<(Cell, Cell)> {
        for (i, j) in self.cells() {
            let here = self.mean_at((i, j));
            if i + 1 < self.rows && here > self.mean_at((i + 1, j)) + MONOTONE_TOL {
                return Some(((i, j), (i + 1, j)));
            }
            if j + 1 < self.cols && here > self.mean_at((i, j + 1)) + MONOTONE_TOL {
                return Some(((i, j), (i, j + 1)));
            }
        }
        None
    }

    pub fn is_order_consistent(&self) -> bool {
        self.first_order_violation().is_none()
    }

    /// Two-agent analogue of [`DoseGrid1::has_ordered_counts`], over
    /// neighbouring cells.
    pub fn has_ordered_counts(&self) -> bool {
        let at = |i: usize, j: usize| self.params[i * self.cols + j];
        let ok = |lo: BetaParams, hi: BetaParams| {
            lo.a() <= hi.a() + MONOTONE_TOL && lo.b() + MONOTONE_TOL >= hi.b()
        };
        self.cells().all(|(i, j)| {
            (i + 1 == self.rows || ok(at(i, j), at(i + 1, j))) && (j + 1 == self.cols || ok(at(i, j), at(i, j + 1)))
        })
    }

    /// Extrapolating update after a cohort at one combination. Cells not
    /// comparable with it are left alone. Order consistency is kept under
    /// the same condition as the one-agent update.
    pub fn update(&self, outcome: &CohortOutcome) -> Result<Self> {
        let Dose::Combo(r, s) = outcome.dose else {
            return Err(Error::Domain("two-agent grid needs a (row, col) dose".into()));
        };
        if !self.contains((r, s)) {
            return Err(Error::Domain(format!(
                "cell ({r}, {s}) outside {}x{} grid",
                self.rows, self.cols
            )));
        }
        let (toxic, safe) = outcome.counts();
        let params = self
            .cells()
            .zip(&self.params)
            .map(|(cell, p)| match compare_cells(cell, (r, s)) {
                Comparison::Less => p.observe(0.0, safe),
                Comparison::Equal => p.observe(toxic, safe),
                Comparison::Greater => p.observe(toxic, 0.0),
                Comparison::Incomparable => *p,
            })
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            params,
        })
    }

    pub fn calibrate(&self) -> Self {
        self.calibrate_with_target().0
    }

    pub fn calibrate_with_target(&self) -> (Self, f64) {
        let (params, target) = calibrate_params(&self.params);
        (
            Self {
                rows: self.rows,
                cols: self.cols,
                params,
            },
            target,
        )
    }
}

/// Either grid shape, as persisted in trial documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    One(DoseGrid1),
    Two(DoseGrid2),
}

impl Grid {
    pub fn update(&self, outcome: &CohortOutcome) -> Result<Self> {
        Ok(match self {
            Grid::One(g) => Grid::One(g.update(outcome)?),
            Grid::Two(g) => Grid::Two(g.update(outcome)?),
        })
    }

    pub fn calibrate_with_target(&self) -> (Self, f64) {
        match self {
            Grid::One(g) => {
                let (g, s) = g.calibrate_with_target();
                (Grid::One(g), s)
            }
            Grid::Two(g) => {
                let (g, s) = g.calibrate_with_target();
                (Grid::Two(g), s)
            }
        }
    }

    /// Row-major parameters.
    pub fn params(&self) -> &[BetaParams] {
        match self {
            Grid::One(g) => g.params(),
            Grid::Two(g) => g.params(),
        }
    }

    pub fn ess(&self) -> Vec<f64> {
        self.params().iter().map(BetaParams::ess).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.params().iter().map(BetaParams::mean).collect()
    }

    pub fn dose_count(&self) -> usize {
        self.params().len()
    }

    /// `(rows, cols)`; a one-agent grid is a single row.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Grid::One(g) => (1, g.len()),
            Grid::Two(g) => (g.rows(), g.cols()),
        }
    }

    /// Row-major position of a dose, if it belongs to this grid.
    pub fn flat_index(&self, dose: Dose) -> Option<usize> {
        match (self, dose) {
            (Grid::One(g), Dose::Single(j)) if j < g.len() => Some(j),
            (Grid::Two(g), Dose::Combo(i, j)) if g.contains((i, j)) => Some(i * g.cols() + j),
            _ => None,
        }
    }

    pub fn lowest_dose(&self) -> Dose {
        match self {
            Grid::One(_) => Dose::Single(0),
            Grid::Two(_) => Dose::Combo(0, 0),
        }
    }
}
