//! Printed operating-characteristics tables, as CSV or JSON.
//!
//! One-agent results print one row per dose level; two-agent results print
//! one row per distance band. Both end with a `none` row (percent of trials
//! recommending no dose) and a `summary` row. Percentages and `e_n` are
//! rounded half-to-even to one decimal.

use serde::{Deserialize, Serialize};

use crate::dose_model::Dose;
use crate::error::{Error, Result};
use crate::simulator::{band_rows, OperatingCharacteristics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Report(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub design: String,
    pub scenario: String,
    /// Dose label (`1`..`J`), band label, `none` or `summary`.
    pub dose: String,
    pub allocation_pct: Option<f64>,
    pub recommendation_pct: Option<f64>,
    pub e_n: f64,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// Round half to even at one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round_ties_even() / 10.0
}

impl Report {
    pub fn from_oc(oc: &OperatingCharacteristics) -> Self {
        let row = |dose: String, alloc: Option<f64>, rec: Option<f64>| ReportRow {
            design: oc.design.clone(),
            scenario: oc.scenario.clone(),
            dose,
            allocation_pct: alloc.map(round1),
            recommendation_pct: rec.map(round1),
            e_n: round1(oc.expected_n),
            reps: oc.reps,
            seed: oc.seed,
        };
        let mut rows: Vec<ReportRow> = if oc.agents == 1 {
            oc.allocation_pct
                .iter()
                .zip(&oc.recommendation_pct)
                .enumerate()
                .map(|(j, (&a, &r))| row(Dose::Single(j).label(), Some(a), Some(r)))
                .collect()
        } else {
            band_rows(oc, &oc.true_rates, oc.theta0)
                .rows
                .into_iter()
                .map(|b| {
                    row(
                        b.band.label().into(),
                        Some(b.allocation_pct),
                        Some(b.recommendation_pct),
                    )
                })
                .collect()
        };
        rows.push(row("none".into(), None, Some(oc.none_pct)));
        let alloc_total = oc.allocation_pct.iter().sum();
        let rec_total = oc.recommendation_pct.iter().sum::<f64>() + oc.none_pct;
        rows.push(row("summary".into(), Some(alloc_total), Some(rec_total)));
        Report { rows }
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string())),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &self.rows {
                    w.serialize(r).map_err(|e| Error::Report(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
                String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
            }
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self> {
        match format {
            Format::Json => serde_json::from_str(text).map_err(|e| Error::Report(e.to_string())),
            Format::Csv => {
                let rows = csv::Reader::from_reader(text.as_bytes())
                    .deserialize()
                    .collect::<std::result::Result<Vec<ReportRow>, _>>()
                    .map_err(|e| Error::Report(e.to_string()))?;
                Ok(Report { rows })
            }
        }
    }
}

/// Renders the printed table for one result.
pub fn export_report(oc: &OperatingCharacteristics, format: Format) -> Result<String> {
    Report::from_oc(oc).render(format)
}

/// Renders several results into one document (e.g. CFBD next to c-CFBD).
pub fn export_reports<'a>(
    ocs: impl IntoIterator<Item = &'a OperatingCharacteristics>,
    format: Format,
) -> Result<String> {
    let rows = ocs
        .into_iter()
        .flat_map(|oc| Report::from_oc(oc).rows)
        .collect();
    Report { rows }.render(format)
}
