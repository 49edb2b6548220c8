//! Sweep reports and their CSV/JSON encodings.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::Tolerances;
use super::fit::{fit_rate, FitWindow, RateFit, RateModel};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Delta,
    P,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub grid: Vec<f64>,
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRecord {
    pub column: String,
    pub model: RateModel,
    pub window: FitWindow,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

/// Whether a column's value at the last grid point is at most its value at
/// the first, up to `TREND_NOISE`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub column: String,
    pub first: f64,
    pub last: f64,
    pub holds: bool,
}

pub const TREND_NOISE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub kind: SweepKind,
    pub name: String,
    pub columns: Vec<String>,
    /// One row per grid point, in grid order.
    pub rows: Vec<Vec<f64>>,
    /// False when a grid point failed; `rows` then holds the points before it.
    pub complete: bool,
    pub error: Option<String>,
    pub fits: Vec<FitRecord>,
    pub trend: Vec<TrendCheck>,
    pub metadata: Metadata,
}

impl SweepReport {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn fit(&self, column: &str, model: RateModel, window: FitWindow) -> Option<&FitRecord> {
        self.fits
            .iter()
            .find(|f| f.column == column && f.model == model && f.window == window)
    }

    /// Fills `fits` and `trend` for the given error columns.
    pub(crate) fn summarize(&mut self, error_columns: &[&str], models: &[RateModel]) {
        let present: Vec<&str> = error_columns
            .iter()
            .copied()
            .filter(|c| self.columns.iter().any(|x| x == c))
            .collect();
        let mut fits = Vec::new();
        for &column in &present {
            for &model in models {
                for window in [FitWindow::Asymptotic, FitWindow::Full] {
                    let (fit, error) = match fit_rate(self, column, model, window) {
                        Ok(f) => (Some(f), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    fits.push(FitRecord {
                        column: column.to_string(),
                        model,
                        window,
                        fit,
                        error,
                    });
                }
            }
        }
        self.fits = fits;
        self.trend = present
            .iter()
            .filter_map(|&column| {
                let values = self.column(column)?;
                let (first, last) = (*values.first()?, *values.last()?);
                Some(TrendCheck {
                    column: column.to_string(),
                    first,
                    last,
                    holds: last <= first + TREND_NOISE,
                })
            })
            .collect();
    }
}

/// 17 significant digits, enough to round-trip any double.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, report: &SweepReport) -> Result<(), HarnessError> {
    let err = |e: &dyn std::fmt::Display| HarnessError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| err(&e))?;
    w.write_record(&report.columns).map_err(|e| err(&e))?;
    for row in &report.rows {
        w.write_record(row.iter().map(|x| format_value(*x)))
            .map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let err = |e: &dyn std::fmt::Display| HarnessError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut text = serde_json::to_string_pretty(value).map_err(|e| err(&e))?;
    text.push('\n');
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| err(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2f64.ln() / 1.5, 1e-300, -7.25e12] {
            let s = format_value(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }
}
