//! Difference-in-differences analysis of analyst interactions: daily panel
//! construction, difference in cell means, OLS and NB2 regressions, and
//! plot-ready diagnostics.

mod diagnostics;
mod did;
mod formula;
mod linalg;
mod negbin;
mod ols;
mod panel;
mod report;

pub use diagnostics::{
    diagnostics, dispersion_summary, qq_points, series, trend_lines, DiagnosticsBundle, DispersionSummary, Group,
    Period, QqPoint, SeriesRow, TrendLine,
};
pub use did::{diff_in_means, DidEstimate};
pub use formula::{Formula, Term};
pub use negbin::{cox_snell, fit_negbin, fit_negbin_design, fit_negbin_with, negbin_log_likelihood, NegBinOptions};
pub use ols::{fit_linear, fit_ols};
pub use panel::{
    build_panel, read_events_csv, read_panel_csv, write_panel_csv, DateWindow, EventRecord, InteractionRecord,
    PanelObservation, PanelSpec,
};
pub use report::{format_table, significance_stars};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ImpactError {
    #[error("window is empty: {start} is after {end}")]
    EmptyWindow { start: chrono::NaiveDate, end: chrono::NaiveDate },
    #[error("region {0:?} appears in neither the interactions nor the events")]
    UnknownRegion(String),
    #[error("treatment and control regions must differ")]
    SameRegion,
    #[error("no observations in the {0} cell")]
    EmptyCell(String),
    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("need more observations ({n}) than coefficients ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("did not converge after {iterations} iterations; log-likelihood trace {trace:?}")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("outcome is zero everywhere")]
    AllZeroOutcome,
    #[error("fits use different observation counts ({model} vs {null})")]
    MismatchedN { model: usize, null: usize },
    #[error("formula: {0}")]
    Formula(String),
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    NegBin,
}

/// Estimated coefficients and fit statistics. Vectors are indexed like
/// `names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub kind: ModelKind,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// t statistics for OLS, z statistics for NB.
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    /// 95% intervals from the normal approximation.
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub log_likelihood: f64,
    pub n: usize,
    /// NB2 dispersion α (variance μ + αμ²).
    pub dispersion: Option<f64>,
    pub dispersion_se: Option<f64>,
    pub r_squared: Option<f64>,
    pub adj_r_squared: Option<f64>,
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub pseudo_r_squared_cox_snell: Option<f64>,
    pub iterations: Option<usize>,
    pub fitted: Vec<f64>,
    /// Raw residuals for OLS, Pearson residuals for NB.
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.std_errors[i])
    }
}

pub(crate) const Z95: f64 = 1.959_963_984_540_054;
