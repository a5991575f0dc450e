use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{ImpactError, PanelObservation, RegressionFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Treatment,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Before,
    After,
}

fn group_of(r: &PanelObservation) -> Group {
    if r.treatment == 1 {
        Group::Treatment
    } else {
        Group::Control
    }
}

fn period_of(r: &PanelObservation) -> Period {
    if r.intervention == 1 {
        Period::After
    } else {
        Period::Before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub date: NaiveDate,
    pub group: Group,
    pub period: Period,
    pub replies: u64,
    /// Running total within the (group, period) segment.
    pub cumulative: u64,
}

/// Daily replies per group with cumulative sums that restart at the
/// intervention date.
pub fn series(panel: &[PanelObservation]) -> Vec<SeriesRow> {
    let mut rows: Vec<&PanelObservation> = panel.iter().collect();
    rows.sort_by_key(|r| (group_of(r), r.date));
    let mut totals: BTreeMap<(Group, Period), u64> = BTreeMap::new();
    rows.into_iter()
        .map(|r| {
            let key = (group_of(r), period_of(r));
            let total = totals.entry(key).or_default();
            *total += r.replies;
            SeriesRow {
                date: r.date,
                group: key.0,
                period: key.1,
                replies: r.replies,
                cumulative: *total,
            }
        })
        .collect()
}

/// Least-squares line of daily replies against days since the segment start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendLine {
    pub group: Group,
    pub period: Period,
    pub start: NaiveDate,
    pub intercept: f64,
    pub slope: f64,
    pub days: usize,
}

pub fn trend_lines(panel: &[PanelObservation]) -> Vec<TrendLine> {
    let mut segments: BTreeMap<(Group, Period), Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for r in panel {
        segments.entry((group_of(r), period_of(r))).or_default().push((r.date, r.replies as f64));
    }
    segments
        .into_iter()
        .map(|((group, period), mut pts)| {
            pts.sort_by_key(|p| p.0);
            let start = pts[0].0;
            let xs: Vec<f64> = pts.iter().map(|p| (p.0 - start).num_days() as f64).collect();
            let n = pts.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let sxy: f64 = xs.iter().zip(&pts).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            TrendLine {
                group,
                period,
                start,
                intercept: my - slope * mx,
                slope,
                days: pts.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub sample: f64,
}

/// Standardized residuals, sorted, against standard-normal quantiles at
/// plotting positions (i - 0.5)/n.
pub fn qq_points(residuals: &[f64]) -> Vec<QqPoint> {
    let n = residuals.len();
    if n < 2 {
        return Vec::new();
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut z: Vec<f64> = residuals
        .iter()
        .map(|r| if sd > 0.0 { (r - mean) / sd } else { 0.0 })
        .collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    z.into_iter()
        .enumerate()
        .map(|(i, sample)| QqPoint {
            theoretical: normal.inverse_cdf((i as f64 + 0.5) / n as f64),
            sample,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample variance (n - 1 denominator).
    pub variance: f64,
    pub overdispersed: bool,
}

pub fn dispersion_summary(panel: &[PanelObservation]) -> DispersionSummary {
    let n = panel.len();
    if n == 0 {
        return DispersionSummary {
            n,
            mean: 0.0,
            variance: 0.0,
            overdispersed: false,
        };
    }
    let mean = panel.iter().map(|r| r.replies as f64).sum::<f64>() / n as f64;
    let variance = if n > 1 {
        panel.iter().map(|r| (r.replies as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    DispersionSummary {
        n,
        mean,
        variance,
        overdispersed: variance > mean,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBundle {
    pub series: Vec<SeriesRow>,
    pub trends: Vec<TrendLine>,
    pub qq: Vec<QqPoint>,
    pub dispersion: DispersionSummary,
}

pub fn diagnostics(fit: &RegressionFit, panel: &[PanelObservation]) -> DiagnosticsBundle {
    DiagnosticsBundle {
        series: series(panel),
        trends: trend_lines(panel),
        qq: qq_points(&fit.residuals),
        dispersion: dispersion_summary(panel),
    }
}

impl DiagnosticsBundle {
    /// Writes `series.csv`, `trends.csv` and `qq.csv` into `dir`.
    pub fn write_csvs(&self, dir: impl AsRef<Path>) -> Result<(), ImpactError> {
        let dir = dir.as_ref();
        write_rows(&dir.join("series.csv"), &self.series)?;
        write_rows(&dir.join("trends.csv"), &self.trends)?;
        write_rows(&dir.join("qq.csv"), &self.qq)?;
        Ok(())
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ImpactError> {
    let err = |source| ImpactError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}
