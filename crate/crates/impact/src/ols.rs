use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::linalg::{check_rank, least_squares};
use crate::{Formula, ImpactError, ModelKind, PanelObservation, RegressionFit, Z95};

pub fn fit_ols(panel: &[PanelObservation], formula: &Formula) -> Result<RegressionFit, ImpactError> {
    let (x, y) = formula.design(panel);
    fit_linear(&x, &y, &formula.names(), formula.has_intercept())
}

/// Ordinary least squares on an explicit design. With `intercept` the R²
/// and F statistic are computed against the mean-only model, otherwise
/// against zero.
pub fn fit_linear(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String], intercept: bool) -> Result<RegressionFit, ImpactError> {
    check_rank(x, names)?;
    let (n, p) = x.shape();
    let ls = least_squares(x, y);
    let fitted = x * &ls.beta;
    let residuals = y - &fitted;
    let rss = residuals.norm_squared();
    let df = (n - p) as f64;
    let sigma2 = rss / df;

    let tss = if intercept {
        let mean = y.mean();
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    let model_df = if intercept { p - 1 } else { p };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let denom_df = if intercept { (n - 1) as f64 } else { n as f64 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * denom_df / df;
    let (f_statistic, f_p_value) = if model_df > 0 && rss > 0.0 {
        let f = ((tss - rss) / model_df as f64) / sigma2;
        let dist = FisherSnedecor::new(model_df as f64, df).expect("positive degrees of freedom");
        (Some(f), Some(dist.sf(f)))
    } else {
        (None, None)
    };

    let t_dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let coefficients: Vec<f64> = ls.beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..p).map(|j| (sigma2 * ls.xtx_inv[(j, j)]).sqrt()).collect();
    let statistics: Vec<f64> = coefficients.iter().zip(&std_errors).map(|(b, se)| b / se).collect();
    let p_values = statistics
        .iter()
        .map(|t| if t.is_finite() { 2.0 * t_dist.sf(t.abs()) } else { 0.0 })
        .collect();
    let log_likelihood = if rss > 0.0 {
        -(n as f64) / 2.0 * ((2.0 * std::f64::consts::PI * rss / n as f64).ln() + 1.0)
    } else {
        f64::INFINITY
    };
    Ok(RegressionFit {
        kind: ModelKind::Ols,
        names: names.to_vec(),
        ci_low: coefficients.iter().zip(&std_errors).map(|(b, se)| b - Z95 * se).collect(),
        ci_high: coefficients.iter().zip(&std_errors).map(|(b, se)| b + Z95 * se).collect(),
        coefficients,
        std_errors,
        statistics,
        p_values,
        log_likelihood,
        n,
        dispersion: None,
        dispersion_se: None,
        r_squared: Some(r_squared),
        adj_r_squared: Some(adj_r_squared),
        f_statistic,
        f_p_value,
        pseudo_r_squared_cox_snell: None,
        iterations: None,
        fitted: fitted.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
    })
}
