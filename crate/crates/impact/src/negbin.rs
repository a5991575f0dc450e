//! NB2 regression: log link, variance μ + αμ².
//!
//! β is fitted by iteratively reweighted least squares at fixed α, α by a
//! golden-section search of the log-likelihood at fixed β, alternating
//! until the log-likelihood settles.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::linalg::{check_rank, least_squares};
use crate::{Formula, ImpactError, ModelKind, PanelObservation, RegressionFit, Z95};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegBinOptions {
    /// Relative change in log-likelihood that ends the outer loop.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub min_alpha: f64,
    pub max_alpha: f64,
}

impl Default for NegBinOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            min_alpha: 1e-8,
            max_alpha: 1e4,
        }
    }
}

const MAX_ETA: f64 = 700.0;
const INNER_TOL: f64 = 1e-12;
const INNER_MAX: usize = 100;

/// Log-likelihood of counts `y` under NB2 with means `mu` and dispersion α.
///
/// Uses `ln Γ(y+1/α) - ln Γ(1/α) = Σ_{j<y} ln(1+αj) - y ln α`, which stays
/// accurate as α → 0 where the gamma form cancels catastrophically.
pub fn negbin_log_likelihood(y: &[f64], mu: &[f64], alpha: f64) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&yi, &m)| {
            let k = yi as u64;
            let series: f64 = (0..k).map(|j| (alpha * j as f64).ln_1p()).sum();
            let log1p_am = (alpha * m).ln_1p();
            series + yi * m.ln() - yi * log1p_am - log1p_am / alpha - ln_gamma(yi + 1.0)
        })
        .sum()
}

fn means(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (x * beta).iter().map(|e| e.min(MAX_ETA).exp()).collect()
}

struct Inner {
    beta: DVector<f64>,
    cov: DMatrix<f64>,
}

/// IRLS for β at fixed α, with step halving whenever the likelihood drops.
fn irls(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, start: &DVector<f64>) -> Inner {
    let (n, p) = x.shape();
    let ys: Vec<f64> = y.iter().copied().collect();
    let mut beta = start.clone();
    let mut mu = means(x, &beta);
    let mut ll = negbin_log_likelihood(&ys, &mu, alpha);
    let mut cov = DMatrix::identity(p, p);
    for _ in 0..INNER_MAX {
        let eta = x * &beta;
        let mut xw = x.clone();
        let mut zw = DVector::zeros(n);
        for i in 0..n {
            let w = mu[i] / (1.0 + alpha * mu[i]);
            let sw = w.sqrt();
            zw[i] = sw * (eta[i] + (y[i] - mu[i]) / mu[i]);
            xw.row_mut(i).scale_mut(sw);
        }
        let ls = least_squares(&xw, &zw);
        cov = ls.xtx_inv;
        let mut candidate = ls.beta;
        let mut cand_mu = means(x, &candidate);
        let mut cand_ll = negbin_log_likelihood(&ys, &cand_mu, alpha);
        let mut halvings = 0;
        while !(cand_ll >= ll) && halvings < 30 {
            candidate = (&candidate + &beta) * 0.5;
            cand_mu = means(x, &candidate);
            cand_ll = negbin_log_likelihood(&ys, &cand_mu, alpha);
            halvings += 1;
        }
        if !(cand_ll >= ll) {
            break;
        }
        let change = (cand_ll - ll).abs() / (ll.abs() + 1e-300);
        beta = candidate;
        mu = cand_mu;
        ll = cand_ll;
        if change < INNER_TOL {
            break;
        }
    }
    // information at the final β
    let mut xw = x.clone();
    for i in 0..n {
        xw.row_mut(i).scale_mut((mu[i] / (1.0 + alpha * mu[i])).sqrt());
    }
    if check_rank(&xw, &vec![String::new(); p]).is_ok() {
        cov = least_squares(&xw, &DVector::zeros(n)).xtx_inv;
    }
    Inner { beta, cov }
}

/// Maximizes the log-likelihood over log α in `[ln lo, ln hi]`.
fn golden_alpha(y: &[f64], mu: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let f = |la: f64| negbin_log_likelihood(y, mu, la.exp());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(lo.ln(), f(lo.ln())), (hi.ln(), f(hi.ln())), (c, fc), (d, fd)];
    let best = candidates.iter().copied().fold((0.0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    (best.0.exp(), best.1)
}

pub fn fit_negbin(panel: &[PanelObservation], formula: &Formula) -> Result<RegressionFit, ImpactError> {
    fit_negbin_with(panel, formula, &NegBinOptions::default())
}

pub fn fit_negbin_with(
    panel: &[PanelObservation],
    formula: &Formula,
    opts: &NegBinOptions,
) -> Result<RegressionFit, ImpactError> {
    let (x, y) = formula.design(panel);
    let mut fit = fit_negbin_design(&x, &y, &formula.names(), opts)?;
    if formula.has_intercept() && formula.terms().len() > 1 {
        let (x0, _) = Formula::intercept_only().design(panel);
        let null = fit_negbin_design(&x0, &y, &Formula::intercept_only().names(), opts)?;
        fit.pseudo_r_squared_cox_snell = Some(cox_snell(&fit, &null)?);
    }
    Ok(fit)
}

pub fn fit_negbin_design(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
    opts: &NegBinOptions,
) -> Result<RegressionFit, ImpactError> {
    check_rank(x, names)?;
    if y.iter().all(|&v| v == 0.0) {
        return Err(ImpactError::AllZeroOutcome);
    }
    let (n, p) = x.shape();
    let ys: Vec<f64> = y.iter().copied().collect();

    // start: least squares on log counts, then a Poisson pass for the moment estimate of α
    let log_y = y.map(|v| (v + 0.5).ln());
    let start = least_squares(x, &log_y).beta;
    let poisson = irls(x, y, opts.min_alpha, &start);
    let mu0 = means(x, &poisson.beta);
    let excess: f64 = ys.iter().zip(&mu0).map(|(yi, m)| (yi - m).powi(2) - m).sum();
    let scale: f64 = mu0.iter().map(|m| m * m).sum();
    let mut alpha = (excess / scale).clamp(opts.min_alpha, opts.max_alpha);

    let mut beta = poisson.beta;
    let mut trace = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    let mut last_inner = None;
    for it in 1..=opts.max_iterations {
        let inner = irls(x, y, alpha, &beta);
        beta = inner.beta.clone();
        let mu = means(x, &beta);
        let (a, ll) = golden_alpha(&ys, &mu, opts.min_alpha, opts.max_alpha);
        alpha = a;
        trace.push(ll);
        let converged = previous.is_finite() && (ll - previous).abs() / ll.abs().max(1e-300) < opts.tolerance;
        previous = ll;
        last_inner = Some((inner, it));
        if converged {
            break;
        }
        if it == opts.max_iterations {
            return Err(ImpactError::NonConvergence { iterations: it, trace });
        }
    }
    let (inner, iterations) = last_inner.expect("at least one iteration");
    // refit β at the final α so β, α and the covariance agree
    let inner = irls(x, y, alpha, &inner.beta);
    let beta = inner.beta;
    let mu = means(x, &beta);
    let ll = negbin_log_likelihood(&ys, &mu, alpha);

    let std_errors: Vec<f64> = (0..p).map(|j| inner.cov[(j, j)].sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let statistics: Vec<f64> = coefficients.iter().zip(&std_errors).map(|(b, se)| b / se).collect();
    let normal = Normal::standard();
    let p_values = statistics.iter().map(|z| 2.0 * normal.sf(z.abs())).collect();
    let residuals = ys.iter().zip(&mu).map(|(yi, m)| (yi - m) / (m + alpha * m * m).sqrt()).collect();
    Ok(RegressionFit {
        kind: ModelKind::NegBin,
        names: names.to_vec(),
        ci_low: coefficients.iter().zip(&std_errors).map(|(b, se)| b - Z95 * se).collect(),
        ci_high: coefficients.iter().zip(&std_errors).map(|(b, se)| b + Z95 * se).collect(),
        coefficients,
        std_errors,
        statistics,
        p_values,
        log_likelihood: ll,
        n,
        dispersion: Some(alpha),
        dispersion_se: alpha_standard_error(&ys, &mu, alpha, opts),
        r_squared: None,
        adj_r_squared: None,
        f_statistic: None,
        f_p_value: None,
        pseudo_r_squared_cox_snell: None,
        iterations: Some(iterations),
        fitted: mu,
        residuals,
    })
}

/// Observed-information standard error of α at fixed β, from a central
/// second difference. None at the boundary or when the curvature is not
/// negative.
fn alpha_standard_error(y: &[f64], mu: &[f64], alpha: f64, opts: &NegBinOptions) -> Option<f64> {
    let h = alpha * 1e-4;
    if alpha - h <= opts.min_alpha || alpha + h >= opts.max_alpha {
        return None;
    }
    let f = |a: f64| negbin_log_likelihood(y, mu, a);
    let d2 = (f(alpha + h) - 2.0 * f(alpha) + f(alpha - h)) / (h * h);
    (d2 < 0.0).then(|| (-1.0 / d2).sqrt())
}

/// Cox–Snell pseudo R²: `1 - exp(-2 (ℓ_model - ℓ_null) / n)`.
pub fn cox_snell(fit: &RegressionFit, null_fit: &RegressionFit) -> Result<f64, ImpactError> {
    if fit.n != null_fit.n {
        return Err(ImpactError::MismatchedN {
            model: fit.n,
            null: null_fit.n,
        });
    }
    Ok(1.0 - (-2.0 * (fit.log_likelihood - null_fit.log_likelihood) / fit.n as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct pmf for small counts: Γ(y+r)/(Γ(r) y!) (r/(r+μ))^r (μ/(r+μ))^y.
    fn pmf(y: u64, mu: f64, alpha: f64) -> f64 {
        let r = 1.0 / alpha;
        let log = ln_gamma(y as f64 + r) - ln_gamma(r) - ln_gamma(y as f64 + 1.0)
            + r * (r / (r + mu)).ln()
            + y as f64 * (mu / (r + mu)).ln();
        log.exp()
    }

    #[test]
    fn log_likelihood_matches_pmf() {
        for (y, mu, alpha) in [(0u64, 2.0, 0.5), (3, 2.0, 0.5), (7, 10.0, 1.3), (1, 0.2, 4.0)] {
            let ll = negbin_log_likelihood(&[y as f64], &[mu], alpha);
            assert!((ll - pmf(y, mu, alpha).ln()).abs() < 1e-10, "{y} {mu} {alpha}");
        }
    }

    #[test]
    fn small_alpha_approaches_poisson() {
        let (y, mu) = (4.0, 3.0);
        let poisson = y * f64::ln(mu) - mu - ln_gamma(y + 1.0);
        let ll = negbin_log_likelihood(&[y], &[mu], 1e-10);
        assert!((ll - poisson).abs() < 1e-8);
    }

    #[test]
    fn pmf_sums_to_one() {
        let total: f64 = (0..2000).map(|y| negbin_log_likelihood(&[y as f64], &[5.0], 0.7).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cox_snell_identity_and_mismatch() {
        let x = DMatrix::from_fn(6, 1, |_, _| 1.0);
        let y = DVector::from_vec(vec![1.0, 0.0, 3.0, 2.0, 5.0, 1.0]);
        let fit = fit_negbin_design(&x, &y, &["intercept".to_string()], &NegBinOptions::default()).unwrap();
        assert_eq!(cox_snell(&fit, &fit).unwrap(), 0.0);
        let mut other = fit.clone();
        other.n = 5;
        assert!(matches!(cox_snell(&fit, &other), Err(ImpactError::MismatchedN { .. })));
    }

    #[test]
    fn intercept_only_estimates_mean() {
        let x = DMatrix::from_fn(8, 1, |_, _| 1.0);
        let y = DVector::from_vec(vec![0.0, 2.0, 9.0, 1.0, 0.0, 14.0, 3.0, 7.0]);
        let fit = fit_negbin_design(&x, &y, &["intercept".to_string()], &NegBinOptions::default()).unwrap();
        assert!((fit.coefficients[0].exp() - y.mean()).abs() < 1e-6);
        assert!(fit.dispersion.unwrap() > 0.1);
    }

    #[test]
    fn all_zero_outcome_is_an_error() {
        let x = DMatrix::from_fn(4, 1, |_, _| 1.0);
        let y = DVector::zeros(4);
        assert!(matches!(
            fit_negbin_design(&x, &y, &["intercept".to_string()], &NegBinOptions::default()),
            Err(ImpactError::AllZeroOutcome)
        ));
    }

    #[test]
    fn iteration_cap_reports_trace() {
        let x = DMatrix::from_fn(8, 1, |_, _| 1.0);
        let y = DVector::from_vec(vec![0.0, 2.0, 9.0, 1.0, 0.0, 14.0, 3.0, 7.0]);
        let opts = NegBinOptions {
            max_iterations: 1,
            ..Default::default()
        };
        match fit_negbin_design(&x, &y, &["intercept".to_string()], &opts) {
            Err(ImpactError::NonConvergence { iterations, trace }) => {
                assert_eq!(iterations, 1);
                assert_eq!(trace.len(), 1);
            }
            other => panic!("{:?}", other.map(|f| f.coefficients)),
        }
    }
}
