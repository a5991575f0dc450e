use chrono::{Duration, NaiveDate};
use firewatch_impact::{
    cox_snell, diff_in_means, fit_linear, fit_negbin, fit_negbin_design, fit_ols, Formula, ImpactError, NegBinOptions,
    PanelObservation,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

const LABELS: [&str; 5] = ["intercept", "a", "b", "ab", "z"];

fn labels() -> Vec<String> {
    LABELS.iter().map(|s| s.to_string()).collect()
}

fn panel_from(treat: &[u64], control: &[u64], split: usize) -> Vec<PanelObservation> {
    let day0 = NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    let mut out = Vec::new();
    for i in 0..treat.len() {
        for (t, v) in [(1u8, treat[i]), (0u8, control[i])] {
            out.push(PanelObservation {
                date: day0 + Duration::days(i as i64),
                region: if t == 1 { "Rio de Janeiro" } else { "Bahia" }.into(),
                replies: v,
                intervention: u8::from(i >= split),
                treatment: t,
                number_cases: (i % 5) as u64,
                number_victims: (i % 3) as u64,
                avg_population: 1000.0 + i as f64,
                population_imputed: false,
            });
        }
    }
    out
}

fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..p).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != c {
                let f = m[r][c];
                for k in 0..2 * p {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    m.into_iter().map(|r| r[p..].to_vec()).collect()
}

fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = gauss_jordan_inverse(&xtx);
    (0..p).map(|a| (0..p).map(|b| inv[a][b] * xty[b]).sum()).collect()
}

/// Poisson regression by Newton steps on the score equations.
fn poisson_newton(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    beta[0] = (y.iter().sum::<f64>() / y.len() as f64).ln();
    for _ in 0..100 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for (row, &yi) in x.iter().zip(y) {
            let mu = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp();
            for a in 0..p {
                grad[a] += (yi - mu) * row[a];
                for b in 0..p {
                    hess[a][b] += mu * row[a] * row[b];
                }
            }
        }
        let inv = gauss_jordan_inverse(&hess);
        let step: Vec<f64> = (0..p).map(|a| (0..p).map(|b| inv[a][b] * grad[b]).sum()).collect();
        for a in 0..p {
            beta[a] += step[a];
        }
        if step.iter().all(|s| s.abs() < 1e-13) {
            break;
        }
    }
    beta
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

fn design(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, 5);
    for i in 0..n {
        let a = f64::from(u8::from(rng.random_bool(0.5)));
        let b = f64::from(u8::from(rng.random_bool(0.5)));
        x[(i, 0)] = 1.0;
        x[(i, 1)] = a;
        x[(i, 2)] = b;
        x[(i, 3)] = a * b;
        x[(i, 4)] = rng.random_range(0.0..4.0);
    }
    x
}

fn mean(x: &DMatrix<f64>, i: usize, beta: &[f64]) -> f64 {
    (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum::<f64>().exp()
}

fn cell_means() -> Result<String, String> {
    let t = [17, 17, 17, 24, 24, 24];
    let c = [6, 6, 6, 4, 4, 4];
    let did = diff_in_means(&panel_from(&t, &c, 3)).map_err(|e| e.to_string())?;
    ensure!(did.estimate == 9.0, "estimate {}", did.estimate);
    Ok(format!("DiD {}", did.estimate))
}

fn saturated_equals_did() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let days = rng.random_range(6..60);
        let t: Vec<u64> = (0..days).map(|_| rng.random_range(0..60)).collect();
        let c: Vec<u64> = (0..days).map(|_| rng.random_range(0..40)).collect();
        let split = rng.random_range(1..days);
        let panel = panel_from(&t, &c, split);
        let did = diff_in_means(&panel).map_err(|e| e.to_string())?;
        let fit = fit_ols(&panel, &Formula::saturated()).map_err(|e| e.to_string())?;
        let coef = fit.coefficient("intervention_treatment").ok_or("no interaction coefficient")?;
        worst = worst.max((coef - did.estimate).abs());
        ensure!((coef - did.estimate).abs() <= 1e-9, "{coef} vs {}", did.estimate);
    }
    Ok(format!("500 panels, max gap {worst:.1e}"))
}

fn ols_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut fitted, mut worst) = (0, 0.0f64);
    for _ in 0..300 {
        let n = rng.random_range(12..200);
        let x = design(n, &mut rng);
        let y = DVector::from_fn(n, |i, _| {
            2.0 + 1.5 * x[(i, 1)] - 0.7 * x[(i, 3)] + 0.3 * x[(i, 4)] + rng.sample::<f64, _>(StandardNormal)
        });
        let fit = match fit_linear(&x, &y, &labels(), true) {
            Ok(f) => f,
            // an empty binary cell makes the design singular
            Err(ImpactError::RankDeficient { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        };
        fitted += 1;
        for (b, o) in fit.coefficients.iter().zip(normal_equations(&rows(&x), y.as_slice())) {
            worst = worst.max((b - o).abs());
            ensure!((b - o).abs() <= 1e-8, "{b} vs {o}");
        }
    }
    ensure!(fitted >= 250, "only {fitted} designs were full rank");
    Ok(format!("{fitted} designs, max gap {worst:.1e}"))
}

fn negbin_recovery() -> Result<String, String> {
    let beta = [1.0, 0.5, -0.3, 0.4, 0.15];
    let alpha = 0.5;
    let mut worst_z: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5_000 + seed);
        let x = design(5_000, &mut rng);
        let y = DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| {
                let lambda = Gamma::new(1.0 / alpha, alpha * mean(&x, i, &beta)).unwrap().sample(&mut rng);
                if lambda <= 0.0 {
                    0.0
                } else {
                    Poisson::new(lambda).unwrap().sample(&mut rng)
                }
            }),
        );
        let fit = fit_negbin_design(&x, &y, &labels(), &NegBinOptions::default()).map_err(|e| e.to_string())?;
        for j in 0..beta.len() {
            let z = (fit.coefficients[j] - beta[j]) / fit.std_errors[j];
            worst_z = worst_z.max(z.abs());
            ensure!(z.abs() < 3.0, "seed {seed} {}: {} (se {})", LABELS[j], fit.coefficients[j], fit.std_errors[j]);
        }
    }
    Ok(format!("5 simulations, worst |z| {worst_z:.2}"))
}

fn poisson_limit() -> Result<String, String> {
    let beta = [0.8, 0.3, -0.2, 0.25, 0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = design(3_000, &mut rng);
    let y = DVector::from_iterator(
        x.nrows(),
        (0..x.nrows()).map(|i| Poisson::new(mean(&x, i, &beta)).unwrap().sample(&mut rng)),
    );
    let opts = NegBinOptions {
        min_alpha: 1e-10,
        max_alpha: 1e-7,
        ..NegBinOptions::default()
    };
    let fit = fit_negbin_design(&x, &y, &labels(), &opts).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (b, o) in fit.coefficients.iter().zip(poisson_newton(&rows(&x), y.as_slice())) {
        worst = worst.max((b - o).abs());
        ensure!((b - o).abs() <= 1e-3, "{b} vs {o}");
    }
    Ok(format!("max gap to Poisson {worst:.1e}"))
}

fn cox_snell_identity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let t: Vec<u64> = (0..60).map(|i| rng.random_range(0..10) + if i >= 30 { 15 } else { 5 }).collect();
    let c: Vec<u64> = (0..60).map(|_| rng.random_range(0..12)).collect();
    let panel = panel_from(&t, &c, 30);
    let full = fit_negbin(&panel, &Formula::full()).map_err(|e| e.to_string())?;
    let null = fit_negbin(&panel, &Formula::intercept_only()).map_err(|e| e.to_string())?;
    let same = cox_snell(&null, &null).map_err(|e| e.to_string())?;
    ensure!(same == 0.0, "cox_snell(null, null) = {same}");
    let r2 = cox_snell(&full, &null).map_err(|e| e.to_string())?;
    let by_hand = 1.0 - (-2.0 * (full.log_likelihood - null.log_likelihood) / full.n as f64).exp();
    ensure!((r2 - by_hand).abs() <= 1e-12, "{r2} vs {by_hand}");
    let reported = full.pseudo_r_squared_cox_snell.ok_or("fit carries no pseudo R2")?;
    ensure!((reported - r2).abs() <= 1e-12, "fit reports {reported}, recomputed {r2}");
    Ok(format!("R2 {r2:.4}"))
}

pub fn check() -> Result<String, String> {
    let parts: [(&str, fn() -> Result<String, String>); 6] = [
        ("cell means", cell_means),
        ("saturated", saturated_equals_did),
        ("ols", ols_oracle),
        ("negbin", negbin_recovery),
        ("poisson limit", poisson_limit),
        ("cox-snell", cox_snell_identity),
    ];
    let mut notes = Vec::new();
    for (name, f) in parts {
        notes.push(format!("{name}: {}", f().map_err(|e| format!("{name}: {e}"))?));
    }
    Ok(notes.join("; "))
}

