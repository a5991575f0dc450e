use std::fmt::Write;

use crate::{ModelKind, RegressionFit};

/// `***` below 0.01, `**` below 0.05, `*` below 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn column_title(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Ols => "OLS",
        ModelKind::NegBin => "Negative Binomial",
    }
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

/// Side-by-side coefficient table: estimate with stars, 95% interval
/// underneath, fit statistics at the bottom.
pub fn format_table(fits: &[&RegressionFit]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for f in fits {
        for n in &f.names {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
    }
    let label_w = names.iter().map(|n| n.len()).max().unwrap_or(0).max(22);
    let col_w = 26;
    let mut out = String::new();
    let rule = "-".repeat(label_w + 2 + fits.len() * col_w);

    let _ = writeln!(out, "Dependent variable: replies");
    let _ = writeln!(out, "{rule}");
    let _ = write!(out, "{:label_w$}  ", "");
    for (i, f) in fits.iter().enumerate() {
        let _ = write!(out, "{:>col_w$}", format!("({}) {}", i + 1, column_title(f.kind)));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{rule}");

    for name in &names {
        let _ = write!(out, "{name:label_w$}  ");
        for f in fits {
            let cell = f
                .index_of(name)
                .map(|i| format!("{}{}", num(f.coefficients[i]), significance_stars(f.p_values[i])))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col_w$}");
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:label_w$}  ", "");
        for f in fits {
            let cell = f
                .index_of(name)
                .map(|i| format!("({} , {})", num(f.ci_low[i]), num(f.ci_high[i])))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>col_w$}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "{rule}");

    type Stat = fn(&RegressionFit) -> Option<String>;
    let stats: [(&str, Stat); 8] = [
        ("Observations", |f| Some(f.n.to_string())),
        ("R-squared", |f| f.r_squared.map(num)),
        ("Adjusted R-squared", |f| f.adj_r_squared.map(num)),
        ("F statistic", |f| {
            f.f_statistic
                .map(|s| format!("{}{}", num(s), f.f_p_value.map(significance_stars).unwrap_or("")))
        }),
        ("Log likelihood", |f| Some(num(f.log_likelihood))),
        ("Pseudo R2 (Cox-Snell)", |f| f.pseudo_r_squared_cox_snell.map(num)),
        ("Dispersion (alpha)", |f| f.dispersion.map(num)),
        ("Iterations", |f| f.iterations.map(|i| i.to_string())),
    ];
    for (label, get) in stats {
        let cells: Vec<String> = fits.iter().map(|f| get(f).unwrap_or_default()).collect();
        if cells.iter().all(String::is_empty) {
            continue;
        }
        let _ = write!(out, "{label:label_w$}  ");
        for c in cells {
            let _ = write!(out, "{c:>col_w$}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "Note: *p<0.1; **p<0.05; ***p<0.01. 95% intervals in parentheses.");
    out
}
