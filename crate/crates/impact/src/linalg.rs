use nalgebra::{DMatrix, DVector};

use crate::ImpactError;

/// Relative residual norm below which a column counts as a linear
/// combination of the columns before it.
const COLLINEAR_TOL: f64 = 1e-7;

pub(crate) struct LeastSquares {
    pub beta: DVector<f64>,
    /// (XᵀX)⁻¹ in the original column units.
    pub xtx_inv: DMatrix<f64>,
}

fn column_norms(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols()).map(|j| x.column(j).norm()).collect()
}

/// Names every column that is zero or lies in the span of the columns
/// before it.
pub(crate) fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), ImpactError> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(ImpactError::TooFewObservations { n, p });
    }
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut collinear = Vec::new();
    for j in 0..p {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            collinear.push(names[j].clone());
            continue;
        }
        let unit = col / norm;
        let residual = if kept.is_empty() {
            unit.norm()
        } else {
            let basis = DMatrix::from_columns(&kept);
            let q = basis.qr().q();
            (&unit - &q * (q.transpose() * &unit)).norm()
        };
        if residual < COLLINEAR_TOL {
            collinear.push(names[j].clone());
        } else {
            kept.push(unit);
        }
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(ImpactError::RankDeficient { columns: collinear })
    }
}

/// Least squares through a QR decomposition of the column-scaled design.
/// Callers check rank first.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> LeastSquares {
    let p = x.ncols();
    let scale = column_norms(x);
    let mut xs = x.clone();
    for (j, s) in scale.iter().enumerate() {
        xs.column_mut(j).unscale_mut(*s);
    }
    let qr = xs.qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let beta_s = r.solve_upper_triangular(&qty).expect("full-rank design");
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).expect("full-rank design");
    let mut cov = &r_inv * r_inv.transpose();
    let mut beta = beta_s;
    for j in 0..p {
        beta[j] /= scale[j];
        for k in 0..p {
            cov[(j, k)] /= scale[j] * scale[k];
        }
    }
    LeastSquares { beta, xtx_inv: cov }
}
