use serde::{Deserialize, Serialize};

use crate::{ImpactError, PanelObservation};

/// Mean daily replies per (group × period) cell and the resulting
/// difference-in-differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DidEstimate {
    pub treatment_before: f64,
    pub treatment_after: f64,
    pub control_before: f64,
    pub control_after: f64,
    pub estimate: f64,
    /// Observation counts in the order treatment-before, treatment-after,
    /// control-before, control-after.
    pub cell_sizes: [usize; 4],
}

impl DidEstimate {
    pub fn from_means(treatment_before: f64, treatment_after: f64, control_before: f64, control_after: f64) -> Self {
        Self {
            treatment_before,
            treatment_after,
            control_before,
            control_after,
            estimate: (treatment_after - treatment_before) - (control_after - control_before),
            cell_sizes: [0; 4],
        }
    }
}

pub fn diff_in_means(panel: &[PanelObservation]) -> Result<DidEstimate, ImpactError> {
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for r in panel {
        let cell = match (r.treatment, r.intervention) {
            (1, 0) => 0,
            (1, _) => 1,
            (_, 0) => 2,
            _ => 3,
        };
        sums[cell] += r.replies as f64;
        counts[cell] += 1;
    }
    const NAMES: [&str; 4] = ["treatment/before", "treatment/after", "control/before", "control/after"];
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(ImpactError::EmptyCell(NAMES[i].to_string()));
    }
    let m: Vec<f64> = sums.iter().zip(counts).map(|(s, c)| s / c as f64).collect();
    Ok(DidEstimate {
        cell_sizes: counts,
        ..DidEstimate::from_means(m[0], m[1], m[2], m[3])
    })
}
