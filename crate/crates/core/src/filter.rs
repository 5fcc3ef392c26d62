//! Antisymmetric W statistics and the knockoff+ selection threshold.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WStatistics {
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    /// `f64::INFINITY` when nothing qualifies.
    pub threshold: f64,
    /// Sorted feature indices with `w_j ≥ threshold`.
    pub selected: Vec<usize>,
    pub target_fdr: f64,
}

impl SelectionResult {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// `W_j = Z_j − Z̃_j`.
pub fn compute_w(z: &[f64], z_tilde: &[f64]) -> Result<WStatistics> {
    if z.len() != z_tilde.len() {
        return Err(Error::dims(z.len(), z_tilde.len()));
    }
    let w = z.iter().zip(z_tilde).map(|(a, b)| a - b).collect();
    Ok(WStatistics {
        z: z.to_vec(),
        z_tilde: z_tilde.to_vec(),
        w,
    })
}

/// Knockoff+ threshold
///
/// `T = min { t ∈ {|W_j| : W_j ≠ 0} : (1 + #{j : W_j ≤ −t}) / max(1, #{j : W_j ≥ t}) ≤ q }`
///
/// and the selection `{ j : W_j ≥ T }`.
pub fn knockoff_threshold(w: &[f64], q: f64) -> Result<SelectionResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQ(q));
    }
    let mut candidates: Vec<f64> = w.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_by(|a, b| a.total_cmp(b));
    candidates.dedup();

    // Counts of positives ≥ t and negatives ≤ −t, swept with two pointers.
    let mut pos: Vec<f64> = w.iter().copied().filter(|v| *v > 0.0).collect();
    let mut neg: Vec<f64> = w.iter().filter(|v| **v < 0.0).map(|v| -v).collect();
    pos.sort_by(|a, b| a.total_cmp(b));
    neg.sort_by(|a, b| a.total_cmp(b));
    let (mut ip, mut ineg) = (0, 0);

    let mut threshold = f64::INFINITY;
    for &t in &candidates {
        while ip < pos.len() && pos[ip] < t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] < t {
            ineg += 1;
        }
        let n_pos = pos.len() - ip;
        let n_neg = neg.len() - ineg;
        let ratio = (1 + n_neg) as f64 / n_pos.max(1) as f64;
        if ratio <= q {
            threshold = t;
            break;
        }
    }
    let selected = if threshold.is_finite() {
        w.iter()
            .enumerate()
            .filter(|(_, v)| **v >= threshold)
            .map(|(j, _)| j)
            .collect()
    } else {
        Vec::new()
    };
    Ok(SelectionResult {
        threshold,
        selected,
        target_fdr: q,
    })
}
