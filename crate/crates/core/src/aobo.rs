//! Orthogonal basis optimization: SVD of a text-embedding matrix followed by
//! curvature-based truncation of the cumulative energy curve.
//!
//! The retained rank `k*` is the interior point of maximum discrete curvature
//! on the min-max normalized energy curve. When the curve has no elbow
//! (fewer than four singular values, a flat curve, or zero curvature
//! everywhere) the full numerical rank is kept.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{numerical_rank, orthonormality_error, svd, Matrix};

/// Max-abs tolerance on `B Bᵀ − I` for an orthonormal basis.
pub const ORTHONORMAL_TOL: f64 = 1e-5;

/// Rows are an orthonormal basis of a subspace of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalBasis {
    vectors: Matrix,
    retained_singular_values: Vec<f64>,
    source_rank: usize,
}

impl OrthogonalBasis {
    /// Wraps `vectors`, checking orthonormality of the rows.
    pub fn new(
        vectors: Matrix,
        retained_singular_values: Vec<f64>,
        source_rank: usize,
    ) -> Result<Self> {
        if vectors.rows() > vectors.cols() {
            return invalid(format!(
                "{} basis vectors cannot be orthonormal in dimension {}",
                vectors.rows(),
                vectors.cols()
            ));
        }
        let err = orthonormality_error(&vectors);
        if err >= ORTHONORMAL_TOL {
            return invalid(format!("basis rows are not orthonormal (max-abs error {err:.3e})"));
        }
        Ok(OrthogonalBasis {
            vectors,
            retained_singular_values,
            source_rank,
        })
    }

    /// A basis read back from a file; singular values are unknown and set to 1.
    pub fn from_rows(vectors: Matrix) -> Result<Self> {
        let k = vectors.rows();
        OrthogonalBasis::new(vectors, vec![1.0; k], k)
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn retained_singular_values(&self) -> &[f64] {
        &self.retained_singular_values
    }

    pub fn source_rank(&self) -> usize {
        self.source_rank
    }

    /// Number of basis vectors.
    pub fn k(&self) -> usize {
        self.vectors.rows()
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

/// Cumulative energy `E(k) = Σ_{i≤k} σ_i² / Σ σ_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCurve {
    pub values: Vec<f64>,
    /// All singular values were zero; `values` is all zeros.
    pub degenerate: bool,
}

pub fn cumulative_energy(singular_values: &[f64]) -> Result<EnergyCurve> {
    if singular_values.is_empty() {
        return invalid("no singular values");
    }
    if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return invalid("singular values must be finite and non-negative");
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) {
        return invalid("singular values must be non-increasing");
    }
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(EnergyCurve {
            values: vec![0.0; singular_values.len()],
            degenerate: true,
        });
    }
    let mut acc = 0.0;
    let mut values: Vec<f64> = singular_values
        .iter()
        .map(|s| {
            acc += s * s;
            acc / total
        })
        .collect();
    // The last entry is exactly one by definition.
    *values.last_mut().unwrap() = 1.0;
    Ok(EnergyCurve {
        values,
        degenerate: false,
    })
}

/// Normalized elbow curve and its discrete curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub kappa: Vec<f64>,
}

/// `x_i = (i−1)/(n−1)`, `y_i = (E(i) − E(1)) / (E(n) − E(1))`, curvature
/// `|y''| / (1 + y'²)^{3/2}` from central differences at interior nodes.
/// Endpoint curvature is reported as zero.
///
/// Requires at least four points. A flat curve (`E(n) = E(1)`) yields
/// [`Error::Degenerate`].
pub fn curvature_curve(energy: &[f64]) -> Result<CurvatureCurve> {
    let n = energy.len();
    if n < 4 {
        return invalid(format!("curvature needs at least 4 points, got {n}"));
    }
    let (x, y) = normalized_curve(energy).ok_or_else(|| {
        Error::Degenerate("energy curve is flat (E(n) = E(1))".to_string())
    })?;
    let h = 1.0 / (n - 1) as f64;
    let mut kappa = vec![0.0; n];
    for i in 1..n - 1 {
        let d1 = (y[i + 1] - y[i - 1]) / (2.0 * h);
        let d2 = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
        kappa[i] = d2.abs() / (1.0 + d1 * d1).powf(1.5);
    }
    Ok(CurvatureCurve { x, y, kappa })
}

fn normalized_curve(energy: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = energy.len();
    let (lo, hi) = (energy[0], energy[n - 1]);
    if n < 2 || hi <= lo {
        return None;
    }
    let x = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let y = energy.iter().map(|e| (e - lo) / (hi - lo)).collect();
    Some((x, y))
}

/// Selected rank and whether the no-elbow fallback fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub k: usize,
    pub fallback: bool,
}

/// Interior curvature at or below this is rounding noise on a straight line.
pub const KAPPA_TOL: f64 = 1e-8;

/// 1-based argmax of the interior curvature, smallest index on ties, clamped
/// to `[1, numerical_rank]`. When no interior curvature exceeds
/// [`KAPPA_TOL`] the selection falls back to the numerical rank.
pub fn select_k(kappa: &[f64], numerical_rank: usize) -> Selection {
    let rank = numerical_rank.max(1);
    let n = kappa.len();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in kappa.iter().enumerate().take(n.saturating_sub(1)).skip(1) {
        if v > KAPPA_TOL && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    match best {
        Some((i, _)) => Selection {
            k: (i + 1).clamp(1, rank),
            fallback: false,
        },
        None => Selection {
            k: rank,
            fallback: true,
        },
    }
}

/// Everything the truncation rule saw, for reports and failure analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub singular_values: Vec<f64>,
    pub energy_curve: Vec<f64>,
    pub normalized_x: Vec<f64>,
    pub normalized_y: Vec<f64>,
    pub curvature: Vec<f64>,
    pub numerical_rank: usize,
    pub selected_k: usize,
    pub fallback_used: bool,
    pub k_overridden: bool,
    pub rows_normalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisOptions {
    /// L2-normalize text rows before the SVD.
    pub normalize_rows: bool,
    /// Replace the curvature choice with a fixed rank (clamped to the
    /// numerical rank).
    pub k_override: Option<usize>,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            normalize_rows: true,
            k_override: None,
        }
    }
}

/// Builds the optimized basis: the top `k*` right singular vectors of `text`.
pub fn optimize_basis(
    text: &Matrix,
    opts: &BasisOptions,
) -> Result<(OrthogonalBasis, TruncationReport)> {
    if text.max_abs() == 0.0 {
        return Err(Error::Degenerate("text matrix is all zeros".to_string()));
    }
    if opts.k_override == Some(0) {
        return invalid("k override must be at least 1");
    }
    let input = if opts.normalize_rows {
        text.normalize_rows()
    } else {
        text.clone()
    };
    let dec = svd(&input)?;
    let sv = dec.singular_values;
    let rank = numerical_rank(&sv, text.rows(), text.cols());
    let energy = cumulative_energy(&sv)?;

    let (x, y, kappa, selection) = match curvature_curve(&energy.values) {
        Ok(c) => {
            let sel = select_k(&c.kappa, rank);
            (c.x, c.y, c.kappa, sel)
        }
        Err(_) => {
            let n = sv.len();
            let (x, y) = normalized_curve(&energy.values).unwrap_or_else(|| {
                let x = (0..n).map(|i| i as f64 / (n.max(2) - 1) as f64).collect();
                (x, vec![0.0; n])
            });
            let fallback = Selection {
                k: rank.max(1),
                fallback: true,
            };
            (x, y, vec![0.0; n], fallback)
        }
    };

    let k = match opts.k_override {
        Some(k) => k.clamp(1, rank.max(1)),
        None => selection.k,
    };
    let vectors = dec.right_t.row_block(0, k)?;
    let basis = OrthogonalBasis::new(vectors, sv[..k].to_vec(), rank)?;
    let report = TruncationReport {
        singular_values: sv,
        energy_curve: energy.values,
        normalized_x: x,
        normalized_y: y,
        curvature: kappa,
        numerical_rank: rank,
        selected_k: k,
        fallback_used: selection.fallback && opts.k_override.is_none(),
        k_overridden: opts.k_override.is_some(),
        rows_normalized: opts.normalize_rows,
    };
    Ok((basis, report))
}
