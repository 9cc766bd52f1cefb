//! Snapshot-POD data compression.
//!
//! The reduced basis comes from the eigen-decomposition of the snapshot
//! correlation matrix under a mass-weighted L²(Ω) inner product: modes are
//! recombined from the snapshots as `ψ_i = (1/√λ_i) Σ_n u_n ξ_i_n` and kept
//! while `λ_i/λ_1 ≥ tol²`. A final Gram-Schmidt pass under the same inner
//! product removes the eigen-solver round-off that would otherwise spoil
//! orthonormality for trailing modes.

use rayon::prelude::*;

/// Eigenvalue ratios below this are indistinguishable from f64 eigen-solver
/// noise and are never kept, whatever the tolerance.
pub const RATIO_FLOOR: f64 = 1e-14;

/// Weighted inner product `Σ_k w_k a_k b_k`.
pub fn weighted_dot(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(weights)
        .map(|((x, y), w)| w * x * y)
        .sum()
}

pub fn weighted_norm(a: &[f64], weights: &[f64]) -> f64 {
    weighted_dot(a, a, weights).sqrt()
}

/// An orthonormal reduced basis with its eigenvalue spectrum.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    pub modes: Vec<Vec<f64>>,
    /// Correlation-matrix eigenvalues of the retained modes, non-increasing.
    pub eigenvalues: Vec<f64>,
    pub tolerance: f64,
}

impl ReducedBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Coefficients of the orthogonal projection of `field`.
    pub fn project(&self, field: &[f64], weights: &[f64]) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| weighted_dot(m, field, weights))
            .collect()
    }

    pub fn reconstruct(&self, coefficients: &[f64]) -> Vec<f64> {
        let len = self.modes.first().map_or(0, |m| m.len());
        let mut out = vec![0.0; len];
        for (mode, &c) in self.modes.iter().zip(coefficients) {
            for (o, &m) in out.iter_mut().zip(mode) {
                *o += c * m;
            }
        }
        out
    }

    /// Relative projection error of a field (zero fields project exactly).
    pub fn projection_error(&self, field: &[f64], weights: &[f64]) -> f64 {
        let norm = weighted_norm(field, weights);
        if norm == 0.0 {
            return 0.0;
        }
        let reconstructed = self.reconstruct(&self.project(field, weights));
        let diff: Vec<f64> = field
            .iter()
            .zip(&reconstructed)
            .map(|(a, b)| a - b)
            .collect();
        weighted_norm(&diff, weights) / norm
    }
}

/// Builds the POD basis of a snapshot set.
pub fn snapshot_pod(snapshots: &[Vec<f64>], tol: f64, weights: &[f64]) -> ReducedBasis {
    let n = snapshots.len();
    if n == 0 {
        return ReducedBasis {
            modes: Vec::new(),
            eigenvalues: Vec::new(),
            tolerance: tol,
        };
    }

    // Snapshot correlation matrix (parallel over rows, deterministic fill).
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| weighted_dot(&snapshots[i], &snapshots[j], weights))
                .collect()
        })
        .collect();
    let corr = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (rows[i][j] + rows[j][i]));

    let eig = nalgebra::SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda_max = eig.eigenvalues[order[0]];
    if lambda_max <= 0.0 {
        log::warn!("snapshot set is numerically zero; returning an empty basis");
        return ReducedBasis {
            modes: Vec::new(),
            eigenvalues: Vec::new(),
            tolerance: tol,
        };
    }

    let cutoff = lambda_max * (tol * tol).max(RATIO_FLOOR);
    let mut modes = Vec::new();
    let mut eigenvalues = Vec::new();
    let len = snapshots[0].len();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        if lambda < cutoff || lambda <= 0.0 {
            break;
        }
        let inv_sqrt = 1.0 / lambda.sqrt();
        let mut mode = vec![0.0; len];
        for (snapshot, &coef) in snapshots.iter().zip(eig.eigenvectors.column(idx).iter()) {
            let c = coef * inv_sqrt;
            for (m, &u) in mode.iter_mut().zip(snapshot) {
                *m += c * u;
            }
        }
        modes.push(mode);
        eigenvalues.push(lambda);
    }

    // Re-orthonormalize (modified Gram-Schmidt, two passes).
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(modes.len());
    let mut kept_lambdas = Vec::with_capacity(modes.len());
    for (mode, lambda) in modes.into_iter().zip(eigenvalues) {
        let mut v = mode;
        for _ in 0..2 {
            for prev in &kept {
                let c = weighted_dot(&v, prev, weights);
                for (vi, pi) in v.iter_mut().zip(prev.iter()) {
                    *vi -= c * pi;
                }
            }
        }
        let norm = weighted_norm(&v, weights);
        if norm <= 1e-12 {
            continue; // numerically dependent direction
        }
        for vi in &mut v {
            *vi /= norm;
        }
        kept.push(v);
        kept_lambdas.push(lambda);
    }

    ReducedBasis {
        modes: kept,
        eigenvalues: kept_lambdas,
        tolerance: tol,
    }
}
