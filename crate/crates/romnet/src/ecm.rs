//! Empirical Cubature Method: selects a sparse set of integration points
//! with nonnegative weights whose reduced quadrature reproduces the
//! full-quadrature internal-force integrals of the training states.
//!
//! Greedy point selection by correlation with the current residual, with a
//! nonnegative least-squares re-solve over the selected points after each
//! addition.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Nonnegative least squares by the active-set method of Lawson and Hanson.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0);

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        if cols.is_empty() {
            return DVector::zeros(n);
        }
        let sub = a.select_columns(cols.iter());
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(cols.len()));
        let mut z = DVector::<f64>::zeros(n);
        for (k, &j) in cols.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };

    for _outer in 0..(4 * n.max(8)) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j_new) = candidate else { break };
        if w[j_new] <= tol {
            break;
        }
        passive[j_new] = true;

        loop {
            let z = solve_passive(&passive);
            let violators: Vec<usize> = (0..n).filter(|&j| passive[j] && z[j] <= 0.0).collect();
            if violators.is_empty() {
                x = z;
                break;
            }
            // Step toward z until the first passive component hits zero.
            let mut alpha = f64::INFINITY;
            for &j in &violators {
                let denom = x[j] - z[j];
                if denom > 0.0 {
                    alpha = alpha.min(x[j] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for j in 0..n {
                if passive[j] {
                    x[j] = (x[j] + alpha * (z[j] - x[j])).max(0.0);
                }
            }
            for j in 0..n {
                if passive[j] && x[j] <= 1e-15 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    x
}

/// A reduced quadrature scheme: selected integration points and their
/// positive weights.
#[derive(Clone, Debug)]
pub struct ReducedQuadrature {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Relative residual achieved on the training integrals.
    pub residual: f64,
    /// False when the greedy selection stagnated before reaching the
    /// tolerance.
    pub converged: bool,
}

impl ReducedQuadrature {
    /// Full quadrature (every point, original weights); useful as an exact
    /// reference scheme.
    pub fn full(weights: &[f64]) -> Self {
        ReducedQuadrature {
            indices: (0..weights.len()).collect(),
            weights: weights.to_vec(),
            residual: 0.0,
            converged: true,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Runs the greedy ECM selection.
///
/// `integrands` has one row per training integrand (internal-force
/// integrand of one snapshot state against one mode) and one column per
/// integration point; `full_weights` are the mesh quadrature weights. The
/// target integrals are `b = integrands · w`.
pub fn ecm_quadrature(
    integrands: &DMatrix<f64>,
    full_weights: &[f64],
    tol: f64,
) -> Result<ReducedQuadrature> {
    let n_ips = integrands.ncols();
    if n_ips != full_weights.len() {
        return Err(Error::InvalidInput(
            "integrand columns do not match quadrature weights".into(),
        ));
    }
    let w_full = DVector::from_column_slice(full_weights);
    let b = integrands * &w_full;
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Err(Error::InvalidInput(
            "all training integrals vanish; nothing to compress".into(),
        ));
    }

    let column_norms: Vec<f64> = (0..n_ips).map(|p| integrands.column(p).norm()).collect();
    let mut selected: Vec<usize> = Vec::new();
    let mut in_set = vec![false; n_ips];
    let mut residual = b.clone();
    let mut rel = 1.0;
    let mut weights = DVector::<f64>::zeros(0);
    let mut history: Vec<f64> = vec![rel];

    while rel > tol && selected.len() < n_ips {
        // Candidate with maximal correlation against the residual.
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for p in 0..n_ips {
            if in_set[p] || column_norms[p] == 0.0 {
                continue;
            }
            let score = integrands.column(p).dot(&residual) / column_norms[p];
            if score > best_score {
                best_score = score;
                best = Some(p);
            }
        }
        let Some(p_new) = best else { break };
        selected.push(p_new);
        in_set[p_new] = true;

        let sub = integrands.select_columns(selected.iter());
        weights = nnls(&sub, &b);
        residual = &b - &sub * &weights;
        rel = residual.norm() / b_norm;
        history.push(rel);

        // Stagnation guard: three additions without measurable progress.
        if history.len() >= 4 {
            let recent = &history[history.len() - 4..];
            if recent[0] - recent[3] < 1e-12 {
                let (indices, weights) = compact(&selected, &weights);
                log::warn!(
                    "ECM stagnated at relative residual {rel:.3e} with {} points",
                    indices.len()
                );
                return Ok(ReducedQuadrature {
                    indices,
                    weights,
                    residual: rel,
                    converged: false,
                });
            }
        }
    }

    let (indices, weights) = compact(&selected, &weights);
    Ok(ReducedQuadrature {
        indices,
        weights,
        residual: rel,
        converged: rel <= tol,
    })
}

/// Drops zero-weight points and orders the scheme by point index.
fn compact(selected: &[usize], weights: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut pairs: Vec<(usize, f64)> = selected
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(&p, &w)| (p, w))
        .collect();
    pairs.sort_by_key(|&(p, _)| p);
    pairs.into_iter().unzip()
}
