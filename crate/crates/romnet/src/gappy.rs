//! Reconstruction of full dual fields from their values on the
//! reduced-integration domain.
//!
//! Two routes are provided: the classical Gappy-POD least squares against
//! the dual POD basis restricted to the reduced points, and a learned
//! linear map (multi-task Lasso with an L2,1 row penalty, fitted by block
//! coordinate descent with the regularization strength chosen by
//! cross-validation).

use crate::error::{Error, Result};
use crate::pod::ReducedBasis;
use nalgebra::{DMatrix, DVector};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Least-squares coefficients of a field known only at the reduced points.
///
/// `basis_at_rid` has one row per reduced point and one column per mode.
/// Rank-deficient systems fall back to the minimum-norm solution.
pub fn gappy_pod(rid_values: &[f64], basis_at_rid: &DMatrix<f64>) -> Result<Vec<f64>> {
    if rid_values.len() != basis_at_rid.nrows() {
        return Err(Error::InvalidInput(
            "reduced-point values do not match the restricted basis".into(),
        ));
    }
    let b = DVector::from_column_slice(rid_values);
    let svd = basis_at_rid.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let eps = 1e-12 * max_sv.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if rank < basis_at_rid.ncols() {
        log::warn!(
            "gappy basis is rank deficient on the reduced points ({rank} of {}); using the minimum-norm solution",
            basis_at_rid.ncols()
        );
    }
    let sol = svd
        .solve(&b, eps)
        .map_err(|e| Error::Linalg(format!("gappy least squares failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

/// Linear reduced-point-to-coefficients map learned by multi-task Lasso.
#[derive(Clone, Debug)]
pub struct GappySurrogate {
    /// Weight matrix, one row per reduced point, one column per POD mode.
    pub weights: DMatrix<f64>,
    pub intercept: DVector<f64>,
    pub lambda: f64,
    /// Mean cross-validated coefficient of determination over the modes.
    pub cv_r2: f64,
    /// Fraction of reduced points with a nonzero weight row.
    pub active_fraction: f64,
}

impl GappySurrogate {
    /// POD coefficients predicted from reduced-point values.
    pub fn predict(&self, rid_values: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(rid_values);
        (self.weights.transpose() * x + &self.intercept)
            .iter()
            .copied()
            .collect()
    }
}

/// Reconstructs a full dual field from reduced-point values.
pub fn reconstruct_dual(
    rid_values: &[f64],
    surrogate: &GappySurrogate,
    basis: &ReducedBasis,
) -> Vec<f64> {
    basis.reconstruct(&surrogate.predict(rid_values))
}

struct Standardized {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    x_mean: DVector<f64>,
    x_std: DVector<f64>,
    y_mean: DVector<f64>,
}

fn standardize(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let x_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let x_std = DVector::from_iterator(
        x.ncols(),
        x.column_iter().enumerate().map(|(j, c)| {
            let var = c.iter().map(|v| (v - x_mean[j]).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std > 0.0 {
                std
            } else {
                1.0
            }
        }),
    );
    let xs = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (x[(i, j)] - x_mean[j]) / x_std[j]
    });
    let y_mean = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.mean()));
    let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, t| y[(i, t)] - y_mean[t]);
    Standardized {
        x: xs,
        y: yc,
        x_mean,
        x_std,
        y_mean,
    }
}

/// Multi-task Lasso objective `(1/2n)‖Y − XW‖_F² + λ Σ_j ‖W_j‖₂` on
/// standardized data, minimized by block coordinate descent over the input
/// rows. Returns the weights and the per-sweep objective history.
pub fn multi_task_lasso_path(
    xs: &DMatrix<f64>,
    yc: &DMatrix<f64>,
    lambda: f64,
    max_sweeps: usize,
    tol: f64,
) -> (DMatrix<f64>, Vec<f64>) {
    let n = xs.nrows();
    let p = xs.ncols();
    let t = yc.ncols();
    let nf = n as f64;
    let mut w = DMatrix::<f64>::zeros(p, t);
    let mut residual = yc.clone();
    // Column scales a_j = ‖x_j‖²/n (1 for standardized non-constant inputs).
    let a: Vec<f64> = (0..p)
        .map(|j| xs.column(j).dot(&xs.column(j)) / nf)
        .collect();

    let objective = |w: &DMatrix<f64>, residual: &DMatrix<f64>| {
        let fit = residual.iter().map(|v| v * v).sum::<f64>() / (2.0 * nf);
        let penalty: f64 = (0..p).map(|j| w.row(j).norm()).sum();
        fit + lambda * penalty
    };

    let mut history = vec![objective(&w, &residual)];
    for _sweep in 0..max_sweeps {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            if a[j] == 0.0 {
                continue;
            }
            let old = w.row(j).clone_owned();
            // Partial residual including this block's contribution.
            let z = {
                let mut z = DVector::<f64>::zeros(t);
                for task in 0..t {
                    z[task] = xs.column(j).dot(&residual.column(task)) / nf + a[j] * old[task];
                }
                z
            };
            let z_norm = z.norm();
            let shrink = if z_norm > lambda {
                (1.0 - lambda / z_norm) / a[j]
            } else {
                0.0
            };
            let new = z.transpose() * shrink;
            let delta = &new - &old;
            if delta.norm() > 0.0 {
                for task in 0..t {
                    w[(j, task)] = new[task];
                }
                // residual -= x_j ⊗ delta
                for task in 0..t {
                    let d = delta[task];
                    if d != 0.0 {
                        for i in 0..n {
                            residual[(i, task)] -= xs[(i, j)] * d;
                        }
                    }
                }
                max_change = max_change.max(delta.norm());
            }
        }
        history.push(objective(&w, &residual));
        let scale = w.norm().max(1e-12);
        if max_change <= tol * scale {
            break;
        }
    }
    (w, history)
}

/// Smallest λ that zeroes every weight row.
pub fn lasso_lambda_max(xs: &DMatrix<f64>, yc: &DMatrix<f64>) -> f64 {
    let n = xs.nrows() as f64;
    (0..xs.ncols())
        .map(|j| {
            let z: f64 = (0..yc.ncols())
                .map(|t| (xs.column(j).dot(&yc.column(t)) / n).powi(2))
                .sum::<f64>()
                .sqrt();
            z
        })
        .fold(0.0, f64::max)
}

fn fit_at_lambda(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
    let std = standardize(x, y);
    let (w_std, _) = multi_task_lasso_path(&std.x, &std.y, lambda, 10_000, 1e-10);
    // Back to original units.
    let p = x.ncols();
    let t = y.ncols();
    let mut w = DMatrix::<f64>::zeros(p, t);
    for j in 0..p {
        for task in 0..t {
            w[(j, task)] = w_std[(j, task)] / std.x_std[j];
        }
    }
    let mut intercept = std.y_mean.clone();
    for task in 0..t {
        for j in 0..p {
            intercept[task] -= w[(j, task)] * std.x_mean[j];
        }
    }
    (w, intercept)
}

/// Mean coefficient of determination over tasks.
fn r2_score(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> f64 {
    let t = y_true.ncols();
    let mut total = 0.0;
    for task in 0..t {
        let mean = y_true.column(task).mean();
        let ss_tot: f64 = y_true.column(task).iter().map(|v| (v - mean).powi(2)).sum();
        let ss_res: f64 = y_true
            .column(task)
            .iter()
            .zip(y_pred.column(task).iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        total += if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    }
    total / t as f64
}

/// Trains the Gappy surrogate: 30-point logarithmic λ path from λ_max down
/// to 1e-4·λ_max, scored by k-fold cross-validated mean R² over the modes.
pub fn train_gappy_surrogate(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    folds: usize,
    seed: u64,
) -> Result<GappySurrogate> {
    let n = x.nrows();
    if n != y.nrows() {
        return Err(Error::InvalidInput("X and Y sample counts differ".into()));
    }
    if n < folds || folds < 2 {
        return Err(Error::InvalidInput(format!(
            "{n} samples cannot be split into {folds} folds"
        )));
    }

    let std_all = standardize(x, y);
    let lambda_max = lasso_lambda_max(&std_all.x, &std_all.y);
    if lambda_max == 0.0 {
        // Constant targets: zero weights, intercept carries the means.
        let (w, intercept) = fit_at_lambda(x, y, 1.0);
        return Ok(GappySurrogate {
            weights: w,
            intercept,
            lambda: 0.0,
            cv_r2: 0.0,
            active_fraction: 0.0,
        });
    }
    let n_grid = 30;
    let lambdas: Vec<f64> = (0..n_grid)
        .map(|k| lambda_max * 1e-4_f64.powf(k as f64 / (n_grid - 1) as f64))
        .collect();

    // Deterministic shuffled fold assignment.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (rank, &i) in order.iter().enumerate() {
            f[i] = rank % folds;
        }
        f
    };

    let take_rows = |m: &DMatrix<f64>, keep: &dyn Fn(usize) -> bool| {
        let rows: Vec<usize> = (0..n).filter(|&i| keep(i)).collect();
        m.select_rows(rows.iter())
    };

    let mut means = Vec::with_capacity(lambdas.len());
    let mut std_errors = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let mut fold_scores = Vec::with_capacity(folds);
        for fold in 0..folds {
            let x_train = take_rows(x, &|i| fold_of[i] != fold);
            let y_train = take_rows(y, &|i| fold_of[i] != fold);
            let x_val = take_rows(x, &|i| fold_of[i] == fold);
            let y_val = take_rows(y, &|i| fold_of[i] == fold);
            let (w, intercept) = fit_at_lambda(&x_train, &y_train, lambda);
            let mut pred = &x_val * &w;
            for task in 0..pred.ncols() {
                for i in 0..pred.nrows() {
                    pred[(i, task)] += intercept[task];
                }
            }
            fold_scores.push(r2_score(&y_val, &pred));
        }
        let mean = fold_scores.iter().sum::<f64>() / folds as f64;
        let var = fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (folds - 1) as f64;
        means.push(mean);
        std_errors.push((var / folds as f64).sqrt());
    }
    // One-standard-error rule: the strongest regularization whose mean CV
    // score stays within one standard error of the best.
    let best_idx = (0..lambdas.len())
        .max_by(|&a, &b| means[a].total_cmp(&means[b]))
        .unwrap();
    let threshold = means[best_idx] - std_errors[best_idx];
    let chosen_idx = (0..lambdas.len())
        .find(|&k| means[k] >= threshold)
        .unwrap_or(best_idx);
    let best = (means[chosen_idx], lambdas[chosen_idx]);

    let (weights, intercept) = fit_at_lambda(x, y, best.1);
    let active_rows = (0..weights.nrows())
        .filter(|&j| weights.row(j).iter().any(|&v| v != 0.0))
        .count();
    Ok(GappySurrogate {
        active_fraction: active_rows as f64 / weights.nrows() as f64,
        weights,
        intercept,
        lambda: best.1,
        cv_r2: best.0,
    })
}
