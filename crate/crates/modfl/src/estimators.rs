//! Non-iterative one-shot estimator, the OLS reference, the DP-SGD FedAvg
//! baseline, and the R-squared utility metric.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{ClientPayload, Dataset, ModelState, OrthonormalSet, ProtocolParams};
use crate::protocol::{aggregate_second_moment, debias_covariance, debias_cross_moment};
use crate::rng::{Purpose, RngStream};

/// Result of the single-release moment estimator.
#[derive(Debug, Clone)]
pub struct OneShotResult {
    /// Debiased cross moment `gamma_hat = (1/(1-alpha)) (1/K) sum y_i h_i`.
    pub gamma_hat: DVector<f64>,
    pub sigma_x_hat: DMatrix<f64>,
    /// Solution of `(sigma_x_hat + gamma I) beta = gamma_hat`.
    pub beta_hat: DVector<f64>,
    pub ridge_gamma: f64,
    /// The direct factorization failed and a least-squares solve was used
    /// instead; the linear-system residual guarantee does not apply.
    pub used_least_squares: bool,
    /// Fewer payloads than dimensions; the system is underdetermined.
    pub underdetermined: bool,
}

/// Estimate the model from a single round of privatized payloads.
///
/// The cross moment is debiased exactly like the iterative path's `z`, the
/// covariance comes from the same correction, and the model solves the
/// ridge-stabilized system `(sigma_x_hat + gamma I) beta = gamma_hat`.
pub fn one_shot_estimate(
    payloads: &[ClientPayload],
    set: &OrthonormalSet,
    params: &ProtocolParams,
    sigma_dp: f64,
    ridge_gamma: f64,
) -> Result<OneShotResult> {
    if !(ridge_gamma >= 0.0 && ridge_gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge parameter must be finite and >= 0, got {ridge_gamma}")));
    }
    let gamma_hat = debias_cross_moment(payloads, params)?;
    let sigma_g = aggregate_second_moment(payloads)?;
    let sigma_x_hat = debias_covariance(&sigma_g, set, params, sigma_dp)?;
    let d = sigma_x_hat.nrows();

    let mut system = sigma_x_hat.clone();
    for i in 0..d {
        system[(i, i)] += ridge_gamma;
    }

    let solved = solve_symmetric(&system, &gamma_hat);
    let tol = 1e-8 * f64::max(1.0, gamma_hat.norm());
    let (beta_hat, used_least_squares) = match solved {
        Some(beta) if (&system * &beta - &gamma_hat).norm() <= tol => (beta, false),
        _ => {
            if ridge_gamma == 0.0 {
                return Err(Error::Degenerate(
                    "debiased covariance is singular or ill-conditioned; supply ridge_gamma > 0".into(),
                ));
            }
            let svd = system.clone().svd(true, true);
            let beta = svd
                .solve(&gamma_hat, 1e-12)
                .map_err(|e| Error::Degenerate(format!("least-squares fallback failed: {e}")))?;
            (beta, true)
        }
    };

    Ok(OneShotResult {
        gamma_hat,
        sigma_x_hat,
        beta_hat,
        ridge_gamma,
        used_least_squares,
        underdetermined: payloads.len() < d,
    })
}

/// Solve a symmetric (possibly indefinite) system: Cholesky when positive
/// definite, LU otherwise.
fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(b));
    }
    a.clone().lu().solve(b)
}

/// Ordinary least squares through a thin QR factorization.
pub fn ols(data: &Dataset) -> Result<DVector<f64>> {
    let x = data.x();
    let (k, d) = x.shape();
    if k < d {
        return Err(Error::Degenerate(format!(
            "need at least as many rows as columns for full column rank ({k} x {d})"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..d).any(|i| r[(i, i)].abs() <= 1e-12 * max_diag.max(1e-300)) {
        return Err(Error::Degenerate("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * data.y();
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Degenerate("triangular solve failed".into()))
}

/// One DP-SGD FedAvg round: every client takes a single clipped,
/// Gaussian-perturbed gradient step on its one sample and the server averages.
///
/// The per-client gradient of the squared loss is `(x^T beta - y) x`, clipped
/// to norm `clip_c`; noise is calibrated elsewhere from sensitivity `2 clip_c`.
pub fn dpsgd_fedavg_round(
    state: &ModelState,
    data: &Dataset,
    clip_c: f64,
    lr: f64,
    sigma_dp: f64,
    streams: &RngStream,
) -> Result<ModelState> {
    if !(clip_c > 0.0) {
        return Err(Error::InvalidParameter(format!("clipping norm must be positive, got {clip_c}")));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate must be positive, got {lr}")));
    }
    let d = data.dim();
    if state.beta.len() != d {
        return Err(Error::DimensionMismatch("model and data disagree on dimension".into()));
    }
    let k = data.n_clients();
    let xt = data.x().transpose();
    let mut x_i = DVector::zeros(d);
    let mut sum = DVector::zeros(d);
    for i in 0..k {
        x_i.copy_from(&xt.column(i));
        let residual = x_i.dot(&state.beta) - data.y()[i];
        let mut grad = &x_i * residual;
        let norm = grad.norm();
        if norm > clip_c {
            grad *= clip_c / norm;
        }
        let mut rng = streams.derive(Purpose::DpSgd, state.round as u64, i as u64);
        for g in grad.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *g += sigma_dp * z;
        }
        sum += grad;
    }
    let beta = &state.beta - (sum / k as f64) * lr;
    Ok(ModelState { beta, round: state.round + 1 })
}

/// Coefficient of determination `1 - SS_res / SS_tot` of the linear predictor
/// on a held-out dataset. Worse-than-mean predictors yield negative values.
pub fn r_squared(beta: &DVector<f64>, test: &Dataset) -> Result<f64> {
    if test.n_clients() < 2 {
        return Err(Error::InsufficientData("need at least two evaluation rows".into()));
    }
    if beta.len() != test.dim() {
        return Err(Error::DimensionMismatch("model and data disagree on dimension".into()));
    }
    let pred = test.x() * beta;
    let y = test.y();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(pred.iter()).map(|(yi, pi)| (yi - pi) * (yi - pi)).sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - mean) * (yi - mean)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Degenerate("evaluation target has zero variance".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean squared-loss objective `(1/2K) ||X beta - Y||^2`.
pub fn least_squares_objective(beta: &DVector<f64>, data: &Dataset) -> f64 {
    let r = data.x() * beta - data.y();
    r.norm_squared() / (2.0 * data.n_clients() as f64)
}
