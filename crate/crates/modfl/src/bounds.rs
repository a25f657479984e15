//! Closed-form analysis: the gradient-variance decomposition, its uniform
//! bound, the convergence bound for the averaged iterate, and the
//! Cramer-Rao reconstruction lower bounds with their Fisher-information
//! components.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Dataset, ProtocolParams};

/// The three data-dependent scalars (plus sizes and parameters) that the
/// single-vector gradient-variance formula consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceInputs {
    /// `S_r^2 = (1/K) ||X beta - Y||^2`.
    pub residual_ms: f64,
    /// `(1/K) beta^T X^T r` with `r = X beta - Y`.
    pub beta_sigma_rx: f64,
    /// `tr(Sigma_x) = (1/K) ||X||_F^2`.
    pub trace_sigma_x: f64,
    pub beta_norm_sq: f64,
    pub clients: usize,
    pub dim: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub sigma_dp: f64,
}

impl VarianceInputs {
    /// Evaluate the three scalars on fixed data.
    pub fn from_data(data: &Dataset, beta: &DVector<f64>, params: &ProtocolParams, sigma_dp: f64) -> Result<Self> {
        if beta.len() != data.dim() {
            return Err(Error::DimensionMismatch("model and data disagree on dimension".into()));
        }
        let k = data.n_clients() as f64;
        let r = data.x() * beta - data.y();
        let residual_ms = r.norm_squared() / k;
        let beta_sigma_rx = beta.dot(&(data.x().transpose() * &r)) / k;
        let trace_sigma_x = data.x().iter().map(|v| v * v).sum::<f64>() / k;
        Ok(Self {
            residual_ms,
            beta_sigma_rx,
            trace_sigma_x,
            beta_norm_sq: beta.norm_squared(),
            clients: data.n_clients(),
            dim: data.dim(),
            alpha: params.alpha,
            lambda: params.lambda,
            sigma_dp,
        })
    }
}

/// Exact variance of the single-vector gradient estimate around the
/// centralized gradient, assuming the modulation direction is orthogonal to
/// the model:
///
/// ```text
/// sigma_g^2 = [S_r^2 (lambda^2/2 + d s^2) + 2 s^2 beta'Sigma_rx + s^2 ||beta||^2 tr(Sigma_x)]
///             / (K (1-alpha)^2)
///           + ||beta||^2 (lambda^2 s^2 / 2 + (d+1) s^4) / (K (1-alpha)^4)
/// ```
///
/// with `s = sigma_dp`. Only the m = 1 map has this closed form; multi-vector
/// runs report empirical variance instead.
pub fn gradient_variance(inputs: &VarianceInputs) -> f64 {
    let k = inputs.clients as f64;
    let d = inputs.dim as f64;
    let s2 = inputs.sigma_dp * inputs.sigma_dp;
    let s4 = s2 * s2;
    let lam2 = inputs.lambda * inputs.lambda;
    let shrink2 = (1.0 - inputs.alpha) * (1.0 - inputs.alpha);

    let block1 = inputs.residual_ms * (lam2 / 2.0 + d * s2)
        + 2.0 * s2 * inputs.beta_sigma_rx
        + s2 * inputs.beta_norm_sq * inputs.trace_sigma_x;
    let block3 = inputs.beta_norm_sq * (lam2 * s2 / 2.0 + (d + 1.0) * s4);

    block1 / (k * shrink2) + block3 / (k * shrink2 * shrink2)
}

/// Worst-case envelope constants: `||beta|| <= B`, `||x_i|| <= R`, `|y_i| <= M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub beta_bound: f64,
    pub feature_bound: f64,
    pub response_bound: f64,
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_bound > 0.0 && self.feature_bound > 0.0 && self.response_bound > 0.0) {
            return Err(Error::InvalidParameter("envelope constants must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform variance bound over every admissible `(beta, X, Y)`:
/// substitutes `S_r <= RB + M`, `|beta'Sigma_rx| <= BR(RB+M)`,
/// `tr(Sigma_x) <= R^2` into [`gradient_variance`].
pub fn uniform_variance_bound(
    consts: &BoundConstants,
    params: &ProtocolParams,
    sigma_dp: f64,
    clients: usize,
    dim: usize,
) -> Result<f64> {
    consts.validate()?;
    let (b, r, m) = (consts.beta_bound, consts.feature_bound, consts.response_bound);
    let k = clients as f64;
    let d = dim as f64;
    let s2 = sigma_dp * sigma_dp;
    let s4 = s2 * s2;
    let lam2 = params.lambda * params.lambda;
    let shrink2 = (1.0 - params.alpha) * (1.0 - params.alpha);
    let rbm = r * b + m;

    let block1 = rbm * rbm * (lam2 / 2.0 + d * s2) + 2.0 * s2 * b * r * rbm + s2 * b * b * r * r;
    let block3 = b * b * (lam2 * s2 / 2.0 + (d + 1.0) * s4);
    Ok(block1 / (k * shrink2) + block3 / (k * shrink2 * shrink2))
}

/// Expected excess risk of the averaged iterate after `rounds` projected
/// steps at step size `1 / l_dp`:
/// `l_dp ||beta_0 - beta*||^2 / (2T) + sigma_bar_sq / (2 l_dp K)`.
pub fn convergence_bound(l_dp: f64, beta0_dist_sq: f64, rounds: usize, sigma_bar_sq: f64, clients: usize) -> Result<f64> {
    if !(l_dp > 0.0 && l_dp.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothness constant must be positive, got {l_dp}")));
    }
    if rounds == 0 {
        return Err(Error::InvalidParameter("round count must be at least 1".into()));
    }
    if beta0_dist_sq < 0.0 || sigma_bar_sq < 0.0 {
        return Err(Error::InvalidParameter("squared quantities must be non-negative".into()));
    }
    Ok(l_dp * beta0_dist_sq / (2.0 * rounds as f64) + sigma_bar_sq / (2.0 * l_dp * clients as f64))
}

/// Everything an attacker is assumed to know when reconstructing a client's
/// feature vector from its transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionContext {
    pub alpha: f64,
    pub lambda: f64,
    pub omega: f64,
    pub sigma_dp: f64,
    /// Response noise level in the generative model `y = <x, beta*> + eps`.
    pub sigma_y: f64,
    pub beta_star: DVector<f64>,
}

impl ReconstructionContext {
    fn validate(&self) -> Result<()> {
        if !(self.sigma_dp > 0.0 && self.sigma_dp.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_dp must be positive, got {}", self.sigma_dp)));
        }
        if !(self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_y must be positive, got {}", self.sigma_y)));
        }
        Ok(())
    }
}

/// The rank-one curvature coefficient of the client map's Jacobian Gram
/// matrix: `c_1 = -2 lambda omega (1-alpha) sin(theta) + lambda^2 omega^2 sin^2(theta)`
/// at `theta = omega <x, v> + phi`.
pub fn modulation_curvature(theta: f64, alpha: f64, lambda: f64, omega: f64) -> f64 {
    let s = theta.sin();
    -2.0 * lambda * omega * (1.0 - alpha) * s + lambda * lambda * omega * omega * s * s
}

/// Total Fisher information about a client's feature vector carried by its
/// transmission `(g_tilde, y)` at a fixed phase:
/// `(1/sigma_dp^2) [(1-alpha)^2 I + c_1 v v^T] + beta* beta*^T / sigma_y^2`.
pub fn fisher_information(
    ctx: &ReconstructionContext,
    x: &DVector<f64>,
    v: &DVector<f64>,
    phi: f64,
) -> Result<DMatrix<f64>> {
    ctx.validate()?;
    let d = x.len();
    if v.len() != d || ctx.beta_star.len() != d {
        return Err(Error::DimensionMismatch("reconstruction inputs disagree on dimension".into()));
    }
    if (v.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter("modulation direction must be a unit vector".into()));
    }
    let theta = ctx.omega * x.dot(v) + phi;
    let c1 = modulation_curvature(theta, ctx.alpha, ctx.lambda, ctx.omega);
    let shrink2 = (1.0 - ctx.alpha) * (1.0 - ctx.alpha);
    let s2 = ctx.sigma_dp * ctx.sigma_dp;

    let mut info = DMatrix::identity(d, d) * (shrink2 / s2);
    info.ger(c1 / s2, v, v, 1.0);
    info.ger(1.0 / (ctx.sigma_y * ctx.sigma_y), &ctx.beta_star, &ctx.beta_star, 1.0);
    Ok(info)
}

/// Conditional per-dimension reconstruction lower bound at a fixed phase:
///
/// ```text
/// (1/d) E||x_hat - x||^2 >= 1 / [ (1/sigma_dp^2)((1-alpha)^2 + c_1/d) + ||beta*||^2 / (d sigma_y^2) ]
/// ```
pub fn crb_conditional(ctx: &ReconstructionContext, x: &DVector<f64>, v: &DVector<f64>, phi: f64) -> Result<f64> {
    ctx.validate()?;
    let d = x.len() as f64;
    if v.len() != x.len() || ctx.beta_star.len() != x.len() {
        return Err(Error::DimensionMismatch("reconstruction inputs disagree on dimension".into()));
    }
    let theta = ctx.omega * x.dot(v) + phi;
    let c1 = modulation_curvature(theta, ctx.alpha, ctx.lambda, ctx.omega);
    let shrink2 = (1.0 - ctx.alpha) * (1.0 - ctx.alpha);
    let s2 = ctx.sigma_dp * ctx.sigma_dp;
    let denom = (shrink2 + c1 / d) / s2 + ctx.beta_star.norm_squared() / (d * ctx.sigma_y * ctx.sigma_y);
    if !(denom > 0.0) {
        return Err(Error::Degenerate(format!("information denominator {denom} is not positive")));
    }
    Ok(1.0 / denom)
}

/// Phase-averaged reconstruction lower bound, using `E_phi[c_1] = lambda^2 omega^2 / 2`:
///
/// ```text
/// 1 / [ (1-alpha)^2 / sigma_dp^2 + lambda^2 omega^2 / (2 d sigma_dp^2) + ||beta*||^2 / (d sigma_y^2) ]
/// ```
pub fn crb_phase_averaged(ctx: &ReconstructionContext, dim: usize) -> Result<f64> {
    ctx.validate()?;
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let d = dim as f64;
    let shrink2 = (1.0 - ctx.alpha) * (1.0 - ctx.alpha);
    let s2 = ctx.sigma_dp * ctx.sigma_dp;
    let lw = ctx.lambda * ctx.omega;
    let denom = shrink2 / s2 + lw * lw / (2.0 * d * s2) + ctx.beta_star.norm_squared() / (d * ctx.sigma_y * ctx.sigma_y);
    if !(denom > 0.0) {
        return Err(Error::Degenerate(format!("information denominator {denom} is not positive")));
    }
    Ok(1.0 / denom)
}
