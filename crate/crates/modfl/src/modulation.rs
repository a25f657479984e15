//! The client-side map: noise-free modulated transform, its privatized form,
//! and the sensitivity constants that drive noise calibration.
//!
//! For an orthonormal set V = {v_1, ..., v_m}, phases phi and input x the
//! noise-free map is
//!
//! ```text
//! g(x) = (1 - alpha) x + (lambda / sqrt(m)) * sum_j cos(omega <x, v_j> + phi_j) v_j
//! ```
//!
//! and the privatized transmission adds N(0, sigma_dp^2 I) on top. At m = 1
//! this reduces to the single-vector map, and the dedicated single-vector
//! entry points below produce bit-identical output given the same stream.

use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{OrthonormalSet, ProtocolParams};

/// Client-sampled phase vector, one entry per modulation vector, each in
/// [0, 2*pi).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(phis: Vec<f64>) -> Result<Self> {
        if phis.is_empty() {
            return Err(Error::InvalidParameter("phase vector must be non-empty".into()));
        }
        if phis.iter().any(|p| !(0.0..TAU).contains(p)) {
            return Err(Error::InvalidParameter("phases must lie in [0, 2*pi)".into()));
        }
        Ok(Self(phis))
    }

    /// Draw `count` i.i.d. uniform phases.
    pub fn sample(count: usize, rng: &mut impl Rng) -> Self {
        Self((0..count).map(|_| rng.gen_range(0.0..TAU)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(x: &DVector<f64>, set: &OrthonormalSet, phases: &[f64], params: &ProtocolParams) -> Result<()> {
    if x.len() != set.dim() {
        return Err(Error::DimensionMismatch(format!(
            "input has length {} but modulation set lives in dimension {}",
            x.len(),
            set.dim()
        )));
    }
    if set.count() != params.vectors || phases.len() != params.vectors {
        return Err(Error::DimensionMismatch(format!(
            "expected {} modulation vectors and phases, got {} vectors / {} phases",
            params.vectors,
            set.count(),
            phases.len()
        )));
    }
    Ok(())
}

/// Noise-free modulated transform.
pub fn modulate(
    x: &DVector<f64>,
    set: &OrthonormalSet,
    phases: &PhaseVector,
    params: &ProtocolParams,
) -> Result<DVector<f64>> {
    check_dims(x, set, phases.as_slice(), params)?;
    let mut out = DVector::zeros(x.len());
    modulate_into(&mut out, x, set, phases.as_slice(), params);
    Ok(out)
}

/// Allocation-free core of [`modulate`]; dimensions must already agree.
pub fn modulate_into(
    out: &mut DVector<f64>,
    x: &DVector<f64>,
    set: &OrthonormalSet,
    phases: &[f64],
    params: &ProtocolParams,
) {
    out.copy_from(x);
    *out *= 1.0 - params.alpha;
    let scale = params.lambda / (params.vectors as f64).sqrt();
    for (j, &phi) in phases.iter().enumerate() {
        let v = set.basis().column(j);
        let theta = params.omega * x.dot(&v) + phi;
        out.axpy(scale * theta.cos(), &v, 1.0);
    }
}

/// Dedicated single-vector transform, `(1-alpha) x + lambda cos(omega <x,v> + phi) v`.
pub fn modulate_single(x: &DVector<f64>, v: &DVector<f64>, phi: f64, params: &ProtocolParams) -> DVector<f64> {
    let mut out = x * (1.0 - params.alpha);
    let theta = params.omega * x.dot(v) + phi;
    out.axpy(params.lambda * theta.cos(), v, 1.0);
    out
}

/// Global Lipschitz constant of the noise-free map: `|1 - alpha| + lambda * omega / sqrt(m)`.
///
/// Under the adjacency relation `||x - x'|| <= 1` this is the l2-sensitivity
/// used to calibrate the Gaussian mechanism.
pub fn lipschitz_constant(params: &ProtocolParams) -> f64 {
    (1.0 - params.alpha).abs() + params.lambda * params.omega / (params.vectors as f64).sqrt()
}

/// Privatized client output: fresh uniform phases, the modulated transform,
/// plus isotropic Gaussian noise of scale `sigma_dp`.
///
/// Phases are drawn before noise from the same per-(round, client) stream, so
/// the multi-vector path at m = 1 consumes draws exactly like
/// [`privatize_single`].
pub fn privatize(
    x: &DVector<f64>,
    set: &OrthonormalSet,
    params: &ProtocolParams,
    sigma_dp: f64,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(x.len());
    privatize_into(&mut out, x, set, params, sigma_dp, rng)?;
    Ok(out)
}

/// Allocation-free core of [`privatize`].
pub fn privatize_into(
    out: &mut DVector<f64>,
    x: &DVector<f64>,
    set: &OrthonormalSet,
    params: &ProtocolParams,
    sigma_dp: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    if sigma_dp < 0.0 || !sigma_dp.is_finite() {
        return Err(Error::InvalidParameter(format!("noise scale must be finite and >= 0, got {sigma_dp}")));
    }
    let scale = params.lambda / (params.vectors as f64).sqrt();
    out.copy_from(x);
    *out *= 1.0 - params.alpha;
    for j in 0..params.vectors {
        let v = set.basis().column(j);
        if v.len() != x.len() {
            return Err(Error::DimensionMismatch("modulation set does not match input dimension".into()));
        }
        let phi: f64 = rng.gen_range(0.0..TAU);
        let theta = params.omega * x.dot(&v) + phi;
        out.axpy(scale * theta.cos(), &v, 1.0);
    }
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o += sigma_dp * z;
    }
    Ok(())
}

/// Dedicated single-vector privatized output; same draw order as
/// [`privatize`] with m = 1.
pub fn privatize_single(
    x: &DVector<f64>,
    v: &DVector<f64>,
    params: &ProtocolParams,
    sigma_dp: f64,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let phi: f64 = rng.gen_range(0.0..TAU);
    let mut out = modulate_single(x, v, phi, params);
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o += sigma_dp * z;
    }
    out
}

/// Expected squared distance between the single-vector transforms of two
/// points under a uniform phase:
/// `(1-alpha)^2 ||x - x'||^2 + 2 lambda^2 sin^2(delta / 2)` with
/// `delta = omega <x - x', v>`.
pub fn expected_pair_distance_sq(
    x: &DVector<f64>,
    x_other: &DVector<f64>,
    v: &DVector<f64>,
    params: &ProtocolParams,
) -> Result<f64> {
    if params.vectors != 1 {
        return Err(Error::InvalidParameter("pair-distance formula applies to the single-vector map".into()));
    }
    if (v.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter("modulation direction must be a unit vector".into()));
    }
    if x.len() != x_other.len() || x.len() != v.len() {
        return Err(Error::DimensionMismatch("pair-distance inputs must share one dimension".into()));
    }
    let h = x - x_other;
    let delta = params.omega * h.dot(v);
    let half = (delta / 2.0).sin();
    Ok((1.0 - params.alpha).powi(2) * h.norm_squared() + 2.0 * params.lambda * params.lambda * half * half)
}
