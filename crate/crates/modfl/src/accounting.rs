//! Noise calibration, zCDP composition, budget conversions, and feature-norm
//! control.
//!
//! Two calibration paths exist. The (eps, delta) path sets
//! `sigma = L sqrt(2 ln(1.25/delta)) / eps` for a single release. The zCDP
//! path sets `sigma^2 = L^2 / (2 rho)` per release and composes additively
//! across rounds; a total budget expressed as epsilon is first converted to
//! rho by inverting `eps = rho + 2 sqrt(rho ln(1/delta))`. Multi-round runs
//! use the zCDP path. Within a round, distinct clients privatize distinct
//! inputs, so parallel composition applies and only the per-round rho enters
//! the ledger.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Gaussian-mechanism scale for a single (eps, delta)-DP release of an
/// l2-sensitivity-`l` query: `l * sqrt(2 ln(1.25/delta)) / eps`.
pub fn gaussian_sigma_for_eps_delta(l: f64, eps: f64, delta: f64) -> Result<f64> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("sensitivity must be positive, got {l}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(l * (2.0 * (1.25 / delta).ln()).sqrt() / eps)
}

/// Gaussian scale achieving rho-zCDP for an l2-sensitivity-`l` query:
/// `sigma^2 = l^2 / (2 rho)`.
pub fn gaussian_sigma_for_zcdp(l: f64, rho: f64) -> Result<f64> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("sensitivity must be positive, got {l}")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    Ok(l / (2.0 * rho).sqrt())
}

/// Sequential zCDP composition: the budgets simply add.
pub fn compose_zcdp(per_round_rhos: &[f64]) -> Result<f64> {
    if per_round_rhos.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter("per-round rho values must be positive".into()));
    }
    Ok(per_round_rhos.iter().sum())
}

/// Convert a total zCDP budget to approximate DP:
/// `eps = rho + 2 sqrt(rho ln(1/delta))`.
///
/// `delta = 1` is outside the admissible range but is accepted as the
/// boundary sanity case `eps = rho`.
pub fn zcdp_to_eps(rho: f64, delta: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

/// Total and per-round zCDP budget obtained by inverting [`zcdp_to_eps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoSplit {
    pub rho_total: f64,
    pub rho_per_round: f64,
}

/// Solve `rho + 2 sqrt(rho ln(1/delta)) = eps_total` for rho and split the
/// budget uniformly over `rounds` releases.
///
/// Substituting u = sqrt(rho) gives a quadratic with the unique positive
/// root `u = sqrt(ln(1/delta) + eps) - sqrt(ln(1/delta))`.
pub fn eps_budget_to_per_round_rho(eps_total: f64, delta: f64, rounds: usize) -> Result<RhoSplit> {
    if !(eps_total > 0.0 && eps_total.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon budget must be positive, got {eps_total}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    if rounds == 0 {
        return Err(Error::InvalidParameter("round count must be at least 1".into()));
    }
    let log_term = (1.0 / delta).ln();
    let u = (log_term + eps_total).sqrt() - log_term.sqrt();
    let rho_total = u * u;
    if !(rho_total > 0.0) {
        return Err(Error::Degenerate(format!(
            "no positive zCDP budget solves eps = {eps_total}, delta = {delta}"
        )));
    }
    Ok(RhoSplit { rho_total, rho_per_round: rho_total / rounds as f64 })
}

/// Trade-off function of (eps, delta)-DP: the attacker's minimal type-II
/// error at type-I level `alpha_type1`,
/// `f(a) = max(0, 1 - delta - e^eps a, e^-eps (1 - delta - a))`.
pub fn tradeoff_curve(eps: f64, delta: f64, alpha_type1: f64) -> Result<f64> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {eps}")));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta must lie in [0, 1], got {delta}")));
    }
    if !(0.0..=1.0).contains(&alpha_type1) {
        return Err(Error::InvalidParameter(format!("type-I level must lie in [0, 1], got {alpha_type1}")));
    }
    let a = 1.0 - delta - eps.exp() * alpha_type1;
    let b = (-eps).exp() * (1.0 - delta - alpha_type1);
    Ok(a.max(b).max(0.0))
}

/// DP-SGD per-round l2-sensitivity for gradients clipped to norm `clip_c`:
/// replacing one clipped gradient by another moves the sum by at most `2 clip_c`.
pub fn dpsgd_sensitivity(clip_c: f64) -> f64 {
    2.0 * clip_c
}

/// How feature rows are brought inside the unit ball before the protocol
/// runs, making the adjacency relation `||x - x'|| <= 1` meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Divide the whole matrix by the maximum row norm (default; preserves
    /// the covariance shape, records the factor for model-space inversion).
    GlobalMaxNorm,
    /// Project each row with norm above one onto the unit sphere (distorts
    /// the covariance; no global inverse).
    PerRow,
    /// Leave features as they are; the adjacency relation is taken at face
    /// value on the preprocessed data.
    None,
}

/// Rescale `data` by `1/s` globally, composing with any previous factor.
pub fn scale_features(data: &Dataset, s: f64) -> Result<Dataset> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale factor must be positive, got {s}")));
    }
    let mut out = Dataset::new(data.x() / s, data.y().clone())?;
    out.feature_scale = data.feature_scale.clone();
    out.target_scale = data.target_scale.clone();
    out.clip_scale = Some(data.clip_scale.unwrap_or(1.0) * s);
    Ok(out)
}

/// Bring every feature row inside the unit ball according to `mode`.
pub fn clip_features(data: &Dataset, mode: ClipMode) -> Result<Dataset> {
    match mode {
        ClipMode::None => Ok(data.clone()),
        ClipMode::GlobalMaxNorm => {
            let s = data.max_row_norm();
            if s <= 1.0 {
                Ok(data.clone())
            } else {
                scale_features(data, s)
            }
        }
        ClipMode::PerRow => {
            let mut x = data.x().clone();
            for i in 0..x.nrows() {
                let norm = x.row(i).norm();
                if norm > 1.0 {
                    let mut row = x.row_mut(i);
                    row /= norm;
                }
            }
            let mut out = Dataset::new(x, data.y().clone())?;
            out.feature_scale = data.feature_scale.clone();
            out.target_scale = data.target_scale.clone();
            out.clip_scale = data.clip_scale;
            Ok(out)
        }
    }
}

/// Map a model fitted on globally rescaled features back to the original
/// feature space.
pub fn beta_to_unclipped_space(beta: &DVector<f64>, clip_scale: Option<f64>) -> DVector<f64> {
    match clip_scale {
        Some(s) => beta / s,
        None => beta.clone(),
    }
}

/// How a run's privacy target is expressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetMode {
    /// Per-release (eps, delta) Gaussian-mechanism calibration.
    EpsDelta { eps: f64, delta: f64 },
    /// Total zCDP budget split uniformly across rounds; delta is used for
    /// reporting the converted epsilon.
    Zcdp { rho_total: f64, delta: f64 },
}

/// A calibrated privacy budget: the noise scale each release uses and the
/// per-release zCDP cost entering the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyBudget {
    pub mode: BudgetMode,
    pub rounds: usize,
    /// The l2-sensitivity bound the calibration used.
    pub sensitivity: f64,
    pub sigma_dp: f64,
    pub rho_per_round: f64,
}

impl PrivacyBudget {
    pub fn calibrate(mode: BudgetMode, rounds: usize, sensitivity: f64) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::InvalidParameter("round count must be at least 1".into()));
        }
        let (sigma_dp, rho_per_round) = match mode {
            BudgetMode::EpsDelta { eps, delta } => {
                let sigma = gaussian_sigma_for_eps_delta(sensitivity, eps, delta)?;
                let rho = sensitivity * sensitivity / (2.0 * sigma * sigma);
                (sigma, rho)
            }
            BudgetMode::Zcdp { rho_total, delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
                }
                let rho = rho_total / rounds as f64;
                let sigma = gaussian_sigma_for_zcdp(sensitivity, rho)?;
                (sigma, rho)
            }
        };
        if !(sigma_dp > 0.0 && sigma_dp.is_finite()) {
            return Err(Error::Degenerate(format!("calibration produced noise scale {sigma_dp}")));
        }
        Ok(Self { mode, rounds, sensitivity, sigma_dp, rho_per_round })
    }

    /// Calibrate a total epsilon budget through zCDP composition.
    pub fn from_eps_zcdp(eps_total: f64, delta: f64, rounds: usize, sensitivity: f64) -> Result<Self> {
        let split = eps_budget_to_per_round_rho(eps_total, delta, rounds)?;
        Self::calibrate(BudgetMode::Zcdp { rho_total: split.rho_total, delta }, rounds, sensitivity)
    }

    pub fn delta(&self) -> f64 {
        match self.mode {
            BudgetMode::EpsDelta { delta, .. } | BudgetMode::Zcdp { delta, .. } => delta,
        }
    }
}

/// Ledger of zCDP spent per release during one run.
#[derive(Debug, Clone)]
pub struct Accountant {
    delta: f64,
    declared_eps: Option<f64>,
    entries: Vec<f64>,
}

impl Accountant {
    pub fn new(delta: f64) -> Self {
        Self { delta, declared_eps: None, entries: Vec::new() }
    }

    /// Ledger that can be checked against a declared total epsilon.
    pub fn with_declared_eps(delta: f64, eps: f64) -> Self {
        Self { delta, declared_eps: Some(eps), entries: Vec::new() }
    }

    pub fn record(&mut self, rho: f64) {
        self.entries.push(rho);
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn total_rho(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Total spend converted to epsilon at the ledger's delta; zero if
    /// nothing was spent.
    pub fn converted_eps(&self) -> f64 {
        let rho = self.total_rho();
        if rho == 0.0 {
            0.0
        } else {
            zcdp_to_eps(rho, self.delta).unwrap_or(f64::INFINITY)
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn declared_eps(&self) -> Option<f64> {
        self.declared_eps
    }

    /// Verify the ledger stayed within the declared budget.
    pub fn check(&self) -> Result<()> {
        if let Some(declared) = self.declared_eps {
            let ledger = self.converted_eps();
            if ledger > declared + 1e-9 {
                return Err(Error::BudgetExceeded { ledger_eps: ledger, declared_eps: declared });
            }
        }
        Ok(())
    }
}
