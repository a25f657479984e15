//! Server side of the protocol: payload aggregation, algebraic debiasing,
//! unbiased gradient construction, the projected update, and round
//! orchestration.
//!
//! Each round the server receives `(g_tilde_i, y_i)` from every client, forms
//! the raw second moment, removes the known modulation and noise terms,
//!
//! ```text
//! sigma_x_hat = (sigma_g_tilde - (lambda^2 / 2m) P_V - sigma_dp^2 I) / (1 - alpha)^2
//! z           = (1 / (1 - alpha)) (1/K) sum_i y_i g_tilde_i
//! g           = sigma_x_hat beta - z
//! ```
//!
//! and takes a projected gradient step. `g` is an unbiased estimate of the
//! centralized least-squares gradient.

use nalgebra::{DMatrix, DVector};

use crate::accounting::{Accountant, PrivacyBudget};
use crate::error::{Error, Result};
use crate::model::{ClientPayload, Dataset, ModelState, OrthonormalSet, ProtocolParams, StepRule};
use crate::modulation::privatize_into;
use crate::rng::{Purpose, RngStream};

/// Streaming accumulator for the payload moments; aggregation order is the
/// client index order, so results are reproducible.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    outer: DMatrix<f64>,
    weighted: DVector<f64>,
    count: usize,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { outer: DMatrix::zeros(dim, dim), weighted: DVector::zeros(dim), count: 0 }
    }

    pub fn add(&mut self, g_tilde: &DVector<f64>, y: f64) {
        self.outer.ger(1.0, g_tilde, g_tilde, 1.0);
        self.weighted.axpy(y, g_tilde, 1.0);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(1/K) sum_i g_tilde_i g_tilde_i^T`, symmetrized.
    pub fn second_moment(&self) -> Result<DMatrix<f64>> {
        if self.count == 0 {
            return Err(Error::InsufficientData("no payloads aggregated".into()));
        }
        let mut m = &self.outer / self.count as f64;
        symmetrize(&mut m);
        Ok(m)
    }

    /// `(1/K) sum_i y_i g_tilde_i` (before the 1/(1-alpha) correction).
    pub fn raw_cross_moment(&self) -> Result<DVector<f64>> {
        if self.count == 0 {
            return Err(Error::InsufficientData("no payloads aggregated".into()));
        }
        Ok(&self.weighted / self.count as f64)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Raw second moment of the payload features, `(1/K) sum g g^T`.
pub fn aggregate_second_moment(payloads: &[ClientPayload]) -> Result<DMatrix<f64>> {
    let dim = payloads
        .first()
        .ok_or_else(|| Error::InsufficientData("no payloads aggregated".into()))?
        .g_tilde
        .len();
    let mut acc = MomentAccumulator::new(dim);
    for p in payloads {
        if p.g_tilde.len() != dim {
            return Err(Error::DimensionMismatch("payloads disagree on dimension".into()));
        }
        acc.add(&p.g_tilde, p.y);
    }
    acc.second_moment()
}

/// Remove the modulation and noise terms from the raw second moment and
/// rescale: an unbiased estimate of the feature covariance.
///
/// The result is left possibly indefinite; projecting it to the PSD cone
/// would bias the gradient.
pub fn debias_covariance(
    sigma_g_tilde: &DMatrix<f64>,
    set: &OrthonormalSet,
    params: &ProtocolParams,
    sigma_dp: f64,
) -> Result<DMatrix<f64>> {
    let d = sigma_g_tilde.nrows();
    if sigma_g_tilde.ncols() != d || set.dim() != d {
        return Err(Error::DimensionMismatch("second moment and modulation set disagree".into()));
    }
    if set.count() != params.vectors {
        return Err(Error::DimensionMismatch(format!(
            "modulation set has {} vectors, parameters say {}",
            set.count(),
            params.vectors
        )));
    }
    let shrink = (1.0 - params.alpha) * (1.0 - params.alpha);
    let mod_coeff = params.lambda * params.lambda / (2.0 * params.vectors as f64);
    let noise = sigma_dp * sigma_dp;
    let mut out = sigma_g_tilde.clone();
    out.zip_apply(set.projector(), |o, p| *o -= mod_coeff * p);
    for i in 0..d {
        out[(i, i)] -= noise;
    }
    out /= shrink;
    Ok(out)
}

/// Debiased cross moment `z = (1/(1-alpha)) (1/K) sum_i y_i g_tilde_i`.
pub fn debias_cross_moment(payloads: &[ClientPayload], params: &ProtocolParams) -> Result<DVector<f64>> {
    let dim = payloads
        .first()
        .ok_or_else(|| Error::InsufficientData("no payloads aggregated".into()))?
        .g_tilde
        .len();
    let mut acc = MomentAccumulator::new(dim);
    for p in payloads {
        acc.add(&p.g_tilde, p.y);
    }
    Ok(acc.raw_cross_moment()? / (1.0 - params.alpha))
}

/// Gradient estimate `g = sigma_x_hat beta - z`.
pub fn gradient_estimate(sigma_x_hat: &DMatrix<f64>, z: &DVector<f64>, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if sigma_x_hat.ncols() != beta.len() || z.len() != beta.len() {
        return Err(Error::DimensionMismatch("moments and model disagree on dimension".into()));
    }
    Ok(sigma_x_hat * beta - z)
}

/// Projected gradient step: `beta - step * g`, then projection onto the ball
/// of radius `clip_radius` (`beta / max(1, ||beta|| / c)`).
pub fn update_beta(beta: &DVector<f64>, gradient: &DVector<f64>, step: f64, clip_radius: f64) -> DVector<f64> {
    let candidate = beta - gradient * step;
    let denom = f64::max(1.0, candidate.norm() / clip_radius);
    candidate / denom
}

/// Adaptive step size `c / ||sigma_x_hat||_op`.
///
/// The operator norm is the largest absolute eigenvalue of the symmetrized
/// matrix; the debiased covariance can be indefinite at small K, and this
/// stays well defined and conservative there.
pub fn adaptive_step(sigma_x_hat: &DMatrix<f64>, c_factor: f64) -> Result<f64> {
    let norm = operator_norm(sigma_x_hat)?;
    if norm < 1e-12 {
        return Err(Error::Degenerate(format!("operator norm {norm} too small for an adaptive step")));
    }
    Ok(c_factor / norm)
}

/// Largest absolute eigenvalue of the symmetrized matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("operator norm needs a square matrix".into()));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eigen = sym.symmetric_eigen();
    Ok(eigen.eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(l.abs())))
}

/// The server's view of one round after debiasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedMoments {
    pub sigma_g_tilde: DMatrix<f64>,
    pub sigma_x_hat: DMatrix<f64>,
    pub z: DVector<f64>,
    pub gradient: DVector<f64>,
}

impl DebiasedMoments {
    pub fn compute(
        payloads: &[ClientPayload],
        set: &OrthonormalSet,
        params: &ProtocolParams,
        sigma_dp: f64,
        beta: &DVector<f64>,
    ) -> Result<Self> {
        let sigma_g_tilde = aggregate_second_moment(payloads)?;
        let sigma_x_hat = debias_covariance(&sigma_g_tilde, set, params, sigma_dp)?;
        let z = debias_cross_moment(payloads, params)?;
        let gradient = gradient_estimate(&sigma_x_hat, &z, beta)?;
        Ok(Self { sigma_g_tilde, sigma_x_hat, z, gradient })
    }
}

/// Simulate every client's transmission for one round.
pub fn simulate_client_payloads(
    data: &Dataset,
    set: &OrthonormalSet,
    params: &ProtocolParams,
    sigma_dp: f64,
    streams: &RngStream,
    round: usize,
) -> Result<Vec<ClientPayload>> {
    let d = data.dim();
    let xt = data.x().transpose();
    let mut x_i = DVector::zeros(d);
    let mut g = DVector::zeros(d);
    let mut out = Vec::with_capacity(data.n_clients());
    for i in 0..data.n_clients() {
        x_i.copy_from(&xt.column(i));
        let mut rng = streams.derive(Purpose::Client, round as u64, i as u64);
        privatize_into(&mut g, &x_i, set, params, sigma_dp, &mut rng)?;
        out.push(ClientPayload::new(g.clone(), data.y()[i])?);
    }
    Ok(out)
}

/// One round's retained record.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub step_size: f64,
    pub grad_norm: f64,
    pub beta: DVector<f64>,
    pub rho_spent: f64,
    /// Full server-side state; kept only when recording is enabled.
    pub moments: Option<DebiasedMoments>,
}

/// Output of a single orchestrated round.
pub struct RoundOutput {
    pub state: ModelState,
    pub record: RoundRecord,
}

/// Run one full round: draw a fresh orthonormal set orthogonal to the current
/// model, simulate every client, aggregate, debias, step, and project.
pub fn run_round(
    state: &ModelState,
    data: &Dataset,
    params: &ProtocolParams,
    budget: &PrivacyBudget,
    streams: &RngStream,
    keep_moments: bool,
) -> Result<RoundOutput> {
    let d = data.dim();
    if state.beta.len() != d {
        return Err(Error::DimensionMismatch("model and data disagree on dimension".into()));
    }
    let round = state.round;
    let mut dir_rng = streams.derive(Purpose::Direction, round as u64, 0);
    let set = OrthonormalSet::generate(d, params.vectors, Some(&state.beta), &mut dir_rng)?;

    let sigma_dp = budget.sigma_dp;
    let xt = data.x().transpose();
    let mut x_i = DVector::zeros(d);
    let mut g = DVector::zeros(d);
    let mut acc = MomentAccumulator::new(d);
    for i in 0..data.n_clients() {
        x_i.copy_from(&xt.column(i));
        let mut rng = streams.derive(Purpose::Client, round as u64, i as u64);
        privatize_into(&mut g, &x_i, &set, params, sigma_dp, &mut rng)?;
        acc.add(&g, data.y()[i]);
    }

    let sigma_g_tilde = acc.second_moment()?;
    let sigma_x_hat = debias_covariance(&sigma_g_tilde, &set, params, sigma_dp)?;
    let z = acc.raw_cross_moment()? / (1.0 - params.alpha);
    let gradient = gradient_estimate(&sigma_x_hat, &z, &state.beta)?;

    let step = match params.step {
        StepRule::Fixed(eta) => eta,
        StepRule::Adaptive(c) => adaptive_step(&sigma_x_hat, c)?,
    };
    let beta = update_beta(&state.beta, &gradient, step, params.clip_radius);

    let record = RoundRecord {
        round,
        step_size: step,
        grad_norm: gradient.norm(),
        beta: beta.clone(),
        rho_spent: budget.rho_per_round,
        moments: keep_moments.then_some(DebiasedMoments { sigma_g_tilde, sigma_x_hat, z, gradient }),
    };
    Ok(RoundOutput { state: ModelState { beta, round: round + 1 }, record })
}

/// Driver owning the model state, ledger, and per-round records for one run.
pub struct FederatedRun<'a> {
    data: &'a Dataset,
    params: ProtocolParams,
    budget: PrivacyBudget,
    streams: RngStream,
    keep_moments: bool,
    pub state: ModelState,
    pub records: Vec<RoundRecord>,
    accountant: Accountant,
    beta_sum: DVector<f64>,
}

impl<'a> FederatedRun<'a> {
    pub fn new(data: &'a Dataset, params: ProtocolParams, budget: PrivacyBudget, streams: RngStream) -> Result<Self> {
        params.validate()?;
        let d = data.dim();
        Ok(Self {
            data,
            params,
            budget,
            streams,
            keep_moments: false,
            state: ModelState::initial(d),
            records: Vec::new(),
            accountant: Accountant::new(0.0),
            beta_sum: DVector::zeros(d),
        })
    }

    /// Retain the full per-round moments in memory.
    pub fn keep_moments(mut self, keep: bool) -> Self {
        self.keep_moments = keep;
        self
    }

    /// Attach a ledger (optionally carrying a declared epsilon to enforce).
    pub fn with_accountant(mut self, accountant: Accountant) -> Self {
        self.accountant = accountant;
        self
    }

    pub fn accountant(&self) -> &Accountant {
        &self.accountant
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn budget(&self) -> &PrivacyBudget {
        &self.budget
    }

    /// Execute the next round; records the ledger entry and the round state.
    pub fn step_round(&mut self) -> Result<&RoundRecord> {
        let out = run_round(&self.state, self.data, &self.params, &self.budget, &self.streams, self.keep_moments)?;
        self.state = out.state;
        self.accountant.record(self.budget.rho_per_round);
        self.accountant.check()?;
        self.beta_sum += &out.record.beta;
        self.records.push(out.record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Run all configured rounds.
    pub fn run_all(&mut self) -> Result<()> {
        for _ in 0..self.params.rounds {
            self.step_round()?;
        }
        Ok(())
    }

    /// Average of the post-update iterates seen so far.
    pub fn beta_averaged(&self) -> DVector<f64> {
        if self.records.is_empty() {
            self.state.beta.clone()
        } else {
            &self.beta_sum / self.records.len() as f64
        }
    }
}
