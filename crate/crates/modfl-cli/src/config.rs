//! Configuration schemas for the subcommands. All files are JSON with
//! unknown keys rejected.

use std::path::PathBuf;

use serde::Deserialize;

use modfl::accounting::{BudgetMode, ClipMode, PrivacyBudget};
use modfl::error::Result as LibResult;
use modfl::model::{ProtocolParams, StepRule};
use modfl::simulator::{Method, SweepConfig};

fn default_true() -> bool {
    true
}

fn default_beta_norm() -> f64 {
    1.0
}

fn default_noise_sd() -> f64 {
    0.1
}

fn default_conditioning() -> f64 {
    1.0
}

fn default_vectors() -> usize {
    1
}

fn default_replicates() -> usize {
    20_000
}

/// Where the dataset comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        clients: usize,
        dim: usize,
        #[serde(default = "default_beta_norm")]
        beta_norm: f64,
        #[serde(default = "default_noise_sd")]
        noise_sd: f64,
        #[serde(default = "default_conditioning")]
        conditioning: f64,
    },
    Csv {
        path: PathBuf,
        target: String,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train, self.val, self.test)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSpec {
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_clip")]
    pub clip: ClipMode,
}

fn default_clip() -> ClipMode {
    ClipMode::GlobalMaxNorm
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self { standardize: true, clip: ClipMode::GlobalMaxNorm }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum StepSpec {
    Fixed(f64),
    Adaptive(f64),
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec::Fixed(0.1)
    }
}

impl From<StepSpec> for StepRule {
    fn from(spec: StepSpec) -> Self {
        match spec {
            StepSpec::Fixed(eta) => StepRule::Fixed(eta),
            StepSpec::Adaptive(c) => StepRule::Adaptive(c),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub omega: f64,
    #[serde(default = "default_vectors")]
    pub vectors: usize,
    /// Model projection radius; omitted means unconstrained.
    #[serde(default)]
    pub clip_radius: Option<f64>,
    #[serde(default)]
    pub step: StepSpec,
}

impl ProtocolSpec {
    pub fn to_params(&self, rounds: usize) -> LibResult<ProtocolParams> {
        ProtocolParams::new(
            self.alpha,
            self.lambda,
            self.omega,
            self.vectors,
            self.clip_radius.unwrap_or(f64::INFINITY),
            self.step.into(),
            rounds,
        )
    }
}

/// How the privacy target is expressed.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum BudgetSpec {
    /// Total (eps, delta) budget accounted through zCDP composition.
    ZcdpEps { eps: f64, delta: f64 },
    /// Total zCDP budget directly.
    ZcdpRho { rho_total: f64, delta: f64 },
    /// Per-release (eps, delta) Gaussian-mechanism calibration.
    EpsDelta { eps: f64, delta: f64 },
}

impl BudgetSpec {
    pub fn calibrate(&self, rounds: usize, sensitivity: f64) -> LibResult<PrivacyBudget> {
        match *self {
            BudgetSpec::ZcdpEps { eps, delta } => PrivacyBudget::from_eps_zcdp(eps, delta, rounds, sensitivity),
            BudgetSpec::ZcdpRho { rho_total, delta } => {
                PrivacyBudget::calibrate(BudgetMode::Zcdp { rho_total, delta }, rounds, sensitivity)
            }
            BudgetSpec::EpsDelta { eps, delta } => {
                PrivacyBudget::calibrate(BudgetMode::EpsDelta { eps, delta }, rounds, sensitivity)
            }
        }
    }

    /// Total epsilon this budget declares, when the zCDP ledger can be
    /// checked against one.
    pub fn declared_eps(&self) -> Option<f64> {
        match *self {
            BudgetSpec::ZcdpEps { eps, .. } => Some(eps),
            BudgetSpec::ZcdpRho { rho_total, delta } => modfl::accounting::zcdp_to_eps(rho_total, delta).ok(),
            BudgetSpec::EpsDelta { .. } => None,
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            BudgetSpec::ZcdpEps { delta, .. }
            | BudgetSpec::ZcdpRho { delta, .. }
            | BudgetSpec::EpsDelta { delta, .. } => delta,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub preprocess: PreprocessSpec,
    pub protocol: ProtocolSpec,
    pub budget: BudgetSpec,
    pub rounds: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneshotConfig {
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub preprocess: PreprocessSpec,
    pub protocol: ProtocolSpec,
    pub budget: BudgetSpec,
    pub ridge_gamma: f64,
}

/// Sweep parameters; omitted fields fall back to the library defaults.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub eps_grid: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub rounds: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub omega: Option<f64>,
    pub vectors: Option<usize>,
    pub clip_radius: Option<f64>,
    pub iterative_c_grid: Option<Vec<f64>>,
    pub oneshot_ridge_grid: Option<Vec<f64>>,
    pub dpsgd_clip_grid: Option<Vec<f64>>,
    pub dpsgd_lr_grid: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
}

impl SweepSpec {
    pub fn into_config(self) -> SweepConfig {
        let defaults = SweepConfig::default();
        SweepConfig {
            eps_grid: self.eps_grid.unwrap_or(defaults.eps_grid),
            delta: self.delta.unwrap_or(defaults.delta),
            rounds: self.rounds.unwrap_or(defaults.rounds),
            methods: self.methods.unwrap_or(defaults.methods),
            alpha: self.alpha.unwrap_or(defaults.alpha),
            lambda: self.lambda.unwrap_or(defaults.lambda),
            omega: self.omega.unwrap_or(defaults.omega),
            vectors: self.vectors.unwrap_or(defaults.vectors),
            clip_radius: self.clip_radius.unwrap_or(defaults.clip_radius),
            iterative_c_grid: self.iterative_c_grid.unwrap_or(defaults.iterative_c_grid),
            oneshot_ridge_grid: self.oneshot_ridge_grid.unwrap_or(defaults.oneshot_ridge_grid),
            dpsgd_clip_grid: self.dpsgd_clip_grid.unwrap_or(defaults.dpsgd_clip_grid),
            dpsgd_lr_grid: self.dpsgd_lr_grid.unwrap_or(defaults.dpsgd_lr_grid),
            seeds: self.seeds.unwrap_or(defaults.seeds),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFileConfig {
    pub seed: u64,
    pub data: DataSource,
    pub split: SplitSpec,
    #[serde(default)]
    pub preprocess: PreprocessSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSpec {
    pub residual_ms: f64,
    pub beta_sigma_rx: f64,
    pub trace_sigma_x: f64,
    pub beta_norm_sq: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub beta_bound: f64,
    pub feature_bound: f64,
    pub response_bound: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub l_dp: f64,
    pub beta0_dist_sq: f64,
    pub rounds: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSpec {
    pub sigma_y: f64,
    pub beta_star_norm: f64,
    /// Modulation angle `omega <x, v> + phi` at which the conditional bound
    /// is evaluated.
    pub theta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffSpec {
    pub eps: f64,
    pub delta: f64,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub omega: f64,
    pub sigma_dp: f64,
    pub clients: usize,
    pub dim: usize,
    pub variance: VarianceSpec,
    pub envelope: EnvelopeSpec,
    pub convergence: ConvergenceSpec,
    pub reconstruction: ReconstructionSpec,
    pub tradeoff: TradeoffSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Run only the validators whose name starts with one of these.
    #[serde(default)]
    pub only: Option<Vec<String>>,
}
