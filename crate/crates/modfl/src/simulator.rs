//! End-to-end experiment driver: synthetic task generation, split
//! preparation, privacy sweeps across an epsilon grid for the three methods,
//! joint hyperparameter tuning on the validation split, and the crossover
//! summary.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{clip_features, dpsgd_sensitivity, Accountant, ClipMode, PrivacyBudget};
use crate::error::{Error, Result};
use crate::estimators::{dpsgd_fedavg_round, ols, one_shot_estimate, r_squared};
use crate::model::{Dataset, ModelState, OrthonormalSet, ProtocolParams, StepRule};
use crate::modulation::lipschitz_constant;
use crate::protocol::{simulate_client_payloads, FederatedRun};
use crate::rng::{Purpose, RngStream};

/// A generated regression task with its ground-truth model.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub data: Dataset,
    pub beta_star: DVector<f64>,
}

/// Draw a synthetic task: Gaussian feature rows with a geometric covariance
/// spectrum running from 1 down to 1/conditioning, responses
/// `y = x . beta_star + N(0, noise_sd^2)`.
pub fn generate_synthetic(
    clients: usize,
    dim: usize,
    beta_star_norm: f64,
    noise_sd: f64,
    conditioning: f64,
    seed: u64,
) -> Result<SyntheticTask> {
    if clients <= dim {
        return Err(Error::InsufficientData(format!(
            "need more clients than dimensions, got {clients} x {dim}"
        )));
    }
    if !(conditioning >= 1.0 && conditioning.is_finite()) {
        return Err(Error::InvalidParameter(format!("conditioning must be >= 1, got {conditioning}")));
    }
    if !(beta_star_norm >= 0.0 && noise_sd >= 0.0) {
        return Err(Error::InvalidParameter("model norm and noise level must be non-negative".into()));
    }
    let mut rng = RngStream::new(seed).derive(Purpose::DataGen, 0, 0);
    let scales: Vec<f64> = (0..dim)
        .map(|j| {
            let exponent = if dim > 1 { j as f64 / (dim as f64 - 1.0) } else { 0.0 };
            conditioning.powf(-exponent).sqrt()
        })
        .collect();
    let mut x = DMatrix::zeros(clients, dim);
    for i in 0..clients {
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = z * scales[j];
        }
    }
    let mut beta_star = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = beta_star.norm();
    if norm > 0.0 && beta_star_norm > 0.0 {
        beta_star *= beta_star_norm / norm;
    } else {
        beta_star.fill(0.0);
    }
    let mut y = &x * &beta_star;
    for v in y.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += noise_sd * z;
    }
    Ok(SyntheticTask { data: Dataset::new(x, y)?, beta_star })
}

/// Standardized, norm-controlled train/validation/test splits ready for the
/// protocol.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Split, standardize on the training portion, and apply feature-norm
/// control (the global factor comes from the training split).
pub fn prepare_splits(
    data: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
    clip: ClipMode,
) -> Result<DataSplits> {
    let (train_raw, val_raw, test_raw) = data.split(fractions, seed)?;
    let train = train_raw.standardize()?;
    let feature = train.feature_scale.clone().expect("standardize fits metadata");
    let target = train.target_scale.clone().expect("standardize fits metadata");
    let val = val_raw.apply_scaling(&feature, &target)?;
    let test = test_raw.apply_scaling(&feature, &target)?;

    match clip {
        ClipMode::None => Ok(DataSplits { train, val, test }),
        ClipMode::PerRow => Ok(DataSplits {
            train: clip_features(&train, ClipMode::PerRow)?,
            val,
            test,
        }),
        ClipMode::GlobalMaxNorm => {
            let clipped_train = clip_features(&train, ClipMode::GlobalMaxNorm)?;
            // Held-out rows are scaled by the same factor so the model space
            // stays consistent; only training rows are clients.
            let s = clipped_train.clip_scale.unwrap_or(1.0);
            let val = crate::accounting::scale_features(&val, s)?;
            let test = crate::accounting::scale_features(&test, s)?;
            Ok(DataSplits { train: clipped_train, val, test })
        }
    }
}

/// The three methods the sweep compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ModulatedIterative,
    ModulatedOneshot,
    Dpsgd,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ModulatedIterative => "modulated_iterative",
            Method::ModulatedOneshot => "modulated_oneshot",
            Method::Dpsgd => "dpsgd",
        }
    }
}

/// Hyperparameters selected for one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperParams {
    Iterative { c_factor: f64 },
    Oneshot { ridge_gamma: f64 },
    Dpsgd { clip_c: f64, lr: f64 },
}

/// Sweep definition: the privacy grid, round budget, methods, base protocol
/// parameters, per-method tuning grids, and replicate seeds.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub rounds: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub lambda: f64,
    pub omega: f64,
    pub vectors: usize,
    pub clip_radius: f64,
    pub iterative_c_grid: Vec<f64>,
    pub oneshot_ridge_grid: Vec<f64>,
    pub dpsgd_clip_grid: Vec<f64>,
    pub dpsgd_lr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut eps_grid = Vec::new();
        let mut eps: f64 = 0.5;
        while eps <= 10.0 + 1e-9 {
            eps_grid.push((eps * 100.0).round() / 100.0);
            eps += 0.25;
        }
        Self {
            eps_grid,
            delta: 1e-5,
            rounds: 10,
            methods: vec![Method::ModulatedIterative, Method::ModulatedOneshot, Method::Dpsgd],
            alpha: 0.5,
            lambda: 0.2,
            omega: 1.0,
            vectors: 1,
            clip_radius: 25.0,
            iterative_c_grid: vec![0.25, 0.5, 0.8, 1.0],
            oneshot_ridge_grid: vec![0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
            dpsgd_clip_grid: vec![0.5, 1.0, 2.0],
            dpsgd_lr_grid: vec![0.05, 0.1, 0.2],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::InvalidParameter("epsilon grid must be non-empty".into()));
        }
        let mut last = 0.0;
        for &e in &self.eps_grid {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidParameter(format!("epsilon values must be positive, got {e}")));
            }
            if e <= last {
                return Err(Error::InvalidParameter("epsilon grid must be strictly ascending".into()));
            }
            last = e;
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("round count must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("need at least one replicate seed".into()));
        }
        for method in &self.methods {
            let empty = match method {
                Method::ModulatedIterative => self.iterative_c_grid.is_empty(),
                Method::ModulatedOneshot => self.oneshot_ridge_grid.is_empty(),
                Method::Dpsgd => self.dpsgd_clip_grid.is_empty() || self.dpsgd_lr_grid.is_empty(),
            };
            if empty {
                return Err(Error::InvalidParameter(format!(
                    "tuning grid for {} must be non-empty",
                    method.name()
                )));
            }
        }
        // Base protocol parameters must themselves be valid.
        self.protocol_params(StepRule::Fixed(1.0), 1)?;
        Ok(())
    }

    fn protocol_params(&self, step: StepRule, rounds: usize) -> Result<ProtocolParams> {
        ProtocolParams::new(self.alpha, self.lambda, self.omega, self.vectors, self.clip_radius, step, rounds)
    }

    fn hyper_grid(&self, method: Method) -> Vec<HyperParams> {
        match method {
            Method::ModulatedIterative => self
                .iterative_c_grid
                .iter()
                .map(|&c| HyperParams::Iterative { c_factor: c })
                .collect(),
            Method::ModulatedOneshot => self
                .oneshot_ridge_grid
                .iter()
                .map(|&g| HyperParams::Oneshot { ridge_gamma: g })
                .collect(),
            Method::Dpsgd => self
                .dpsgd_clip_grid
                .iter()
                .flat_map(|&c| self.dpsgd_lr_grid.iter().map(move |&lr| HyperParams::Dpsgd { clip_c: c, lr }))
                .collect(),
        }
    }
}

/// Privacy spend of one run, as recorded by its ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerSummary {
    pub per_round_rho: Vec<f64>,
    pub total_rho: f64,
    pub eps_converted: f64,
    pub delta: f64,
}

impl LedgerSummary {
    pub fn from_accountant(acc: &Accountant) -> Self {
        Self {
            per_round_rho: acc.entries().to_vec(),
            total_rho: acc.total_rho(),
            eps_converted: acc.converted_eps(),
            delta: acc.delta(),
        }
    }
}

/// One (method, epsilon, seed) cell of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub eps: f64,
    pub seed: u64,
    pub r2: f64,
    pub hyperparams: HyperParams,
    pub ledger: LedgerSummary,
}

/// Full sweep output: one row per cell, the selected configuration per
/// method, and the non-private OLS reference.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub selected: Vec<(Method, HyperParams)>,
    pub ols_r2: f64,
    /// Wall-clock time; excluded from serialization so identical configs
    /// produce byte-identical results.
    #[serde(skip)]
    pub wall_time: Duration,
}

type CellKey = (usize, usize, usize);

struct CellOutcome {
    val_r2: f64,
    test_r2: f64,
    ledger: LedgerSummary,
}

fn run_iterative_cell(
    splits: &DataSplits,
    config: &SweepConfig,
    c_factor: f64,
    eps: f64,
    seed: u64,
) -> Result<CellOutcome> {
    let params = config.protocol_params(StepRule::Adaptive(c_factor), config.rounds)?;
    let sensitivity = lipschitz_constant(&params);
    let budget = PrivacyBudget::from_eps_zcdp(eps, config.delta, config.rounds, sensitivity)?;
    let accountant = Accountant::with_declared_eps(config.delta, eps);
    let mut run = FederatedRun::new(&splits.train, params, budget, RngStream::new(seed))?
        .with_accountant(accountant);
    run.run_all()?;
    run.accountant().check()?;
    Ok(CellOutcome {
        val_r2: r_squared(&run.state.beta, &splits.val)?,
        test_r2: r_squared(&run.state.beta, &splits.test)?,
        ledger: LedgerSummary::from_accountant(run.accountant()),
    })
}

fn run_oneshot_cell(
    splits: &DataSplits,
    config: &SweepConfig,
    ridge_gamma: f64,
    eps: f64,
    seed: u64,
) -> Result<CellOutcome> {
    let params = config.protocol_params(StepRule::Fixed(1.0), 1)?;
    let sensitivity = lipschitz_constant(&params);
    // A single private release carries the whole budget.
    let budget = PrivacyBudget::from_eps_zcdp(eps, config.delta, 1, sensitivity)?;
    let mut accountant = Accountant::with_declared_eps(config.delta, eps);
    let streams = RngStream::new(seed);
    let mut dir_rng = streams.derive(Purpose::Direction, 0, 0);
    let set = OrthonormalSet::generate(splits.train.dim(), params.vectors, None, &mut dir_rng)?;
    let payloads = simulate_client_payloads(&splits.train, &set, &params, budget.sigma_dp, &streams, 0)?;
    accountant.record(budget.rho_per_round);
    accountant.check()?;
    let estimate = one_shot_estimate(&payloads, &set, &params, budget.sigma_dp, ridge_gamma)?;
    Ok(CellOutcome {
        val_r2: r_squared(&estimate.beta_hat, &splits.val)?,
        test_r2: r_squared(&estimate.beta_hat, &splits.test)?,
        ledger: LedgerSummary::from_accountant(&accountant),
    })
}

fn run_dpsgd_cell(
    splits: &DataSplits,
    config: &SweepConfig,
    clip_c: f64,
    lr: f64,
    eps: f64,
    seed: u64,
) -> Result<CellOutcome> {
    let sensitivity = dpsgd_sensitivity(clip_c);
    let budget = PrivacyBudget::from_eps_zcdp(eps, config.delta, config.rounds, sensitivity)?;
    let mut accountant = Accountant::with_declared_eps(config.delta, eps);
    let streams = RngStream::new(seed);
    let mut state = ModelState::initial(splits.train.dim());
    for _ in 0..config.rounds {
        state = dpsgd_fedavg_round(&state, &splits.train, clip_c, lr, budget.sigma_dp, &streams)?;
        accountant.record(budget.rho_per_round);
        accountant.check()?;
    }
    Ok(CellOutcome {
        val_r2: r_squared(&state.beta, &splits.val)?,
        test_r2: r_squared(&state.beta, &splits.test)?,
        ledger: LedgerSummary::from_accountant(&accountant),
    })
}

fn run_cell(splits: &DataSplits, config: &SweepConfig, hyper: HyperParams, eps: f64, seed: u64) -> Result<CellOutcome> {
    match hyper {
        HyperParams::Iterative { c_factor } => run_iterative_cell(splits, config, c_factor, eps, seed),
        HyperParams::Oneshot { ridge_gamma } => run_oneshot_cell(splits, config, ridge_gamma, eps, seed),
        HyperParams::Dpsgd { clip_c, lr } => run_dpsgd_cell(splits, config, clip_c, lr, eps, seed),
    }
}

/// Run the sweep: for each method, evaluate every hyperparameter candidate
/// over the whole (epsilon x seed) grid, select the single configuration
/// maximizing mean validation R^2 across the grid, and report test R^2 for
/// that configuration. All privacy spend goes through per-run ledgers; a run
/// exceeding its declared budget aborts the sweep.
pub fn run_sweep(config: &SweepConfig, splits: &DataSplits) -> Result<SweepResult> {
    config.validate()?;
    let started = Instant::now();

    let ols_beta = ols(&splits.train)?;
    let ols_r2 = r_squared(&ols_beta, &splits.test)?;

    let mut rows = Vec::new();
    let mut selected = Vec::new();
    for &method in &config.methods {
        let grid = config.hyper_grid(method);
        // Every (hyper, eps, seed) cell is independent; results are keyed so
        // parallel execution cannot reorder them.
        let mut cells: Vec<CellKey> = Vec::new();
        for h in 0..grid.len() {
            for e in 0..config.eps_grid.len() {
                for s in 0..config.seeds.len() {
                    cells.push((h, e, s));
                }
            }
        }
        let outcomes: Result<Vec<(CellKey, CellOutcome)>> = cells
            .par_iter()
            .map(|&(h, e, s)| {
                let outcome = run_cell(splits, config, grid[h], config.eps_grid[e], config.seeds[s])?;
                Ok(((h, e, s), outcome))
            })
            .collect();
        let mut outcomes = outcomes?;
        outcomes.sort_by_key(|&(key, _)| key);

        // Joint tuning: mean validation R^2 across the whole grid; ties keep
        // the earliest grid entry.
        let per_cell = config.eps_grid.len() * config.seeds.len();
        let mut best: Option<(usize, f64)> = None;
        for h in 0..grid.len() {
            let mean: f64 = outcomes[h * per_cell..(h + 1) * per_cell]
                .iter()
                .map(|(_, o)| o.val_r2)
                .sum::<f64>()
                / per_cell as f64;
            if best.is_none_or(|(_, b)| mean > b) {
                best = Some((h, mean));
            }
        }
        let (chosen, _) = best.expect("non-empty grid");
        selected.push((method, grid[chosen]));

        for ((.., e, s), outcome) in outcomes.into_iter().skip(chosen * per_cell).take(per_cell) {
            rows.push(SweepRow {
                method,
                eps: config.eps_grid[e],
                seed: config.seeds[s],
                r2: outcome.test_r2,
                hyperparams: grid[chosen],
                ledger: outcome.ledger,
            });
        }
    }

    Ok(SweepResult { rows, selected, ols_r2, wall_time: started.elapsed() })
}

/// Where each modulated method dominates across the grid, by median test R^2
/// over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct CrossoverReport {
    /// (epsilon, median one-shot R^2, median iterative R^2) per grid point.
    pub per_eps: Vec<(f64, f64, f64)>,
    pub oneshot_leads: Vec<f64>,
    pub iterative_leads: Vec<f64>,
    /// First epsilon at which the leader flips relative to the grid start.
    pub crossover_eps: Option<f64>,
    pub detectable: bool,
    pub note: String,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Summarize where the one-shot and iterative modulated methods dominate.
pub fn crossover_report(result: &SweepResult) -> Result<CrossoverReport> {
    let mut eps_values: Vec<f64> = result
        .rows
        .iter()
        .filter(|r| matches!(r.method, Method::ModulatedIterative | Method::ModulatedOneshot))
        .map(|r| r.eps)
        .collect();
    eps_values.sort_by(f64::total_cmp);
    eps_values.dedup();
    if eps_values.is_empty() {
        return Err(Error::InvalidParameter(
            "crossover report needs both modulated methods in the sweep".into(),
        ));
    }

    let mut per_eps = Vec::new();
    let mut oneshot_leads = Vec::new();
    let mut iterative_leads = Vec::new();
    for &eps in &eps_values {
        let mut one: Vec<f64> = result
            .rows
            .iter()
            .filter(|r| r.method == Method::ModulatedOneshot && r.eps == eps)
            .map(|r| r.r2)
            .collect();
        let mut iter: Vec<f64> = result
            .rows
            .iter()
            .filter(|r| r.method == Method::ModulatedIterative && r.eps == eps)
            .map(|r| r.r2)
            .collect();
        if one.is_empty() || iter.is_empty() {
            return Err(Error::InvalidParameter(
                "crossover report needs both modulated methods in the sweep".into(),
            ));
        }
        let m_one = median(&mut one);
        let m_iter = median(&mut iter);
        per_eps.push((eps, m_one, m_iter));
        if m_one >= m_iter {
            oneshot_leads.push(eps);
        } else {
            iterative_leads.push(eps);
        }
    }

    let detectable = per_eps.len() > 1;
    let first_leader_oneshot = per_eps[0].1 >= per_eps[0].2;
    let crossover_eps = if detectable {
        per_eps
            .iter()
            .find(|(_, one, iter)| (one >= iter) != first_leader_oneshot)
            .map(|(e, _, _)| *e)
    } else {
        None
    };
    let note = if !detectable {
        "no crossover detectable on a single-point grid".to_string()
    } else if let Some(e) = crossover_eps {
        format!("leadership flips at epsilon = {e}")
    } else {
        "one method dominates across the whole grid".to_string()
    };

    Ok(CrossoverReport { per_eps, oneshot_leads, iterative_leads, crossover_eps, detectable, note })
}
