//! Shared domain types: datasets, protocol parameters, model state, client
//! payloads, and orthonormal modulation sets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};

/// Per-column affine scaling retained by [`Dataset::standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
    /// The column had (numerically) zero variance; it was centered and left
    /// unscaled.
    pub constant: bool,
}

/// A regression dataset: the K one-sample clients.
///
/// `x` is the K x d design matrix of feature rows, `y` the length-K response.
/// Standardization and feature-norm metadata travel with the data so that
/// transforms can be applied consistently to held-out splits and inverted.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    pub feature_scale: Option<Vec<ColumnScale>>,
    pub target_scale: Option<ColumnScale>,
    /// Global divisor applied to all feature rows by norm control
    /// (original features = stored features * clip_scale).
    pub clip_scale: Option<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InsufficientData(
                "design matrix must have at least one row and one column".into(),
            ));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contains NaN or infinite entries".into()));
        }
        Ok(Self {
            x,
            y,
            feature_scale: None,
            target_scale: None,
            clip_scale: None,
        })
    }

    /// Number of clients K.
    pub fn n_clients(&self) -> usize {
        self.x.nrows()
    }

    /// Feature dimension d.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Feature row i as an owned vector.
    pub fn feature_row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    fn with_parts(&self, x: DMatrix<f64>, y: DVector<f64>) -> Self {
        Self {
            x,
            y,
            feature_scale: self.feature_scale.clone(),
            target_scale: self.target_scale.clone(),
            clip_scale: self.clip_scale,
        }
    }

    /// Center each feature column to mean zero and scale to unit sample
    /// standard deviation (divide by K-1); the response is treated the same
    /// way. Constant columns are centered, left unscaled, and flagged.
    ///
    /// A dataset that already carries scaling metadata is returned unchanged,
    /// so the operation is idempotent once fitted.
    pub fn standardize(&self) -> Result<Dataset> {
        if self.feature_scale.is_some() {
            return Ok(self.clone());
        }
        let k = self.n_clients();
        if k < 2 {
            return Err(Error::InsufficientData(
                "standardization needs at least two rows".into(),
            ));
        }
        let feature = (0..self.dim())
            .map(|j| column_scale(self.x.column(j).iter().copied(), k))
            .collect::<Vec<_>>();
        let target = column_scale(self.y.iter().copied(), k);
        self.apply_scaling(&feature, &target)
    }

    /// Apply previously fitted scaling (e.g. the training split's) to this
    /// dataset.
    pub fn apply_scaling(&self, feature: &[ColumnScale], target: &ColumnScale) -> Result<Dataset> {
        if feature.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} column scales for {} columns",
                feature.len(),
                self.dim()
            )));
        }
        let mut x = self.x.clone();
        for (j, scale) in feature.iter().enumerate() {
            for v in x.column_mut(j).iter_mut() {
                *v = (*v - scale.mean) / scale.sd;
            }
        }
        let mut y = self.y.clone();
        for v in y.iter_mut() {
            *v = (*v - target.mean) / target.sd;
        }
        let mut out = Dataset::new(x, y)?;
        out.feature_scale = Some(feature.to_vec());
        out.target_scale = Some(target.clone());
        out.clip_scale = self.clip_scale;
        Ok(out)
    }

    /// Undo [`Dataset::standardize`] using the retained metadata.
    pub fn inverse_standardize(&self) -> Result<Dataset> {
        let feature = self.feature_scale.as_ref().ok_or_else(|| {
            Error::InvalidParameter("no standardization metadata to invert".into())
        })?;
        let target = self
            .target_scale
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("no target scaling metadata to invert".into()))?;
        let mut x = self.x.clone();
        for (j, scale) in feature.iter().enumerate() {
            for v in x.column_mut(j).iter_mut() {
                *v = *v * scale.sd + scale.mean;
            }
        }
        let mut y = self.y.clone();
        for v in y.iter_mut() {
            *v = *v * target.sd + target.mean;
        }
        let mut out = Dataset::new(x, y)?;
        out.clip_scale = self.clip_scale;
        Ok(out)
    }

    /// Partition rows into disjoint train/validation/test datasets.
    ///
    /// Fractions must be positive and sum to one; the shuffle is a pure
    /// function of the seed.
    pub fn split(&self, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
        let (ft, fv, fe) = fractions;
        if !(ft > 0.0 && fv > 0.0 && fe > 0.0) {
            return Err(Error::InvalidParameter("split fractions must be positive".into()));
        }
        if (ft + fv + fe - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions must sum to 1, got {}",
                ft + fv + fe
            )));
        }
        let k = self.n_clients();
        let n_train = (ft * k as f64).floor() as usize;
        let n_val = (fv * k as f64).floor() as usize;
        let n_test = k - n_train - n_val;
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::InsufficientData(format!(
                "cannot split {k} rows into non-empty ({ft}, {fv}, {fe}) parts"
            )));
        }

        let mut order: Vec<usize> = (0..k).collect();
        let mut rng = RngStream::new(seed).derive(Purpose::Split, 0, 0);
        // Fisher-Yates.
        for i in (1..k).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let take = |idx: &[usize]| -> Dataset {
            let mut x = DMatrix::zeros(idx.len(), self.dim());
            let mut y = DVector::zeros(idx.len());
            for (r, &i) in idx.iter().enumerate() {
                x.row_mut(r).copy_from(&self.x.row(i));
                y[r] = self.y[i];
            }
            self.with_parts(x, y)
        };

        Ok((
            take(&order[..n_train]),
            take(&order[n_train..n_train + n_val]),
            take(&order[n_train + n_val..]),
        ))
    }

    /// Largest feature-row Euclidean norm.
    pub fn max_row_norm(&self) -> f64 {
        (0..self.n_clients())
            .map(|i| self.x.row(i).norm())
            .fold(0.0, f64::max)
    }
}

fn column_scale(values: impl Iterator<Item = f64> + Clone, k: usize) -> ColumnScale {
    let mean = values.clone().sum::<f64>() / k as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k as f64 - 1.0);
    let sd = var.sqrt();
    if sd <= 1e-12 * (1.0 + mean.abs()) {
        ColumnScale { mean, sd: 1.0, constant: true }
    } else {
        ColumnScale { mean, sd, constant: false }
    }
}

/// Step-size policy for the server update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Constant step size.
    Fixed(f64),
    /// `c / ||sigma_x_hat||_op`, recomputed every round.
    Adaptive(f64),
}

/// Everything broadcast to clients besides the model itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// Shrinkage weight in (0, 1); the identity part of the client map is
    /// scaled by 1 - alpha.
    pub alpha: f64,
    /// Modulation amplitude (>= 0; zero disables modulation).
    pub lambda: f64,
    /// Modulation frequency (> 0).
    pub omega: f64,
    /// Number m of orthonormal modulation vectors.
    pub vectors: usize,
    /// Projection radius c for the model iterate (may be `f64::INFINITY`).
    pub clip_radius: f64,
    pub step: StepRule,
    /// Number of protocol rounds T.
    pub rounds: usize,
}

impl ProtocolParams {
    pub fn new(
        alpha: f64,
        lambda: f64,
        omega: f64,
        vectors: usize,
        clip_radius: f64,
        step: StepRule,
        rounds: usize,
    ) -> Result<Self> {
        let p = Self { alpha, lambda, omega, vectors, clip_radius, step, rounds };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega must be finite and > 0, got {}", self.omega)));
        }
        if self.vectors == 0 {
            return Err(Error::InvalidParameter("need at least one modulation vector".into()));
        }
        if !(self.clip_radius > 0.0) {
            return Err(Error::InvalidParameter(format!("clip radius must be positive, got {}", self.clip_radius)));
        }
        match self.step {
            StepRule::Fixed(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return Err(Error::InvalidParameter(format!("fixed step must be finite and positive, got {eta}")));
            }
            StepRule::Adaptive(c) if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::InvalidParameter(format!("adaptive step factor must be finite and positive, got {c}")));
            }
            _ => {}
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("round count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Server-side model iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub beta: DVector<f64>,
    pub round: usize,
}

impl ModelState {
    /// Zero initialization; any orthonormal set is admissible against it.
    pub fn initial(dim: usize) -> Self {
        Self { beta: DVector::zeros(dim), round: 0 }
    }
}

/// What a client transmits each round: the privatized modulated feature and
/// the public response.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPayload {
    pub g_tilde: DVector<f64>,
    pub y: f64,
}

impl ClientPayload {
    pub fn new(g_tilde: DVector<f64>, y: f64) -> Result<Self> {
        if g_tilde.iter().any(|v| !v.is_finite()) || !y.is_finite() {
            return Err(Error::NonFinite("client payload contains NaN or infinite entries".into()));
        }
        Ok(Self { g_tilde, y })
    }
}

/// d x m matrix with orthonormal columns, plus its cached rank-m projector
/// V V^T.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalSet {
    basis: DMatrix<f64>,
    projector: DMatrix<f64>,
}

const ORTHONORMALITY_TOL: f64 = 1e-10;

impl OrthonormalSet {
    /// Sample an orthonormal set of `count` columns in dimension `dim`,
    /// optionally orthogonal to a given vector.
    ///
    /// Columns are drawn as standard Gaussians, the constraint direction is
    /// projected out, and modified Gram-Schmidt orthonormalizes; a column is
    /// redrawn if its residual norm falls below 1e-8. The construction is
    /// invariant under rotations of the admissible subspace.
    pub fn generate(
        dim: usize,
        count: usize,
        orthogonal_to: Option<&DVector<f64>>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        // A zero constraint vector is vacuous (the initial model is zero).
        let constraint = orthogonal_to.filter(|b| b.norm() > 0.0);
        if let Some(b) = constraint {
            if b.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "constraint vector has length {} in dimension {}",
                    b.len(),
                    dim
                )));
            }
        }
        let max_rank = if constraint.is_some() { dim - 1 } else { dim };
        if count == 0 || count > max_rank {
            return Err(Error::InvalidParameter(format!(
                "cannot build {count} orthonormal vectors in dimension {dim}{}",
                if constraint.is_some() { " orthogonal to a nonzero vector" } else { "" }
            )));
        }

        let constraint_unit = constraint.map(|b| b / b.norm());
        let mut basis = DMatrix::<f64>::zeros(dim, count);
        let mut column = DVector::<f64>::zeros(dim);
        for j in 0..count {
            let mut attempts = 0;
            loop {
                for v in column.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                if let Some(b) = &constraint_unit {
                    let c = b.dot(&column);
                    column.axpy(-c, b, 1.0);
                }
                for k in 0..j {
                    let prev = basis.column(k);
                    let c = prev.dot(&column);
                    column.axpy(-c, &prev, 1.0);
                }
                let norm = column.norm();
                if norm >= 1e-8 {
                    basis.column_mut(j).copy_from(&(&column / norm));
                    break;
                }
                attempts += 1;
                if attempts > 64 {
                    return Err(Error::Degenerate(
                        "orthonormal-set construction failed to find an independent direction".into(),
                    ));
                }
            }
        }
        Ok(Self::from_basis_unchecked(basis))
    }

    /// Wrap explicit columns, verifying orthonormality to 1e-10.
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(Error::InvalidParameter(format!(
                "basis must have between 1 and dim columns, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let gram = basis.transpose() * &basis;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - expect).abs() > ORTHONORMALITY_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "columns are not orthonormal: gram[{i},{j}] = {}",
                        gram[(i, j)]
                    )));
                }
            }
        }
        Ok(Self::from_basis_unchecked(basis))
    }

    fn from_basis_unchecked(basis: DMatrix<f64>) -> Self {
        let projector = &basis * basis.transpose();
        Self { basis, projector }
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of columns m.
    pub fn count(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Cached projector P_V = V V^T.
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    /// Column j as an owned unit vector.
    pub fn column(&self, j: usize) -> DVector<f64> {
        self.basis.column(j).into_owned()
    }
}
