//! Gaussian kernels, kernel ridge regression weights and random Fourier
//! features. Samples are matrix rows throughout.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// `exp(-345) ≈ 1e-150`: products of two such entries would be subnormal.
pub const KERNEL_CUTOFF: f64 = 345.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Gaussian,
}

/// `k(x, y) = amplitude · exp(-‖x - y‖² / (2 · lengthscale²))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub family: KernelFamily,
    pub amplitude: f64,
    pub lengthscale: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::gaussian(1.0, 0.1)
    }
}

impl KernelSpec {
    pub fn gaussian(amplitude: f64, lengthscale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            amplitude,
            lengthscale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return config(format!(
                "kernel amplitude must be positive, got {}",
                self.amplitude
            ));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return config(format!(
                "kernel lengthscale must be positive, got {}",
                self.lengthscale
            ));
        }
        Ok(())
    }

    /// Values below `exp(-KERNEL_CUTOFF)` are returned as exactly zero, which
    /// keeps subnormals out of downstream matrix products.
    #[inline]
    pub fn eval_sq_dist(&self, d2: f64) -> f64 {
        let arg = d2 / (2.0 * self.lengthscale * self.lengthscale);
        if arg > KERNEL_CUTOFF {
            0.0
        } else {
            self.amplitude * (-arg).exp()
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.eval_sq_dist(d2)
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn kernel_matrix(
    spec: &KernelSpec,
    xs: &DMatrix<f64>,
    ys: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if xs.ncols() != ys.ncols() {
        return Err(Error::Dimension(format!(
            "kernel inputs have {} and {} columns",
            xs.ncols(),
            ys.ncols()
        )));
    }
    let a = rows_of(xs);
    let b = rows_of(ys);
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        spec.eval(&a[i], &b[j])
    }))
}

/// Symmetric Gram matrix of one sample set; fills only the upper triangle.
pub fn gram(spec: &KernelSpec, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let a = rows_of(xs);
    let n = a.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = spec.amplitude;
        for i in 0..j {
            let v = spec.eval(&a[i], &a[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Kernel ridge regression on a fixed set of training inputs, with the
/// factorization of `K + nλI` cached for repeated weight queries.
#[derive(Debug, Clone)]
pub struct KrrSolver {
    spec: KernelSpec,
    train: DMatrix<f64>,
    lambda: f64,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl KrrSolver {
    pub fn new(spec: KernelSpec, train: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return config(format!("ridge λ must be positive, got {lambda}"));
        }
        if train.nrows() == 0 {
            return config("kernel ridge regression needs at least one training point");
        }
        let gram = gram(&spec, &train)?;
        let n = train.nrows() as f64;
        let mut reg = gram.clone();
        for i in 0..train.nrows() {
            reg[(i, i)] += n * lambda;
        }
        let chol = Cholesky::new(reg)
            .ok_or_else(|| Error::Config("K + nλI is not positive definite".into()))?;
        Ok(KrrSolver {
            spec,
            train,
            lambda,
            gram,
            chol,
        })
    }

    pub fn len(&self) -> usize {
        self.train.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.train.nrows() == 0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `(K + nλI)⁻¹ k(·, s)` for one query point.
    pub fn weights(&self, query: &[f64]) -> Result<DVector<f64>> {
        if query.len() != self.train.ncols() {
            return Err(Error::Dimension(format!(
                "query has dimension {}, training inputs {}",
                query.len(),
                self.train.ncols()
            )));
        }
        let k = DVector::from_fn(self.len(), |i, _| {
            let row: Vec<f64> = self.train.row(i).iter().copied().collect();
            self.spec.eval(&row, query)
        });
        Ok(self.chol.solve(&k))
    }

    /// Weight vectors for every row of `queries`, as columns.
    pub fn weights_matrix(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = kernel_matrix(&self.spec, &self.train, queries)?;
        Ok(cholesky_solve_blocked(self.chol.l_dirty(), k))
    }

    /// Weight vectors at the training points themselves: `(K + nλI)⁻¹ K`.
    pub fn training_weights(&self) -> DMatrix<f64> {
        cholesky_solve_blocked(self.chol.l_dirty(), self.gram.clone())
    }

    /// Residual `‖(K + nλI) w − k‖∞` of a weight solve, for diagnostics.
    pub fn residual(&self, query: &[f64], w: &DVector<f64>) -> f64 {
        let n = self.len() as f64;
        let k = DVector::from_fn(self.len(), |i, _| {
            let row: Vec<f64> = self.train.row(i).iter().copied().collect();
            self.spec.eval(&row, query)
        });
        let lhs = &self.gram * w + w * (n * self.lambda);
        (lhs - k).amax()
    }
}

const SOLVE_BLOCK: usize = 32;

/// Solves `L Lᵀ X = B` for many right-hand sides, block row by block row so
/// the bulk of the work is matrix products. Only the lower triangle of `l`
/// is read.
pub fn cholesky_solve_blocked(l: &DMatrix<f64>, mut b: DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let m = b.ncols();
    let mut r0 = 0;
    while r0 < n {
        let r1 = (r0 + SOLVE_BLOCK).min(n);
        if r0 > 0 {
            let (done, mut rest) = b.rows_range_pair_mut(0..r0, r0..r1);
            rest.gemm(-1.0, &l.view((r0, 0), (r1 - r0, r0)), &done, 1.0);
        }
        let diag = l.view((r0, r0), (r1 - r0, r1 - r0)).lower_triangle();
        let mut blk = b.view_mut((r0, 0), (r1 - r0, m));
        diag.solve_lower_triangular_mut(&mut blk);
        r0 = r1;
    }
    let lt = l.transpose();
    let mut r1 = n;
    while r1 > 0 {
        let r0 = r1.saturating_sub(SOLVE_BLOCK);
        if r1 < n {
            let (mut cur, done) = b.rows_range_pair_mut(r0..r1, r1..n);
            cur.gemm(-1.0, &lt.view((r0, r1), (r1 - r0, n - r1)), &done, 1.0);
        }
        let diag = lt.view((r0, r0), (r1 - r0, r1 - r0)).upper_triangle();
        let mut blk = b.view_mut((r0, 0), (r1 - r0, m));
        diag.solve_upper_triangular_mut(&mut blk);
        r1 = r0;
    }
    b
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `[cos(ηᵀz), sin(ηᵀz)] / √l`; inner products are unbiased kernel estimates.
    #[default]
    PairedCosSin,
    /// `cos(ηᵀz) / √l` only. Biased: `φ(z)·φ(z)` is not 1 in general.
    CosOnly,
}

/// Random Fourier feature map for a Gaussian kernel.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    /// `l × dim`, rows drawn i.i.d. from `N(0, lengthscale⁻² I)`.
    frequencies: DMatrix<f64>,
    mode: FeatureMode,
    amplitude: f64,
}

impl FeatureMap {
    pub fn sample<R: Rng + ?Sized>(
        spec: &KernelSpec,
        dim: usize,
        l: usize,
        mode: FeatureMode,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        if l == 0 || dim == 0 {
            return config("feature map needs l ≥ 1 and dim ≥ 1");
        }
        let scale = 1.0 / spec.lengthscale;
        // Row-major draw order keeps each frequency contiguous in the stream.
        let mut draws = Vec::with_capacity(l * dim);
        for _ in 0..l * dim {
            let z: f64 = rng.sample(StandardNormal);
            draws.push(z * scale);
        }
        Ok(FeatureMap {
            frequencies: DMatrix::from_row_slice(l, dim, &draws),
            mode,
            amplitude: spec.amplitude,
        })
    }

    pub fn from_frequencies(frequencies: DMatrix<f64>, mode: FeatureMode, amplitude: f64) -> Self {
        FeatureMap {
            frequencies,
            mode,
            amplitude,
        }
    }

    pub fn l(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.frequencies
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::Dimension(format!(
                "inputs have dimension {d}, frequencies {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Projections `Z ηᵀ` (`n × l`).
    pub(crate) fn project(&self, zs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(zs.ncols())?;
        Ok(zs * self.frequencies.transpose())
    }

    /// Feature matrix, `n × 2l` (paired) or `n × l` (cos only). The amplitude
    /// is not folded in; see [`FeatureMap::gram`].
    pub fn features(&self, zs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let proj = self.project(zs)?;
        let (n, l) = (proj.nrows(), proj.ncols());
        let norm = 1.0 / (l as f64).sqrt();
        Ok(match self.mode {
            FeatureMode::PairedCosSin => DMatrix::from_fn(n, 2 * l, |i, j| {
                if j < l {
                    proj[(i, j)].cos() * norm
                } else {
                    proj[(i, j - l)].sin() * norm
                }
            }),
            FeatureMode::CosOnly => proj.map(|p| p.cos() * norm),
        })
    }

    /// Approximate kernel matrix `amplitude · Φ Φᵀ`.
    pub fn gram(&self, zs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let phi = self.features(zs)?;
        Ok(&phi * phi.transpose() * self.amplitude)
    }

    /// `(1/l) Σⱼ cos(ηⱼᵀ(z − z′))`, the normalized (unit-amplitude) estimate.
    pub fn kernel_estimate(&self, z: &[f64], z2: &[f64]) -> Result<f64> {
        self.check_dim(z.len())?;
        self.check_dim(z2.len())?;
        let l = self.l();
        let mut acc = 0.0;
        for j in 0..l {
            let mut dot = 0.0;
            for (k, (a, b)) in z.iter().zip(z2).enumerate() {
                dot += self.frequencies[(j, k)] * (a - b);
            }
            acc += dot.cos();
        }
        Ok(acc / l as f64)
    }
}

pub fn rff_features(map: &FeatureMap, zs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    map.features(zs)
}

pub fn rff_kernel_estimate(map: &FeatureMap, z: &[f64], z2: &[f64]) -> Result<f64> {
    map.kernel_estimate(z, z2)
}

/// Concatenates column blocks side by side; all blocks must share a row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != n) {
        return Err(Error::Dimension(
            "column blocks have different row counts".into(),
        ));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    Ok(out)
}
