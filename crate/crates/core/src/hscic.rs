//! Empirical HSCIC between predictions `Ŷ` and a set `A ∪ W` given `S`,
//! its gradient with respect to the predictions, and unconditional HSIC.
//!
//! With `w = ŵ(s)` the kernel ridge weights on the `S` samples, the squared
//! conditional cross-covariance norm at `s` expands to
//!
//! ```text
//! H²(s) = wᵀ(K_Ŷ ⊙ K_AW)w − 2·wᵀ((K_Ŷ w) ⊙ (K_AW w)) + (wᵀK_Ŷ w)(wᵀK_AW w)
//! ```
//!
//! Evaluated at every sample's own `sᵢ`, all weight vectors come out of a
//! single solve `W = (K_S + nλI)⁻¹ K_S` whose column `i` is `ŵ(sᵢ)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::kernel::{gram, FeatureMap, FeatureMode, KernelSpec, KrrSolver};
use crate::rng::{stream, Domain};

/// Form of the cross term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiddleTerm {
    /// `−2·wᵀ((K_Ŷ w) ⊙ (K_AW w))`, the exact squared-norm expansion.
    #[default]
    Exact,
    /// `−2·(wᵀK_Ŷ w)(wᵀK_AW w)`, the product-of-quadratic-forms variant.
    Literal,
}

/// Units in which the kernels see their arguments. Applied by the trainer and
/// the evaluator before any HSCIC or HSIC call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelScale {
    Raw,
    /// `A ∪ W` and `S` columns divided by their standard deviation, `Ŷ` by
    /// that of the targets.
    #[default]
    Standardized,
}

/// Population standard deviation of each column; constant or non-finite
/// columns get 1.
pub fn column_scales(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            let sd = (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect()
}

pub fn divide_columns(m: &DMatrix<f64>, scales: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, s) in out.column_iter_mut().zip(scales) {
        col /= *s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RffConfig {
    pub features: usize,
    #[serde(default)]
    pub mode: FeatureMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HscicConfig {
    pub y_kernel: KernelSpec,
    pub aw_kernel: KernelSpec,
    pub s_kernel: KernelSpec,
    pub lambda: f64,
    pub middle: MiddleTerm,
    /// Replace `K_Ŷ` and `K_AW` with random-feature Gram products.
    pub rff: Option<RffConfig>,
}

impl Default for HscicConfig {
    fn default() -> Self {
        HscicConfig {
            y_kernel: KernelSpec::default(),
            aw_kernel: KernelSpec::default(),
            s_kernel: KernelSpec::default(),
            lambda: 0.01,
            middle: MiddleTerm::Exact,
            rff: None,
        }
    }
}

impl HscicConfig {
    pub fn validate(&self) -> Result<()> {
        self.y_kernel.validate()?;
        self.aw_kernel.validate()?;
        self.s_kernel.validate()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return config(format!("ridge λ must be positive, got {}", self.lambda));
        }
        if let Some(rff) = &self.rff {
            if rff.features == 0 {
                return config("rff.features must be at least 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HscicValue {
    pub per_point: Vec<f64>,
    pub mean: f64,
}

impl HscicValue {
    fn from_points(per_point: Vec<f64>) -> Self {
        let mean = per_point.iter().sum::<f64>() / per_point.len() as f64;
        HscicValue { per_point, mean }
    }
}

/// Everything that depends only on `A ∪ W` and `S` for one batch.
#[derive(Debug, Clone)]
pub struct HscicState {
    cfg: HscicConfig,
    n: usize,
    /// Column `i` is `ŵ(sᵢ)`.
    weights: DMatrix<f64>,
    k_aw: DMatrix<f64>,
    /// `K_AW W`
    k_aw_w: DMatrix<f64>,
    /// `wᵢᵀ K_AW wᵢ`
    aw_quad: Vec<f64>,
}

fn check_rows(ys: &DMatrix<f64>, n: usize) -> Result<()> {
    if ys.nrows() != n {
        return Err(Error::Dimension(format!(
            "predictions have {} rows, state was built for {n}",
            ys.nrows()
        )));
    }
    Ok(())
}

/// `Σⱼ A_ji B_ji` for every column `i`.
fn column_dots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter()
        .zip(b.column_iter())
        .map(|(x, y)| x.dot(&y))
        .collect()
}

impl HscicState {
    pub fn new(cfg: HscicConfig, aws: &DMatrix<f64>, ss: &DMatrix<f64>) -> Result<Self> {
        cfg.validate()?;
        let n = aws.nrows();
        if ss.nrows() != n {
            return Err(Error::Dimension(format!(
                "A ∪ W has {n} rows, S has {}",
                ss.nrows()
            )));
        }
        if n == 0 {
            return config("HSCIC needs at least one sample");
        }
        let solver = KrrSolver::new(cfg.s_kernel, ss.clone(), cfg.lambda)?;
        let weights = solver.training_weights();
        let k_aw = match &cfg.rff {
            Some(rff) if aws.ncols() > 0 => {
                let mut rng = stream(rff.seed, Domain::Fourier, 1);
                FeatureMap::sample(
                    &cfg.aw_kernel,
                    aws.ncols(),
                    rff.features,
                    rff.mode,
                    &mut rng,
                )?
                .gram(aws)?
            }
            _ => gram(&cfg.aw_kernel, aws)?,
        };
        let k_aw_w = &k_aw * &weights;
        let aw_quad = column_dots(&weights, &k_aw_w);
        Ok(HscicState {
            cfg,
            n,
            weights,
            k_aw,
            k_aw_w,
            aw_quad,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &HscicConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn k_aw(&self) -> &DMatrix<f64> {
        &self.k_aw
    }

    fn y_map(&self, dim: usize) -> Result<Option<FeatureMap>> {
        match &self.cfg.rff {
            None => Ok(None),
            Some(rff) => {
                let mut rng = stream(rff.seed, Domain::Fourier, 0);
                Ok(Some(FeatureMap::sample(
                    &self.cfg.y_kernel,
                    dim,
                    rff.features,
                    rff.mode,
                    &mut rng,
                )?))
            }
        }
    }

    fn k_y(&self, ys: &DMatrix<f64>, map: Option<&FeatureMap>) -> Result<DMatrix<f64>> {
        match map {
            None => gram(&self.cfg.y_kernel, ys),
            Some(m) => m.gram(ys),
        }
    }

    fn per_point(&self, k_y: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let w = &self.weights;
        let k_y_w = k_y * w;
        let hadamard = k_y.component_mul(&self.k_aw);
        let first = column_dots(w, &(hadamard * w));
        let y_quad = column_dots(w, &k_y_w);
        let cross: Vec<f64> = match self.cfg.middle {
            MiddleTerm::Exact => column_dots(w, &k_y_w.component_mul(&self.k_aw_w)),
            MiddleTerm::Literal => y_quad
                .iter()
                .zip(&self.aw_quad)
                .map(|(a, b)| a * b)
                .collect(),
        };
        let values = (0..self.n)
            .map(|i| first[i] - 2.0 * cross[i] + y_quad[i] * self.aw_quad[i])
            .collect();
        (values, k_y_w)
    }

    pub fn value(&self, ys: &DMatrix<f64>) -> Result<HscicValue> {
        check_rows(ys, self.n)?;
        let map = self.y_map(ys.ncols())?;
        let k_y = self.k_y(ys, map.as_ref())?;
        Ok(HscicValue::from_points(self.per_point(&k_y).0))
    }

    /// Derivative of the mean of `H²(sᵢ)` with respect to the entries of `K_Ŷ`.
    fn kernel_gradient(&self) -> DMatrix<f64> {
        let w = &self.weights;
        let n = self.n as f64;
        let mut scaled = w.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.aw_quad[i];
        }
        let coeff = match self.cfg.middle {
            // −2 (W ⊙ K_AW W) + W diag(c)
            MiddleTerm::Exact => scaled - w.component_mul(&self.k_aw_w) * 2.0,
            // −2 W diag(c) + W diag(c)
            MiddleTerm::Literal => -scaled,
        };
        let first = (w * w.transpose()).component_mul(&self.k_aw);
        (first + coeff * w.transpose()) / n
    }

    pub fn value_and_grad(&self, ys: &DMatrix<f64>) -> Result<(HscicValue, DMatrix<f64>)> {
        check_rows(ys, self.n)?;
        let map = self.y_map(ys.ncols())?;
        let k_y = self.k_y(ys, map.as_ref())?;
        let (values, _) = self.per_point(&k_y);
        let g = self.kernel_gradient();
        let grad = match &map {
            None => exact_chain(&g, &k_y, ys, self.cfg.y_kernel.lengthscale),
            Some(m) => fourier_chain(&g, m, ys)?,
        };
        Ok((HscicValue::from_points(values), grad))
    }

    pub fn grad_y(&self, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.value_and_grad(ys)?.1)
    }
}

/// Chains `∂L/∂K_Ŷ` through the Gaussian kernel:
/// `∂k(yᵢ, yⱼ)/∂yᵢ = k(yᵢ, yⱼ)(yⱼ − yᵢ)/ℓ²`.
fn exact_chain(
    g: &DMatrix<f64>,
    k_y: &DMatrix<f64>,
    ys: &DMatrix<f64>,
    lengthscale: f64,
) -> DMatrix<f64> {
    let p = (g + g.transpose()).component_mul(k_y);
    let row_sums: Vec<f64> = p.row_iter().map(|r| r.sum()).collect();
    let mut out = &p * ys;
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row -= ys.row(i) * row_sums[i];
    }
    out / (lengthscale * lengthscale)
}

/// Same chain rule through a random-feature Gram `K = a·ΦΦᵀ`.
fn fourier_chain(g: &DMatrix<f64>, map: &FeatureMap, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let proj = map.project(ys)?;
    let l = proj.ncols() as f64;
    let cos = proj.map(f64::cos);
    let sin = proj.map(f64::sin);
    let gs = g + g.transpose();
    let q = match map.mode() {
        FeatureMode::PairedCosSin => {
            sin.component_mul(&(&gs * &cos)) - cos.component_mul(&(&gs * &sin))
        }
        FeatureMode::CosOnly => sin.component_mul(&(&gs * &cos)),
    };
    Ok(q * map.frequencies() * (-map.amplitude() / l))
}

pub fn hscic_sq(
    cfg: &HscicConfig,
    ys: &DMatrix<f64>,
    aws: &DMatrix<f64>,
    ss: &DMatrix<f64>,
) -> Result<HscicValue> {
    HscicState::new(*cfg, aws, ss)?.value(ys)
}

pub fn hscic_grad_y(
    cfg: &HscicConfig,
    ys: &DMatrix<f64>,
    aws: &DMatrix<f64>,
    ss: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    HscicState::new(*cfg, aws, ss)?.grad_y(ys)
}

fn centered(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows() as f64;
    let col_means: Vec<f64> = k.column_iter().map(|c| c.sum() / n).collect();
    let row_means: Vec<f64> = k.row_iter().map(|r| r.sum() / n).collect();
    let grand = col_means.iter().sum::<f64>() / n;
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
        k[(i, j)] - row_means[i] - col_means[j] + grand
    })
}

fn hsic_check(ys: &DMatrix<f64>, aws: &DMatrix<f64>) -> Result<()> {
    if ys.nrows() != aws.nrows() {
        return Err(Error::Dimension(format!(
            "HSIC inputs have {} and {} rows",
            ys.nrows(),
            aws.nrows()
        )));
    }
    if ys.nrows() < 2 {
        return config("HSIC needs at least two samples");
    }
    Ok(())
}

/// Biased V-statistic `(1/n²)·tr(K_Ŷ H K_AW H)`.
pub fn hsic(
    ys: &DMatrix<f64>,
    aws: &DMatrix<f64>,
    spec_y: &KernelSpec,
    spec_aw: &KernelSpec,
) -> Result<f64> {
    hsic_check(ys, aws)?;
    let n = ys.nrows() as f64;
    let ky = centered(&gram(spec_y, ys)?);
    let kaw = centered(&gram(spec_aw, aws)?);
    Ok(ky.component_mul(&kaw).sum() / (n * n))
}

pub fn hsic_value_and_grad(
    ys: &DMatrix<f64>,
    aws: &DMatrix<f64>,
    spec_y: &KernelSpec,
    spec_aw: &KernelSpec,
) -> Result<(f64, DMatrix<f64>)> {
    hsic_check(ys, aws)?;
    let n = ys.nrows() as f64;
    let k_y = gram(spec_y, ys)?;
    let kaw_c = centered(&gram(spec_aw, aws)?);
    let value = centered(&k_y).component_mul(&kaw_c).sum() / (n * n);
    // tr(K_Ŷ H K_AW H) is linear in K_Ŷ with coefficient matrix H K_AW H.
    let g = kaw_c / (n * n);
    Ok((value, exact_chain(&g, &k_y, ys, spec_y.lengthscale)))
}
