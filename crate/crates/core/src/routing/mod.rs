//! Weather-aware sparse top-K routing at toy scale.
//!
//! Shapes (rows are tokens):
//!
//! ```text
//! f_bar  = f_enc * W_ksu + b_ksu                    T x D
//! p      = softmax(f_bar * R)                       T x B   router
//! g      = softmax(f_bar * W_gate)                  T x B   gate
//! T_t    = TopK(row t of f_bar * R)                 K indices, ascending
//! out_t  = sum_{k in T_t} g_tk * (f_bar_t * A_k + b_k)
//! w_t    = sigmoid(f_bar_t * W_inst)                4 weather tags
//! ```

mod backward;
mod train;

pub use backward::{backward, grad_check, GradCheckReport, Gradients, Objective, GRADCHECK_TOKENS};
pub use train::{demo, train_step, DemoReport, TrainBatch, DEMO_TOKENS_PER_TAG};

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::SeededRng;

/// Number of weather tags predicted by the instructor (H, RS, RD, S).
pub const WEATHER_TAGS: usize = 4;
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Softmax over all B units, restricted to the selected set as is.
    #[default]
    Literal,
    /// Gate weights renormalized to sum to 1 over the selected set.
    Renormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub units: usize,
    pub top_k: usize,
    pub dim: usize,
    #[serde(default)]
    pub gate_mode: GateMode,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            units: 25,
            top_k: 10,
            dim: 16,
            gate_mode: GateMode::Literal,
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.units == 0 {
            return Err(Error::InvalidConfig(format!(
                "B and D must be positive, got B={} D={}",
                self.units, self.dim
            )));
        }
        if self.top_k == 0 || self.top_k > self.units {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= K <= B, got K={} B={}",
                self.top_k, self.units
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_per: f64,
    pub lambda_bce: f64,
    pub lambda_lb: f64,
    pub lambda_depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_per: 0.1,
            lambda_bce: 0.001,
            lambda_lb: 0.01,
            lambda_depth: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingParams {
    pub ksu_w: DMatrix<f64>,
    pub ksu_b: DVector<f64>,
    pub router: DMatrix<f64>,
    pub gate: DMatrix<f64>,
    pub unit_w: Vec<DMatrix<f64>>,
    pub unit_b: Vec<DVector<f64>>,
    pub instructor: DMatrix<f64>,
}

fn shape_err(what: &str, expected: (usize, usize), actual: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        expected: format!("{what} {}x{}", expected.0, expected.1),
        actual: format!("{}x{}", actual.0, actual.1),
    }
}

fn check_shape(what: &str, m: &DMatrix<f64>, expected: (usize, usize)) -> Result<()> {
    if m.shape() != expected {
        return Err(shape_err(what, expected, m.shape()));
    }
    Ok(())
}

impl RoutingParams {
    /// Weights ~ N(0, 1/D), biases ~ N(0, 0.01).
    pub fn random(config: &RoutingConfig, rng: &mut SeededRng) -> Self {
        let d = config.dim;
        let b = config.units;
        let ws = 1.0 / (d as f64).sqrt();
        let mut mat = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| s * rng.normal());
        let ksu_w = mat(d, d, ws);
        let router = mat(d, b, ws);
        let gate = mat(d, b, ws);
        let instructor = mat(d, WEATHER_TAGS, ws);
        let unit_w = (0..b).map(|_| mat(d, d, ws)).collect();
        let mut vec = |n: usize| DVector::from_fn(n, |_, _| 0.1 * rng.normal());
        let ksu_b = vec(d);
        let unit_b = (0..b).map(|_| vec(d)).collect();
        Self {
            ksu_w,
            ksu_b,
            router,
            gate,
            unit_w,
            unit_b,
            instructor,
        }
    }

    pub fn zeros(config: &RoutingConfig) -> Self {
        let (d, b) = (config.dim, config.units);
        Self {
            ksu_w: DMatrix::zeros(d, d),
            ksu_b: DVector::zeros(d),
            router: DMatrix::zeros(d, b),
            gate: DMatrix::zeros(d, b),
            unit_w: vec![DMatrix::zeros(d, d); b],
            unit_b: vec![DVector::zeros(d); b],
            instructor: DMatrix::zeros(d, WEATHER_TAGS),
        }
    }

    pub fn check(&self, config: &RoutingConfig) -> Result<()> {
        config.validate()?;
        let (d, b) = (config.dim, config.units);
        check_shape("ksu weight", &self.ksu_w, (d, d))?;
        check_shape("router", &self.router, (d, b))?;
        check_shape("gate", &self.gate, (d, b))?;
        check_shape("instructor", &self.instructor, (d, WEATHER_TAGS))?;
        if self.ksu_b.len() != d {
            return Err(shape_err("ksu bias", (d, 1), (self.ksu_b.len(), 1)));
        }
        if self.unit_w.len() != b || self.unit_b.len() != b {
            return Err(shape_err("units", (b, 1), (self.unit_w.len(), 1)));
        }
        for (w, bias) in self.unit_w.iter().zip(&self.unit_b) {
            check_shape("unit weight", w, (d, d))?;
            if bias.len() != d {
                return Err(shape_err("unit bias", (d, 1), (bias.len(), 1)));
            }
        }
        if self.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("routing parameters must be finite".into()));
        }
        Ok(())
    }

    /// All parameters in a fixed order: ksu_w, ksu_b, router, gate,
    /// (unit_w, unit_b) per unit, instructor. Matrices are column-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(self.ksu_w.as_slice());
        v.extend_from_slice(self.ksu_b.as_slice());
        v.extend_from_slice(self.router.as_slice());
        v.extend_from_slice(self.gate.as_slice());
        for (w, b) in self.unit_w.iter().zip(&self.unit_b) {
            v.extend_from_slice(w.as_slice());
            v.extend_from_slice(b.as_slice());
        }
        v.extend_from_slice(self.instructor.as_slice());
        v
    }

    pub fn len(&self) -> usize {
        self.ksu_w.len()
            + self.ksu_b.len()
            + self.router.len()
            + self.gate.len()
            + self.unit_w.iter().map(|m| m.len()).sum::<usize>()
            + self.unit_b.iter().map(|m| m.len()).sum::<usize>()
            + self.instructor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable views of every parameter block, in [`flatten`](Self::flatten) order.
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.ksu_w.as_mut_slice(),
            self.ksu_b.as_mut_slice(),
            self.router.as_mut_slice(),
            self.gate.as_mut_slice(),
        ];
        for (w, b) in self.unit_w.iter_mut().zip(self.unit_b.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out.push(self.instructor.as_mut_slice());
        out
    }

    /// Names of the blocks returned by [`blocks_mut`](Self::blocks_mut).
    pub fn block_names(&self) -> Vec<String> {
        let mut out: Vec<String> = ["ksu_w", "ksu_b", "router", "gate"].map(String::from).to_vec();
        for k in 0..self.unit_w.len() {
            out.push(format!("unit_w[{k}]"));
            out.push(format!("unit_b[{k}]"));
        }
        out.push("instructor".into());
        out
    }

    /// `self += scale * other`, block by block.
    pub fn axpy(&mut self, scale: f64, other: &RoutingParams) {
        let src = other.flatten();
        let mut i = 0;
        for block in self.blocks_mut() {
            for v in block.iter_mut() {
                *v += scale * src[i];
                i += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected unit indices per token, ascending.
    pub indices: Vec<Vec<usize>>,
    /// Softmax gate weights over all B units (T x B).
    pub gate: DMatrix<f64>,
    /// Softmax router probabilities over all B units (T x B).
    pub router: DMatrix<f64>,
}

impl SelectionResult {
    pub fn tokens(&self) -> usize {
        self.indices.len()
    }

    pub fn units(&self) -> usize {
        self.router.ncols()
    }
}

fn check_features(f: &DMatrix<f64>, dim: usize) -> Result<()> {
    if f.nrows() == 0 {
        return Err(Error::InvalidInput("feature batch needs at least one token".into()));
    }
    if f.ncols() != dim {
        return Err(shape_err("features", (f.nrows(), dim), f.shape()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("features must be finite".into()));
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    for mut row in out.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Indices of the `k` largest values, ties toward the lower index, returned
/// in ascending index order.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut picked = order[..k.min(values.len())].to_vec();
    picked.sort_unstable();
    picked
}

/// Gap between the K-th and (K+1)-th largest values (infinite when K = len).
pub fn top_k_margin(values: &[f64], k: usize) -> f64 {
    if k >= values.len() {
        return f64::INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[k - 1] - sorted[k]
}

pub fn ksu_forward(f_enc: &DMatrix<f64>, params: &RoutingParams) -> Result<DMatrix<f64>> {
    let d = params.ksu_w.nrows();
    check_features(f_enc, d)?;
    check_shape("ksu weight", &params.ksu_w, (d, d))?;
    if params.ksu_b.len() != d {
        return Err(shape_err("ksu bias", (d, 1), (params.ksu_b.len(), 1)));
    }
    let mut out = f_enc * &params.ksu_w;
    let bias = params.ksu_b.transpose();
    for mut row in out.row_iter_mut() {
        row += &bias;
    }
    Ok(out)
}

pub(crate) fn unit_apply(params: &RoutingParams, k: usize, x: &RowDVector<f64>) -> RowDVector<f64> {
    x * &params.unit_w[k] + params.unit_b[k].transpose()
}

/// Gate weights actually applied to the selected units of one token.
pub(crate) fn applied_gate(gate_row: &[f64], sel: &[usize], mode: GateMode) -> Vec<f64> {
    match mode {
        GateMode::Literal => sel.iter().map(|&k| gate_row[k]).collect(),
        GateMode::Renormalized => {
            let s: f64 = sel.iter().map(|&k| gate_row[k]).sum();
            sel.iter().map(|&k| gate_row[k] / s).collect()
        }
    }
}

pub(crate) fn route_with(
    fbar: &DMatrix<f64>,
    params: &RoutingParams,
    config: &RoutingConfig,
    fixed: Option<&[Vec<usize>]>,
) -> (DMatrix<f64>, SelectionResult, DMatrix<f64>) {
    let logits = fbar * &params.router;
    let router = softmax_rows(&logits);
    let gate = softmax_rows(&(fbar * &params.gate));
    let t = fbar.nrows();
    let indices: Vec<Vec<usize>> = match fixed {
        Some(sel) => sel.to_vec(),
        None => (0..t)
            .map(|i| {
                let row: Vec<f64> = logits.row(i).iter().copied().collect();
                top_k(&row, config.top_k)
            })
            .collect(),
    };
    let mut out = DMatrix::zeros(t, fbar.ncols());
    for i in 0..t {
        let x = fbar.row(i).into_owned();
        let grow: Vec<f64> = gate.row(i).iter().copied().collect();
        let w = applied_gate(&grow, &indices[i], config.gate_mode);
        let mut acc = RowDVector::zeros(fbar.ncols());
        for (&k, wk) in indices[i].iter().zip(w) {
            acc += unit_apply(params, k, &x) * wk;
        }
        out.set_row(i, &acc);
    }
    (
        out,
        SelectionResult {
            indices,
            gate,
            router,
        },
        logits,
    )
}

/// Sparse top-K mixture of the candidate units.
pub fn route(
    fbar: &DMatrix<f64>,
    params: &RoutingParams,
    config: &RoutingConfig,
) -> Result<(DMatrix<f64>, SelectionResult)> {
    params.check(config)?;
    check_features(fbar, config.dim)?;
    let (out, sel, _) = route_with(fbar, params, config, None);
    Ok((out, sel))
}

/// Multi-label weather probabilities, `sigmoid(f_bar * W_inst)`.
pub fn weather_instruct(fbar: &DMatrix<f64>, params: &RoutingParams) -> Result<DMatrix<f64>> {
    let d = params.instructor.nrows();
    check_features(fbar, d)?;
    check_shape("instructor", &params.instructor, (d, WEATHER_TAGS))?;
    Ok((fbar * &params.instructor).map(sigmoid))
}

/// Mean binary cross-entropy over all T x 4 entries. Probabilities are
/// clamped to `[1e-12, 1 - 1e-12]` first.
pub fn bce_loss(probs: &DMatrix<f64>, tags: &DMatrix<f64>) -> Result<f64> {
    if probs.shape() != tags.shape() {
        return Err(shape_err("tags", probs.shape(), tags.shape()));
    }
    if probs.is_empty() {
        return Err(Error::InvalidInput("bce of an empty batch".into()));
    }
    let mut s = 0.0;
    for (p, y) in probs.iter().zip(tags.iter()) {
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        s -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(s / probs.len() as f64)
}

/// Per-unit dispatch fractions `f_i = count_i / (T K)`.
pub fn dispatch_fractions(sel: &SelectionResult) -> Vec<f64> {
    let b = sel.units();
    let mut counts = vec![0usize; b];
    let mut total = 0usize;
    for row in &sel.indices {
        for &k in row {
            counts[k] += 1;
        }
        total += row.len();
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// `B * sum_i f_i P_i` with `P_i` the mean router probability of unit i.
///
/// Evaluated as `B * sum_i count_i * colsum_i / (T^2 K)` with compensated
/// column sums, so the uniform case returns exactly 1.
pub fn load_balance_loss(sel: &SelectionResult) -> f64 {
    let b = sel.units();
    let t = sel.tokens();
    let mut counts = vec![0usize; b];
    let mut picks = 0usize;
    for row in &sel.indices {
        for &k in row {
            counts[k] += 1;
        }
        picks += row.len();
    }
    let mut acc = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        acc += c as f64 * neumaier_sum(sel.router.column(i).iter().copied());
    }
    b as f64 * acc / (t as f64 * picks as f64)
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let s = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
        sum = s;
    }
    sum + comp
}

pub fn total_loss(l1: f64, l_per: f64, l_bce: f64, l_lb: f64, l_depth: f64, w: &LossWeights) -> Result<f64> {
    let parts = [l1, l_per, l_bce, l_lb, l_depth];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("loss components must be finite, got {parts:?}")));
    }
    let ws = [w.lambda_per, w.lambda_bce, w.lambda_lb, w.lambda_depth];
    if ws.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("loss weights must be finite and >= 0, got {ws:?}")));
    }
    Ok(l1 + w.lambda_per * l_per + w.lambda_bce * l_bce + w.lambda_lb * l_lb + w.lambda_depth * l_depth)
}

/// Partial derivatives of [`total_loss`] with respect to its five components.
pub fn total_loss_grad(w: &LossWeights) -> [f64; 5] {
    [1.0, w.lambda_per, w.lambda_bce, w.lambda_lb, w.lambda_depth]
}
