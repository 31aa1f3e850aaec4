use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use super::{
    applied_gate, check_features, ksu_forward, load_balance_loss, route_with, shape_err, sigmoid,
    top_k_margin, unit_apply, bce_loss, dispatch_fractions, GateMode, RoutingConfig, RoutingParams,
    BCE_CLAMP, WEATHER_TAGS,
};
use crate::error::{Error, Result};
use crate::imaging::SeededRng;

/// Tokens per grad-check instance.
pub const GRADCHECK_TOKENS: usize = 2;
/// Denominator floor for the relative error `|a - n| / max(|a|, |n|, floor)`.
pub const REL_ERROR_FLOOR: f64 = 1e-6;
const MAX_ATTEMPTS: usize = 1000;

/// Scalar objective differentiated by [`backward`]:
///
/// ```text
/// J = <upstream, mixture_output> + lambda_bce * bce(instructor, tags) + lambda_lb * lb
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub upstream: DMatrix<f64>,
    pub tags: DMatrix<f64>,
    pub lambda_bce: f64,
    pub lambda_lb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: RoutingParams,
    /// Gradient with respect to the pre-KSU features.
    pub input: DMatrix<f64>,
}

fn objective_value(
    f_enc: &DMatrix<f64>,
    params: &RoutingParams,
    config: &RoutingConfig,
    obj: &Objective,
    fixed: Option<&[Vec<usize>]>,
) -> Result<(f64, super::SelectionResult)> {
    let fbar = ksu_forward(f_enc, params)?;
    let (out, sel, _) = route_with(&fbar, params, config, fixed);
    let probs = (&fbar * &params.instructor).map(sigmoid);
    let mut j = obj.upstream.dot(&out);
    if obj.lambda_bce != 0.0 {
        j += obj.lambda_bce * bce_loss(&probs, &obj.tags)?;
    }
    if obj.lambda_lb != 0.0 {
        j += obj.lambda_lb * load_balance_loss(&sel);
    }
    Ok((j, sel))
}

fn check_objective(f_enc: &DMatrix<f64>, config: &RoutingConfig, obj: &Objective) -> Result<()> {
    let t = f_enc.nrows();
    if obj.upstream.shape() != (t, config.dim) {
        return Err(shape_err("upstream gradient", (t, config.dim), obj.upstream.shape()));
    }
    if obj.tags.shape() != (t, WEATHER_TAGS) {
        return Err(shape_err("tags", (t, WEATHER_TAGS), obj.tags.shape()));
    }
    Ok(())
}

/// Analytic gradients of the [`Objective`] with the top-K selection held
/// fixed. The load-balance term is differentiated through the mean router
/// probabilities only; dispatch fractions are constants.
pub fn backward(
    f_enc: &DMatrix<f64>,
    params: &RoutingParams,
    config: &RoutingConfig,
    obj: &Objective,
) -> Result<(f64, Gradients)> {
    params.check(config)?;
    check_features(f_enc, config.dim)?;
    check_objective(f_enc, config, obj)?;

    let (t, d, b) = (f_enc.nrows(), config.dim, config.units);
    let fbar = ksu_forward(f_enc, params)?;
    let (out, sel, _) = route_with(&fbar, params, config, None);
    let z_inst = &fbar * &params.instructor;
    let probs = z_inst.map(sigmoid);
    let value = obj.upstream.dot(&out)
        + obj.lambda_bce * bce_loss(&probs, &obj.tags)?
        + obj.lambda_lb * load_balance_loss(&sel);

    let mut g = RoutingParams::zeros(config);
    let mut dfbar = DMatrix::<f64>::zeros(t, d);
    let frac = dispatch_fractions(&sel);
    let n_bce = (t * WEATHER_TAGS) as f64;

    for i in 0..t {
        let x = fbar.row(i).into_owned();
        let xt = x.transpose();
        let up = obj.upstream.row(i).into_owned();
        let gate_row: Vec<f64> = sel.gate.row(i).iter().copied().collect();
        let chosen = &sel.indices[i];
        let w = applied_gate(&gate_row, chosen, config.gate_mode);
        let mut dx = RowDVector::<f64>::zeros(d);

        // mixture: out_i = sum_j w_j U_kj(x)
        let mut dw = Vec::with_capacity(chosen.len());
        for (&k, &wk) in chosen.iter().zip(&w) {
            dw.push(up.dot(&unit_apply(params, k, &x)));
            g.unit_w[k] += &xt * &up * wk;
            g.unit_b[k] += up.transpose() * wk;
            dx += &up * params.unit_w[k].transpose() * wk;
        }

        // applied gate weights -> full softmax gate
        let mut dgate = vec![0.0; b];
        match config.gate_mode {
            GateMode::Literal => {
                for (&k, &v) in chosen.iter().zip(&dw) {
                    dgate[k] = v;
                }
            }
            GateMode::Renormalized => {
                let s: f64 = chosen.iter().map(|&k| gate_row[k]).sum();
                let inner: f64 = dw.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (&k, &v) in chosen.iter().zip(&dw) {
                    dgate[k] = (v - inner) / s;
                }
            }
        }
        let dz_gate = softmax_backward(&gate_row, &dgate);
        g.gate += &xt * &dz_gate;
        dx += &dz_gate * params.gate.transpose();

        // load balance through P_k = mean_t p_tk
        if obj.lambda_lb != 0.0 {
            let router_row: Vec<f64> = sel.router.row(i).iter().copied().collect();
            let dp: Vec<f64> = frac.iter().map(|f| obj.lambda_lb * b as f64 * f / t as f64).collect();
            let dz_r = softmax_backward(&router_row, &dp);
            g.router += &xt * &dz_r;
            dx += &dz_r * params.router.transpose();
        }

        // instructor bce
        if obj.lambda_bce != 0.0 {
            let dz = RowDVector::from_fn(WEATHER_TAGS, |_, c| {
                let p = probs[(i, c)];
                if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                    0.0
                } else {
                    obj.lambda_bce * (p - obj.tags[(i, c)]) / n_bce
                }
            });
            g.instructor += &xt * &dz;
            dx += &dz * params.instructor.transpose();
        }

        dfbar.set_row(i, &dx);
    }

    g.ksu_w = f_enc.transpose() * &dfbar;
    g.ksu_b = dfbar.row_sum().transpose();
    let input = &dfbar * params.ksu_w.transpose();
    Ok((value, Gradients { params: g, input }))
}

/// `p * (dp - <dp, p>)` as a row vector.
fn softmax_backward(p: &[f64], dp: &[f64]) -> RowDVector<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    RowDVector::from_iterator(p.len(), p.iter().zip(dp).map(|(pk, dk)| pk * (dk - inner)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub h: f64,
    pub config: RoutingConfig,
    pub tokens: usize,
    /// Instances discarded because a top-K margin was below `10 h`.
    pub rejected: usize,
    pub min_margin: f64,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter block holding the largest relative error.
    pub worst_block: String,
}

fn flat_get_mut(params: &mut RoutingParams, mut idx: usize) -> &mut f64 {
    for block in params.blocks_mut() {
        if idx < block.len() {
            return &mut block[idx];
        }
        idx -= block.len();
    }
    panic!("parameter index out of range")
}

/// Central-difference check of [`backward`] on one random instance drawn
/// from `seed`. Instances whose router top-K margin is below `10 h` are
/// redrawn, so the fixed-selection gradient equals the true one.
pub fn grad_check(config: &RoutingConfig, seed: u64, h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {h}")));
    }
    config.validate()?;
    let mut rng = SeededRng::new(seed, "routing/gradcheck");
    let t = GRADCHECK_TOKENS;
    let d = config.dim;

    let mut rejected = 0;
    for _ in 0..MAX_ATTEMPTS {
        let params = RoutingParams::random(config, &mut rng);
        let f_enc = DMatrix::from_fn(t, d, |_, _| rng.normal());
        let obj = Objective {
            upstream: DMatrix::from_fn(t, d, |_, _| rng.normal()),
            tags: DMatrix::from_fn(t, WEATHER_TAGS, |_, _| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }),
            lambda_bce: 1.0,
            lambda_lb: 1.0,
        };
        let fbar = ksu_forward(&f_enc, &params)?;
        let logits = &fbar * &params.router;
        let margin = (0..t)
            .map(|i| {
                let row: Vec<f64> = logits.row(i).iter().copied().collect();
                top_k_margin(&row, config.top_k)
            })
            .fold(f64::INFINITY, f64::min);
        if margin < 10.0 * h {
            rejected += 1;
            continue;
        }
        let (_, grads) = backward(&f_enc, &params, config, &obj)?;
        let (_, sel) = objective_value(&f_enc, &params, config, &obj, None)?;
        let fixed = sel.indices;

        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut worst = String::new();
        let mut compare = |a: f64, n: f64, name: &str| {
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(REL_ERROR_FLOOR);
            max_abs = max_abs.max(abs);
            if rel > max_rel {
                max_rel = rel;
                worst = name.to_owned();
            }
        };

        let analytic = grads.params.flatten();
        let names = params.block_names();
        let lens: Vec<usize> = params.clone().blocks_mut().iter().map(|b| b.len()).collect();
        let mut probe = params.clone();
        let mut idx = 0;
        for (name, len) in names.iter().zip(&lens) {
            for _ in 0..*len {
                let orig = *flat_get_mut(&mut probe, idx);
                *flat_get_mut(&mut probe, idx) = orig + h;
                let (jp, _) = objective_value(&f_enc, &probe, config, &obj, Some(&fixed))?;
                *flat_get_mut(&mut probe, idx) = orig - h;
                let (jm, _) = objective_value(&f_enc, &probe, config, &obj, Some(&fixed))?;
                *flat_get_mut(&mut probe, idx) = orig;
                compare(analytic[idx], (jp - jm) / (2.0 * h), name);
                idx += 1;
            }
        }
        let mut x = f_enc.clone();
        for r in 0..t {
            for c in 0..d {
                let orig = x[(r, c)];
                x[(r, c)] = orig + h;
                let (jp, _) = objective_value(&x, &params, config, &obj, Some(&fixed))?;
                x[(r, c)] = orig - h;
                let (jm, _) = objective_value(&x, &params, config, &obj, Some(&fixed))?;
                x[(r, c)] = orig;
                compare(grads.input[(r, c)], (jp - jm) / (2.0 * h), "input");
            }
        }
        return Ok(GradCheckReport {
            seed,
            h,
            config: *config,
            tokens: t,
            rejected,
            min_margin: margin,
            checked: analytic.len() + t * d,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            worst_block: worst,
        });
    }
    Err(Error::InvalidInput(format!(
        "no boundary-safe instance found in {MAX_ATTEMPTS} draws (h = {h})"
    )))
}
