//! Central finite-difference verification of analytic gradients. Used by the
//! `gradcheck` CLI subcommand and by the test suite; the numeric side never
//! touches the backward rules it checks.

use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::rng::SeedRng;
use crate::numerics::tensor::{backward, no_grad, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Compare analytic gradients of `f` w.r.t. `params` against central finite
/// differences. Returns the worst relative error over all entries.
pub fn finite_diff_check(
    params: &[Tensor<f64>],
    f: &dyn Fn() -> Result<Tensor<f64>>,
    eps: f64,
) -> Result<f64> {
    for p in params {
        p.zero_grad();
    }
    let loss = f()?;
    backward(&loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let base = p.to_f64s();
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus[j] += eps;
            p.set_data(&plus);
            let lp = no_grad(|| f())?.item();
            let mut minus = base.clone();
            minus[j] -= eps;
            p.set_data(&minus);
            let lm = no_grad(|| f())?.item();
            p.set_data(&base);
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic[pi][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

/// Named gradient checks over every differentiable op, on randomized small
/// shapes. Each case reduces the op output to a scalar through a fixed random
/// weighting so no gradient entry can cancel structurally.
pub fn op_names() -> Vec<&'static str> {
    vec![
        "matmul",
        "add",
        "sub",
        "mul",
        "div",
        "add_bias",
        "relu",
        "gelu",
        "sigmoid",
        "layer_norm",
        "embedding",
        "concat_rows",
        "concat_cols",
        "slice",
        "transpose",
        "sum",
        "mean",
        "softmax",
        "cross_entropy",
        "bce",
        "group_mean",
    ]
}

fn weighted_to_scalar(out: &Tensor<f64>, rng_seed: u64) -> Result<Tensor<f64>> {
    let mut rng = SeedRng::new(rng_seed);
    let w = Tensor::rand_uniform(out.shape().to_vec(), 1.0, &mut rng);
    Ok(ops::sum(&ops::mul(out, &w)?))
}

pub fn check_op(name: &str, seed: u64) -> Result<f64> {
    let mut rng = SeedRng::new(seed);
    // relu inputs kept away from the kink
    let mut away = |shape: Vec<usize>| {
        let t = Tensor::<f64>::rand_uniform(shape, 1.0, &mut rng);
        let d: Vec<f64> = t
            .to_f64s()
            .iter()
            .map(|&x| if x.abs() < 0.15 { x + 0.3 * x.signum().max(0.5) } else { x })
            .collect();
        Tensor::from_f64s(t.shape().to_vec(), &d)
    };
    match name {
        "matmul" => {
            let a = away(vec![3, 4]).requires_grad();
            let b = away(vec![4, 2]).requires_grad();
            let params = [a.clone(), b.clone()];
            finite_diff_check(&params, &move || weighted_to_scalar(&ops::matmul(&a, &b)?, seed + 1), DEFAULT_EPS)
        }
        "add" | "sub" | "mul" | "div" => {
            let a = away(vec![3, 3]).requires_grad();
            let b = ops::add_scalar(&away(vec![3, 3]), 2.0); // keep divisors away from 0
            let b = Tensor::from_f64s(vec![3, 3], &b.to_f64s()).requires_grad();
            let params = [a.clone(), b.clone()];
            let name = name.to_string();
            finite_diff_check(
                &params,
                &move || {
                    let out = match name.as_str() {
                        "add" => ops::add(&a, &b)?,
                        "sub" => ops::sub(&a, &b)?,
                        "mul" => ops::mul(&a, &b)?,
                        _ => ops::div(&a, &b)?,
                    };
                    weighted_to_scalar(&out, seed + 1)
                },
                DEFAULT_EPS,
            )
        }
        "add_bias" => {
            let x = away(vec![4, 3]).requires_grad();
            let b = away(vec![3]).requires_grad();
            let params = [x.clone(), b.clone()];
            finite_diff_check(&params, &move || weighted_to_scalar(&ops::add_bias(&x, &b)?, seed + 1), DEFAULT_EPS)
        }
        "relu" | "gelu" | "sigmoid" => {
            let x = away(vec![4, 4]).requires_grad();
            let params = [x.clone()];
            let name = name.to_string();
            finite_diff_check(
                &params,
                &move || {
                    let out = match name.as_str() {
                        "relu" => ops::relu(&x),
                        "gelu" => ops::gelu(&x),
                        _ => ops::sigmoid(&x),
                    };
                    weighted_to_scalar(&out, seed + 1)
                },
                DEFAULT_EPS,
            )
        }
        "layer_norm" => {
            let x = away(vec![3, 6]).requires_grad();
            let g = away(vec![6]).requires_grad();
            let b = away(vec![6]).requires_grad();
            let params = [x.clone(), g.clone(), b.clone()];
            finite_diff_check(
                &params,
                &move || weighted_to_scalar(&ops::layer_norm(&x, &g, &b, 1e-5)?, seed + 1),
                DEFAULT_EPS,
            )
        }
        "embedding" => {
            let t = away(vec![5, 3]).requires_grad();
            let params = [t.clone()];
            finite_diff_check(
                &params,
                &move || weighted_to_scalar(&ops::embedding(&t, &[4, 0, 4, 2])?, seed + 1),
                DEFAULT_EPS,
            )
        }
        "concat_rows" => {
            let a = away(vec![2, 3]).requires_grad();
            let b = away(vec![3, 3]).requires_grad();
            let params = [a.clone(), b.clone()];
            finite_diff_check(
                &params,
                &move || weighted_to_scalar(&ops::concat_rows(&[a.clone(), b.clone()])?, seed + 1),
                DEFAULT_EPS,
            )
        }
        "concat_cols" => {
            let a = away(vec![3, 2]).requires_grad();
            let b = away(vec![3, 4]).requires_grad();
            let params = [a.clone(), b.clone()];
            finite_diff_check(
                &params,
                &move || weighted_to_scalar(&ops::concat_cols(&[a.clone(), b.clone()])?, seed + 1),
                DEFAULT_EPS,
            )
        }
        "slice" => {
            let x = away(vec![4, 5]).requires_grad();
            let params = [x.clone()];
            finite_diff_check(
                &params,
                &move || {
                    let r = ops::slice_rows(&x, 1, 3)?;
                    let c = ops::slice_cols(&r, 1, 4)?;
                    weighted_to_scalar(&c, seed + 1)
                },
                DEFAULT_EPS,
            )
        }
        "transpose" => {
            let x = away(vec![3, 5]).requires_grad();
            let params = [x.clone()];
            finite_diff_check(&params, &move || weighted_to_scalar(&ops::transpose(&x), seed + 1), DEFAULT_EPS)
        }
        "sum" => {
            let x = away(vec![3, 3]).requires_grad();
            let params = [x.clone()];
            finite_diff_check(&params, &move || Ok(ops::sum(&x)), DEFAULT_EPS)
        }
        "mean" => {
            let x = away(vec![2, 5]).requires_grad();
            let params = [x.clone()];
            finite_diff_check(&params, &move || Ok(ops::mean(&x)), DEFAULT_EPS)
        }
        "softmax" => {
            let x = away(vec![3, 4]).requires_grad();
            let params = [x.clone()];
            finite_diff_check(
                &params,
                &move || weighted_to_scalar(&ops::softmax(&x, 1)?, seed + 1),
                DEFAULT_EPS,
            )
        }
        "cross_entropy" => {
            let x = away(vec![4, 6]).requires_grad();
            let params = [x.clone()];
            finite_diff_check(
                &params,
                &move || ops::cross_entropy_logits(&x, &[1, 5, 0, 3], &[true, false, true, true]),
                DEFAULT_EPS,
            )
        }
        "bce" => {
            let x = away(vec![6]).requires_grad();
            let params = [x.clone()];
            finite_diff_check(
                &params,
                &move || ops::bce_with_logits(&x, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0]),
                DEFAULT_EPS,
            )
        }
        "group_mean" => {
            let x = away(vec![5, 3]).requires_grad();
            let groups = vec![vec![0, 2, 4], vec![1], vec![3, 0]];
            let params = [x.clone()];
            finite_diff_check(
                &params,
                &move || weighted_to_scalar(&ops::group_mean(&x, &groups)?, seed + 1),
                DEFAULT_EPS,
            )
        }
        other => Err(Error::Contract(format!("unknown op '{other}'"))),
    }
}
