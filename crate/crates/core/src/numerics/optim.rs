use crate::error::{Error, Result};
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;

/// Adam with fixed defaults (lr 1e-3, β₁ 0.9, β₂ 0.999, ε 1e-8).
/// Updates are elementwise and sequential, so two runs over identical
/// parameters and gradients produce bit-identical results.
pub struct Adam<T: Real> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step_count: u64,
    params: Vec<Tensor<T>>,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: Vec<Tensor<T>>) -> Self {
        Adam::with_lr(params, 1e-3)
    }

    pub fn with_lr(params: Vec<Tensor<T>>, lr: f64) -> Self {
        let first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        let second = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Adam {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step_count: 0,
            params,
            first,
            second,
        }
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// Seed every parameter's gradient buffer with zeros so that parameters
    /// untouched by a particular loss still satisfy `step`'s contract.
    pub fn prime_grads(&self) {
        for p in &self.params {
            if p.grad().is_none() {
                p.accum_grad(&vec![T::zero(); p.len()]);
            }
        }
    }

    pub fn step(&mut self) -> Result<()> {
        self.step_count += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step_count as i32);
        let bc2 = one - self.beta2.powi(self.step_count as i32);
        for (i, p) in self.params.iter().enumerate() {
            let grad = p
                .grad()
                .ok_or_else(|| Error::Contract(format!("parameter {i} has no gradient")))?;
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let mut data = p.data().clone();
            for (j, &g) in grad.iter().enumerate() {
                m[j] = self.beta1 * m[j] + (one - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] = data[j] - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.set_data(&data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_is_fixed_point() {
        let p = Tensor::<f64>::from_f64s(vec![3], &[1.0, 2.0, 3.0]).requires_grad();
        let mut opt = Adam::new(vec![p.clone()]);
        p.accum_grad(&[0.0, 0.0, 0.0]);
        opt.step().unwrap();
        assert_eq!(p.to_f64s(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // with grad 1: m̂ = 1, v̂ = 1, so the update is lr/(1+ε) ≈ lr
        let p = Tensor::<f64>::from_f64s(vec![1], &[0.5]).requires_grad();
        let mut opt = Adam::new(vec![p.clone()]);
        p.accum_grad(&[1.0]);
        opt.step().unwrap();
        let moved = 0.5 - p.to_f64s()[0];
        assert!((moved - 1e-3).abs() < 1e-10, "moved {moved}");
    }

    #[test]
    fn missing_grad_is_contract_error() {
        let p = Tensor::<f64>::from_f64s(vec![1], &[0.5]).requires_grad();
        let mut opt = Adam::new(vec![p]);
        assert!(matches!(opt.step(), Err(Error::Contract(_))));
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let p = Tensor::<f64>::from_f64s(vec![2], &[0.3, -0.7]).requires_grad();
            let mut opt = Adam::new(vec![p.clone()]);
            for k in 0..50 {
                opt.zero_grad();
                p.accum_grad(&[0.01 * k as f64, -0.02]);
                opt.step().unwrap();
            }
            p.to_f64s().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
