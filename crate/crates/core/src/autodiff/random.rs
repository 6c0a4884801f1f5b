use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::array::Array;
use super::tape::Tensor;
use super::Rng;
use crate::error::{Error, Result};

/// I.i.d. `N(0, std^2)` entries. The draw is a constant on the tape.
pub fn gaussian_sample(shape: &[usize], std: f64, rng: &mut Rng) -> Result<Array> {
    if std < 0.0 || std.is_nan() {
        return Err(Error::arg(format!("noise std {std} must be >= 0")));
    }
    let n = shape.iter().product();
    let data = if std == 0.0 {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
            .collect::<Vec<f64>>()
    };
    Array::new(shape, data)
}

/// `logit(u)` for `u ~ Uniform(0, 1)`, kept away from 0 and 1.
pub fn logistic_noise(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
            (u / (1.0 - u)).ln()
        })
        .collect()
}

/// Reparameterized relaxed Bernoulli draw `alpha ~ BinConcrete(p, tau)`.
pub fn binary_concrete_sample<'t>(
    p: Tensor<'t>,
    temperature: f64,
    rng: &mut Rng,
) -> Result<Tensor<'t>> {
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(Error::arg(format!("temperature {temperature} must be > 0")));
    }
    let noise = logistic_noise(p.value().numel(), rng);
    p.binary_concrete(&noise, temperature)
}
