//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.

mod array;
pub mod checkpoint;
mod ops;
mod optim;
mod params;
mod random;
mod tape;

pub use array::Array;
pub use optim::Adam;
pub use params::{ParamId, Parameter, ParameterStore};
pub use random::{binary_concrete_sample, gaussian_sample, logistic_noise};
pub use tape::{Tape, Tensor};

pub(crate) use ops::softmax_in_place;

/// Seeded generator used for every stochastic draw.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
