use ndarray::Array2;
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;

/// The seeded generator used for every random draw in the crate.
pub type Rng = ChaCha8Rng;

/// Glorot uniform initialisation: `U(-sqrt(6/(fan_in+fan_out)), +...)`.
pub fn xavier_uniform(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}
