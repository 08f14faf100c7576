use rand::Rng;

use crate::numkernel::Tensor2;

/// `rows × cols` with entries drawn from U[-bound, bound].
pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor2::from_vec(rows, cols, data).expect("length matches")
}

/// Bound used for `W_c`.
pub const CHAR_EMBED_BOUND: f64 = 0.05;
