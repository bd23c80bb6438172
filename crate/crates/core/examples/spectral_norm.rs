//! Power iteration with a persistent vector, compared against an SVD.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplore::nets::spectral::spectral_normalize;

fn main() -> xplore::Result<()> {
    let (rows, cols) = (16, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let exact = DMatrix::from_row_slice(rows, cols, &w).singular_values().max();
    println!("largest singular value by SVD {exact:.6}");

    // One iteration per call, as during training: the estimate tightens as `u` persists.
    let mut u = vec![1.0 / (rows as f64).sqrt(); rows];
    for call in 1..=30 {
        let normalized = spectral_normalize(&w, rows, cols, 1, &mut u)?;
        let sigma = DMatrix::from_row_slice(rows, cols, &normalized).singular_values().max();
        if call % 5 == 0 || call == 1 {
            println!("after {call:2} calls  normalized weight has sigma {sigma:.6}");
        }
    }
    Ok(())
}
