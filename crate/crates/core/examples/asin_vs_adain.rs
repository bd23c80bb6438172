//! ASIN takes its affine parameters from a cluster summary, AdaIN from a
//! style image. Both leave the output's channel means where they were told.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplore::norm::{adain_apply, asin_apply, NORM_EPS};
use xplore::selftest::random_mlp;
use xplore_tensor::{nn, Tensor};

fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new((0..shape.iter().product()).map(|_| rng.random_range(lo..hi)).collect(), shape)
}

fn main() -> xplore::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let content = random(&[2, 3, 6, 6], -2.0, 2.0, &mut rng);
    let style = random(&[2, 3, 6, 6], 0.0, 5.0, &mut rng);
    let summary = random(&[2, 4], -1.0, 1.0, &mut rng);

    let (mlp, store) = random_mlp(4, 3, 1)?;
    let p = store.bind(false);
    let (_, shift) = mlp.affine(&p, &summary, 0)?;
    let asin = asin_apply(&content, &summary, &mlp, &p, 0, NORM_EPS)?;
    let (asin_mean, _) = nn::instance_stats(&asin, 0.0)?;
    println!("ASIN  target means {:?}", rounded(shift.data()));
    println!("      output means {:?}", rounded(asin_mean.data()));

    let adain = adain_apply(&content, &style, NORM_EPS)?;
    let (style_mean, _) = nn::instance_stats(&style, 0.0)?;
    let (adain_mean, _) = nn::instance_stats(&adain, 0.0)?;
    println!("AdaIN style means  {:?}", rounded(style_mean.data()));
    println!("      output means {:?}", rounded(adain_mean.data()));
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
