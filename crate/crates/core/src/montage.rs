//! Binary PPM (P6) image grids.

use std::fs;
use std::path::Path;

use crate::data::ImageSet;
use crate::error::{invalid, Result};

/// Concatenates two image sets of the same geometry, `a` first.
pub fn stack(a: &ImageSet, b: &ImageSet) -> Result<ImageSet> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return invalid(format!(
            "cannot stack {}x{}x{} images on {}x{}x{}",
            b.channels, b.height, b.width, a.channels, a.height, a.width
        ));
    }
    let mut pixels = a.pixels.clone();
    pixels.extend_from_slice(&b.pixels);
    ImageSet::new(a.count + b.count, a.channels, a.height, a.width, pixels, None)
}

/// Maps `[-1, 1]` linearly onto `[0, 255]`, rounding to nearest.
pub fn to_byte(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

/// Tiles the images row-major into a `rows × cols` grid; unused cells stay black.
///
/// One-channel images are written as gray, three-channel images as RGB.
pub fn encode_montage(images: &ImageSet, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if images.count == 0 {
        return invalid("montage of an empty image list");
    }
    if rows == 0 || cols == 0 || rows * cols < images.count {
        return invalid(format!("{rows}x{cols} grid cannot hold {} images", images.count));
    }
    if images.channels != 1 && images.channels != 3 {
        return invalid(format!("montage needs 1 or 3 channels, got {}", images.channels));
    }
    let (h, w) = (images.height, images.width);
    let (gh, gw) = (rows * h, cols * w);
    let mut raster = vec![0u8; gh * gw * 3];
    for i in 0..images.count {
        let (oy, ox) = ((i / cols) * h, (i % cols) * w);
        let img = images.image(i);
        for y in 0..h {
            for x in 0..w {
                let px = ((oy + y) * gw + ox + x) * 3;
                for c in 0..3 {
                    let ch = if images.channels == 1 { 0 } else { c };
                    raster[px + c] = to_byte(img[(ch * h + y) * w + x]);
                }
            }
        }
    }
    let mut out = format!("P6\n{gw} {gh}\n255\n").into_bytes();
    out.extend_from_slice(&raster);
    Ok(out)
}

pub fn emit_montage(images: &ImageSet, rows: usize, cols: usize, path: &Path) -> Result<()> {
    fs::write(path, encode_montage(images, rows, cols)?)?;
    Ok(())
}

/// A near-square grid for `n` images.
pub fn grid_for(n: usize) -> (usize, usize) {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    (n.div_ceil(cols).max(1), cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_map() {
        assert_eq!((to_byte(-1.0), to_byte(0.0), to_byte(1.0)), (0, 128, 255));
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_for(4), (2, 2));
        assert_eq!(grid_for(5), (2, 3));
        assert_eq!(grid_for(1), (1, 1));
    }
}
