//! `XFV1` feature files and `XIM1` image files.
//!
//! Both store single-precision payloads, so values pass through `f32` on
//! write; a matrix read back from disk round-trips bit-exactly.

use std::fs;
use std::path::Path;

use crate::data::features::FeatureMatrix;
use crate::data::images::ImageSet;
use crate::error::{Result, XploreError};
use crate::format::{check_finite_f32, Reader, Writer};

pub fn encode_features(m: &FeatureMatrix) -> Result<Vec<u8>> {
    if let Some(i) = m.values.iter().position(|v| !v.is_finite()) {
        return Err(XploreError::NonFinite(format!("feature value {i}")));
    }
    let mut w = Writer::new(b"XFV1");
    w.usize(m.rows)?;
    w.usize(m.cols)?;
    w.u8(m.normalized as u8);
    let vals: Vec<f32> = m.values.iter().map(|&v| v as f32).collect();
    check_finite_f32(&vals, "feature")?;
    w.f32s(&vals);
    Ok(w.buf)
}

pub fn decode_features(buf: &[u8]) -> Result<FeatureMatrix> {
    let mut r = Reader::open(buf, "XFV1", "feature file")?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let normalized = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(XploreError::Format(format!("normalized flag {f}"))),
    };
    let vals = r.f32s(n * d)?;
    r.finish()?;
    check_finite_f32(&vals, "feature")?;
    let mut m = FeatureMatrix::new(n, d, vals.into_iter().map(f64::from).collect())?;
    m.normalized = normalized;
    Ok(m)
}

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<()> {
    fs::write(path, encode_features(m)?)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    decode_features(&fs::read(path)?)
}

pub fn encode_images(set: &ImageSet) -> Result<Vec<u8>> {
    check_finite_f32(&set.pixels, "pixel")?;
    let mut w = Writer::new(b"XIM1");
    for v in [set.count, set.channels, set.height, set.width] {
        w.usize(v)?;
    }
    w.f32s(&set.pixels);
    match &set.truth_labels {
        Some(l) => {
            w.u8(1);
            w.u32s(l);
        }
        None => w.u8(0),
    }
    Ok(w.buf)
}

pub fn decode_images(buf: &[u8]) -> Result<ImageSet> {
    let mut r = Reader::open(buf, "XIM1", "image file")?;
    let (n, c, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let pixels = r.f32s(n * c * h * w)?;
    check_finite_f32(&pixels, "pixel")?;
    let labels = match r.u8()? {
        0 => None,
        1 => Some(r.u32s(n)?),
        f => return Err(XploreError::Format(format!("label flag {f}"))),
    };
    r.finish()?;
    ImageSet::new(n, c, h, w, pixels, labels)
}

pub fn write_images(path: &Path, set: &ImageSet) -> Result<()> {
    fs::write(path, encode_images(set)?)?;
    Ok(())
}

pub fn read_images(path: &Path) -> Result<ImageSet> {
    decode_images(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_round_trip() {
        let m = FeatureMatrix::new(2, 3, vec![0.5, -1.25, 3.0, 1e-3f32 as f64, 7.0, -0.0]).unwrap();
        let back = decode_features(&encode_features(&m).unwrap()).unwrap();
        let bits = |m: &FeatureMatrix| m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&m), bits(&back));
        assert_eq!((back.rows, back.cols, back.normalized), (2, 3, false));
    }

    #[test]
    fn bad_magic() {
        let mut buf = encode_features(&FeatureMatrix::new(1, 1, vec![1.0]).unwrap()).unwrap();
        buf[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_features(&buf), Err(XploreError::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let m = FeatureMatrix::new(3, 4, vec![0.25; 12]).unwrap();
        let mut buf = encode_features(&m).unwrap();
        buf[4..8].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(decode_features(&buf), Err(XploreError::Truncated(_))));
    }

    #[test]
    fn non_finite_payload() {
        let mut buf = encode_features(&FeatureMatrix::new(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        let at = buf.len() - 4;
        buf[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_features(&buf), Err(XploreError::NonFinite(_))));
    }

    #[test]
    fn image_round_trip_with_labels() {
        let set = ImageSet::new(2, 1, 2, 2, vec![0.1, -0.2, 0.3, 1.0, -1.0, 0.0, 0.5, 0.25], Some(vec![0, 4])).unwrap();
        assert_eq!(decode_images(&encode_images(&set).unwrap()).unwrap(), set);
        let plain = ImageSet { truth_labels: None, ..set };
        assert_eq!(decode_images(&encode_images(&plain).unwrap()).unwrap(), plain);
    }
}
