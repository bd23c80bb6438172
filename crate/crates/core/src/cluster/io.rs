//! `XCM1` cluster model files.

use std::fs;
use std::path::Path;

use crate::cluster::kmeans::ClusterModel;
use crate::error::{Result, XploreError};
use crate::format::{check_finite_f32, Reader, Writer};

pub fn encode_cluster_model(m: &ClusterModel) -> Result<Vec<u8>> {
    let mut w = Writer::new(b"XCM1");
    w.usize(m.k)?;
    w.usize(m.dim)?;
    let cents: Vec<f32> = m.centroids.iter().map(|&v| v as f32).collect();
    let stds: Vec<f32> = m.stds.iter().map(|&v| v as f32).collect();
    check_finite_f32(&cents, "centroid")?;
    check_finite_f32(&stds, "std")?;
    w.f32s(&cents);
    w.f32s(&stds);
    w.usize(m.assignments.len())?;
    for &a in &m.assignments {
        w.usize(a)?;
    }
    w.f64(m.inertia);
    Ok(w.buf)
}

pub fn decode_cluster_model(buf: &[u8]) -> Result<ClusterModel> {
    let mut r = Reader::open(buf, "XCM1", "cluster model")?;
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let centroids = r.f32s(k * dim)?;
    let stds = r.f32s(k * dim)?;
    check_finite_f32(&centroids, "centroid")?;
    check_finite_f32(&stds, "std")?;
    let n = r.u32()? as usize;
    let assignments: Vec<usize> = r.u32s(n)?.into_iter().map(|a| a as usize).collect();
    let inertia = r.f64()?;
    r.finish()?;
    if k == 0 {
        return Err(XploreError::Format("k = 0".into()));
    }
    if let Some(&a) = assignments.iter().find(|&&a| a >= k) {
        return Err(XploreError::Format(format!("assignment {a} outside [0, {k})")));
    }
    if !inertia.is_finite() {
        return Err(XploreError::NonFinite("inertia".into()));
    }
    Ok(ClusterModel {
        k,
        dim,
        centroids: centroids.into_iter().map(f64::from).collect(),
        stds: stds.into_iter().map(f64::from).collect(),
        assignments,
        inertia,
    })
}

pub fn write_cluster_model(path: &Path, m: &ClusterModel) -> Result<()> {
    fs::write(path, encode_cluster_model(m)?)?;
    Ok(())
}

pub fn read_cluster_model(path: &Path) -> Result<ClusterModel> {
    decode_cluster_model(&fs::read(path)?)
}
