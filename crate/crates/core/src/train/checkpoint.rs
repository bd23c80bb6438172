//! `XCK1` training checkpoints.
//!
//! Layout: magic, `u64` config hash, JSON metadata (length-prefixed), `u64`
//! step, `u64` Adam steps for G and D, nine `f64` running averages, then a
//! table of named `f32` tensors (`name`, rank, dims, payload).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xplore_tensor::AdamState;

use crate::error::{Result, XploreError};
use crate::format::{check_finite_f32, Reader, Writer};
use crate::losses::LossReport;
use crate::nets::{build_discriminator, build_generator, NetConfig};
use crate::norm::ConditionMode;
use crate::params::ParamStore;
use crate::train::config::TrainConfig;
use crate::train::state::TrainState;

#[derive(Serialize, Deserialize)]
struct Meta {
    net: NetConfig,
    train: TrainConfig,
}

/// Hash of everything that fixes parameter shapes and meanings.
pub fn config_hash(net: &NetConfig, mode: ConditionMode) -> u64 {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(net).expect("config serializes"));
    h.update(serde_json::to_vec(&mode).expect("mode serializes"));
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn put_tensor(w: &mut Writer, name: &str, shape: &[usize], vals: &[f32]) -> Result<()> {
    check_finite_f32(vals, name)?;
    w.bytes(name.as_bytes());
    w.usize(shape.len())?;
    for &d in shape {
        w.usize(d)?;
    }
    w.f32s(vals);
    Ok(())
}

fn store_tensors(w: &mut Writer, prefix: &str, store: &ParamStore) -> Result<()> {
    for (n, s, v) in store.iter() {
        put_tensor(w, &format!("{prefix}/{n}"), s, v)?;
    }
    Ok(())
}

fn adam_tensors(w: &mut Writer, prefix: &str, store: &ParamStore, st: &AdamState) -> Result<()> {
    for (i, (n, s, _)) in store.iter().enumerate() {
        put_tensor(w, &format!("{prefix}.m/{n}"), s, &st.m[i])?;
        put_tensor(w, &format!("{prefix}.v/{n}"), s, &st.v[i])?;
    }
    Ok(())
}

pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let mut w = Writer::new(b"XCK1");
    w.u64(config_hash(&state.net, state.train.mode));
    let meta = Meta { net: state.net.clone(), train: state.train.clone() };
    w.bytes(&serde_json::to_vec(&meta).map_err(|e| XploreError::Format(e.to_string()))?);
    w.u64(state.step);
    w.u64(state.adam_g.step);
    w.u64(state.adam_d.step);
    for v in state.running.values() {
        w.f64(v);
    }
    let count = 3 * state.g.params.len() + state.g.buffers.len() + 3 * state.d.params.len() + 1;
    w.usize(count)?;
    store_tensors(&mut w, "g", &state.g.params)?;
    store_tensors(&mut w, "gbuf", &state.g.buffers)?;
    store_tensors(&mut w, "d", &state.d.params)?;
    adam_tensors(&mut w, "adam_g", &state.g.params, &state.adam_g)?;
    adam_tensors(&mut w, "adam_d", &state.d.params, &state.adam_d)?;
    let k = state.net.k;
    put_tensor(&mut w, "cond/table", &[k, state.cond_table.len() / k], &state.cond_table)?;
    Ok(w.buf)
}

fn fill(store: &mut ParamStore, prefix: &str, table: &mut Vec<(String, Vec<usize>, Vec<f32>)>) -> Result<()> {
    let names: Vec<String> = store.names().to_vec();
    for n in names {
        let key = format!("{prefix}/{n}");
        let pos = table
            .iter()
            .position(|(t, _, _)| *t == key)
            .ok_or_else(|| XploreError::Format(format!("checkpoint lacks tensor {key}")))?;
        let (_, shape, vals) = table.swap_remove(pos);
        if shape != store.shape(&n)? {
            return Err(XploreError::Format(format!("{key}: stored shape {shape:?}, expected {:?}", store.shape(&n)?)));
        }
        *store.get_mut(&n)? = vals;
    }
    Ok(())
}

fn fill_adam(store: &ParamStore, prefix: &str, step: u64, table: &mut Vec<(String, Vec<usize>, Vec<f32>)>) -> Result<AdamState> {
    let mut m = store.clone();
    let mut v = store.clone();
    fill(&mut m, &format!("{prefix}.m"), table)?;
    fill(&mut v, &format!("{prefix}.v"), table)?;
    Ok(AdamState { step, m: m.values().to_vec(), v: v.values().to_vec() })
}

/// Decodes a checkpoint; with `expected`, rejects one written for a
/// different network or conditioning mode.
pub fn decode_checkpoint(buf: &[u8], expected: Option<(&NetConfig, ConditionMode)>) -> Result<TrainState> {
    let mut r = Reader::open(buf, "XCK1", "checkpoint")?;
    let hash = r.u64()?;
    let meta: Meta = serde_json::from_slice(r.bytes()?).map_err(|e| XploreError::Format(format!("metadata: {e}")))?;
    let own = config_hash(&meta.net, meta.train.mode);
    if own != hash {
        return Err(XploreError::Format(format!("stored hash {hash:016x} does not match its metadata ({own:016x})")));
    }
    if let Some((net, mode)) = expected {
        let want = config_hash(net, mode);
        if want != hash {
            return Err(XploreError::ConfigMismatch { expected: want, found: hash });
        }
    }
    let step = r.u64()?;
    let (g_steps, d_steps) = (r.u64()?, r.u64()?);
    let mut run = [0.0; 9];
    for v in &mut run {
        *v = r.f64()?;
    }
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let name = String::from_utf8(r.bytes()?.to_vec()).map_err(|_| XploreError::Format("tensor name".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let vals = r.f32s(shape.iter().product())?;
        check_finite_f32(&vals, &name)?;
        table.push((name, shape, vals));
    }
    r.finish()?;

    let mut g = build_generator(&meta.net, 0)?;
    let mut d = build_discriminator(&meta.net, 0)?;
    fill(&mut g.params, "g", &mut table)?;
    fill(&mut g.buffers, "gbuf", &mut table)?;
    fill(&mut d.params, "d", &mut table)?;
    let adam_g = fill_adam(&g.params, "adam_g", g_steps, &mut table)?;
    let adam_d = fill_adam(&d.params, "adam_d", d_steps, &mut table)?;
    let pos = table
        .iter()
        .position(|(n, _, _)| n == "cond/table")
        .ok_or_else(|| XploreError::Format("checkpoint lacks cond/table".into()))?;
    let (_, cshape, cond_table) = table.swap_remove(pos);
    if cshape.first() != Some(&meta.net.k) {
        return Err(XploreError::Format(format!("cond table shape {cshape:?} for k = {}", meta.net.k)));
    }
    if let Some((n, _, _)) = table.first() {
        return Err(XploreError::Format(format!("unexpected tensor {n}")));
    }
    let running = LossReport::from_values(run);
    Ok(TrainState { step, net: meta.net, train: meta.train, g, d, adam_g, adam_d, running, cond_table })
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    fs::write(path, encode_checkpoint(state)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<(&NetConfig, ConditionMode)>) -> Result<TrainState> {
    decode_checkpoint(&fs::read(path)?, expected)
}
