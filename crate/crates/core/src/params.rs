//! Named single-precision parameter buffers and their tensor bindings.

use std::collections::HashMap;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use xplore_tensor::Tensor;

use crate::error::{invalid, Result, XploreError};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f32>>,
    index: Rc<HashMap<String, usize>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f32>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != values.len() {
            return invalid(format!("{name}: shape {shape:?} with {} values", values.len()));
        }
        if self.index.contains_key(&name) {
            return invalid(format!("duplicate parameter {name}"));
        }
        Rc::make_mut(&mut self.index).insert(name.clone(), self.names.len());
        self.names.push(name);
        self.shapes.push(shape.to_vec());
        self.values.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn values(&self) -> &[Vec<f32>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.values
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&[f32]> {
        self.position(name)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| XploreError::InvalidArgument(format!("no parameter {name}")))
    }

    pub fn shape(&self, name: &str) -> Result<&[usize]> {
        self.position(name)
            .map(|i| self.shapes[i].as_slice())
            .ok_or_else(|| XploreError::InvalidArgument(format!("no parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Vec<f32>> {
        let i = self
            .position(name)
            .ok_or_else(|| XploreError::InvalidArgument(format!("no parameter {name}")))?;
        Ok(&mut self.values[i])
    }

    pub fn numel(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// Iterates `(name, shape, values)`.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &[f32])> {
        self.names
            .iter()
            .zip(&self.shapes)
            .zip(&self.values)
            .map(|((n, s), v)| (n.as_str(), s.as_slice(), v.as_slice()))
    }

    /// Lifts every buffer into a tensor; `track` makes them differentiable leaves.
    pub fn bind(&self, track: bool) -> Bound {
        let tensors = self
            .values
            .iter()
            .zip(&self.shapes)
            .map(|(v, s)| {
                let t = Tensor::new(v.iter().map(|&x| x as f64).collect(), s);
                if track {
                    t.requires_grad()
                } else {
                    t
                }
            })
            .collect();
        Bound { index: self.index.clone(), tensors }
    }

    /// Bitwise fingerprint of every value, for cheap equality checks.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.values.iter().flatten() {
            h = (h ^ v.to_bits() as u64).wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

/// Tensors aligned with a [`ParamStore`]'s entries.
#[derive(Clone)]
pub struct Bound {
    index: Rc<HashMap<String, usize>>,
    pub tensors: Vec<Tensor>,
}

impl Bound {
    /// Binds externally supplied tensors (e.g. perturbed copies) to a store's names.
    pub fn from_tensors(store: &ParamStore, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != store.len() {
            return invalid(format!("{} tensors for {} parameters", tensors.len(), store.len()));
        }
        for ((t, s), n) in tensors.iter().zip(&store.shapes).zip(&store.names) {
            if t.shape() != s.as_slice() {
                return invalid(format!("{n}: tensor {:?} for shape {s:?}", t.shape()));
            }
        }
        Ok(Self { index: store.index.clone(), tensors })
    }

    pub fn t(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i])
            .ok_or_else(|| XploreError::InvalidArgument(format!("no parameter {name}")))
    }

    pub fn refs(&self) -> Vec<&Tensor> {
        self.tensors.iter().collect()
    }
}

/// He-normal initializer (`std = sqrt(2 / fan_in)`) drawing from a seeded stream.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn he(&mut self, n: usize, fan_in: usize) -> Vec<f32> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| dist.sample(&mut self.rng) as f32).collect()
    }

    pub fn unit_vector(&mut self, n: usize) -> Vec<f32> {
        let dist = Normal::new(0.0, 1.0).expect("positive std");
        let v: Vec<f64> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter().map(|x| (x / norm) as f32).collect()
    }
}
