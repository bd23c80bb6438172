//! Reverse-mode differentiation over the recorded graph.
//!
//! Every op records a backward rule written in terms of other ops, so
//! running the backward pass with `create_graph = true` records the
//! gradient computation itself and it can be differentiated again.

use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::ops;
use crate::tensor::{with_grad_mode, Tensor};

/// Collects every tracked tensor reachable from `root`, sorted by id.
fn reachable(root: &Tensor) -> Vec<Tensor> {
    let mut seen = HashSet::new();
    let mut stack = vec![root.clone()];
    let mut out = Vec::new();
    while let Some(t) = stack.pop() {
        if !t.is_tracked() || !seen.insert(t.id()) {
            continue;
        }
        if let Some(node) = t.node() {
            stack.extend(node.inputs.iter().cloned());
        }
        out.push(t);
    }
    out.sort_by_key(|t| t.id());
    out
}

/// Gradients of the scalar `output` with respect to each tensor in `wrt`.
///
/// Tensors that do not influence `output` receive zeros. With
/// `create_graph`, the returned gradients are themselves tracked.
pub fn grad(output: &Tensor, wrt: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if output.numel() != 1 {
        return Err(TensorError::NonScalarLoss(output.shape().to_vec()));
    }
    let nodes = reachable(output);
    let targets: HashSet<u64> = wrt.iter().map(|t| t.id()).collect();

    // A tensor is relevant when some wrt tensor lies on or below it.
    let mut relevant: HashSet<u64> = HashSet::new();
    for t in &nodes {
        let hit = targets.contains(&t.id())
            || t.node()
                .map(|n| n.inputs.iter().any(|i| relevant.contains(&i.id())))
                .unwrap_or(false);
        if hit {
            relevant.insert(t.id());
        }
    }

    let mut grads: HashMap<u64, Tensor> = HashMap::new();
    if relevant.contains(&output.id()) {
        grads.insert(output.id(), Tensor::full(output.shape(), 1.0));
    }

    with_grad_mode(create_graph, || -> Result<()> {
        for t in nodes.iter().rev() {
            if !relevant.contains(&t.id()) {
                continue;
            }
            let Some(node) = t.node() else { continue };
            let Some(g) = grads.get(&t.id()).cloned() else {
                continue;
            };
            let needed: Vec<bool> = node
                .inputs
                .iter()
                .map(|i| i.is_tracked() && relevant.contains(&i.id()))
                .collect();
            let input_grads = (node.backward)(&g, &node.inputs, &needed)?;
            for ((input, gi), need) in node.inputs.iter().zip(input_grads).zip(&needed) {
                let (Some(gi), true) = (gi, *need) else { continue };
                debug_assert_eq!(gi.shape(), input.shape(), "backward of {}", node.op);
                let acc = match grads.remove(&input.id()) {
                    Some(prev) => ops::add(&prev, &gi)?,
                    None => gi,
                };
                grads.insert(input.id(), acc);
            }
        }
        Ok(())
    })?;

    Ok(wrt
        .iter()
        .map(|w| {
            grads
                .get(&w.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(w.shape()))
        })
        .collect())
}

impl Tensor {
    /// Accumulates d(self)/d(leaf) into the grad slot of every tracked leaf
    /// reachable from this scalar.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        let leaves: Vec<Tensor> = reachable(self).into_iter().filter(|t| t.is_leaf()).collect();
        let refs: Vec<&Tensor> = leaves.iter().collect();
        let grads = grad(self, &refs, false)?;
        for (leaf, g) in leaves.iter().zip(grads) {
            leaf.accumulate_grad(g.data());
        }
        Ok(())
    }
}

/// One recorded op in a traced graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRecord {
    pub op: &'static str,
    pub inputs: Vec<u64>,
    pub output: u64,
}

/// Topologically ordered view of the ops that produced a tensor.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    pub records: Vec<OpRecord>,
}

impl Graph {
    pub fn trace(root: &Tensor) -> Self {
        let records = reachable(root)
            .into_iter()
            .filter_map(|t| {
                t.node().map(|n| OpRecord {
                    op: n.op,
                    inputs: n.inputs.iter().map(|i| i.id()).collect(),
                    output: t.id(),
                })
            })
            .collect();
        Graph { records }
    }

    /// Every input id precedes the op consuming it, which also rules out cycles.
    pub fn is_topologically_ordered(&self) -> bool {
        let mut prev = 0;
        self.records.iter().all(|r| {
            let ok = r.output > prev && r.inputs.iter().all(|&i| i < r.output);
            prev = r.output;
            ok
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
