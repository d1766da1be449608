use std::collections::{HashMap, HashSet};

use super::Tensor;
use crate::error::{Error, Result};

/// Gradients keyed by tensor id, as returned by a backward pass.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<u64, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.grads.get(&t.id()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Reverse topological order (outputs first) of the graph below `root`.
fn reverse_topological(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    // iterative post-order DFS; graphs can be deep
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        let node_inputs: Vec<Tensor> = t
            .node()
            .map(|n| n.inputs.iter().filter(|i| i.requires_grad()).cloned().collect())
            .unwrap_or_default();
        stack.push((t, true));
        for input in node_inputs {
            if !visited.contains(&input.id()) {
                stack.push((input, false));
            }
        }
    }
    order.reverse();
    order
}

fn propagate(loss: &Tensor, keep: &dyn Fn(&Tensor) -> bool, accumulate: bool) -> Result<Gradients> {
    if loss.len() != 1 {
        return Err(Error::Usage(format!(
            "backward needs a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
    let mut kept = Gradients::default();
    if !loss.requires_grad() {
        return Ok(kept);
    }
    pending.insert(loss.id(), vec![1.0]);
    for t in reverse_topological(loss) {
        let Some(g) = pending.remove(&t.id()) else {
            continue;
        };
        match t.node() {
            Some(node) => {
                let input_grads = node.op.vjp(&node.inputs, &t, &g);
                for (input, grad) in node.inputs.iter().zip(input_grads) {
                    let Some(grad) = grad else { continue };
                    if !input.requires_grad() {
                        continue;
                    }
                    match pending.get_mut(&input.id()) {
                        Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(input.id(), grad);
                        }
                    }
                }
            }
            None if accumulate => t.accumulate_grad(&g),
            None => {}
        }
        if keep(&t) {
            kept.grads.insert(t.id(), g);
        }
    }
    Ok(kept)
}

impl Tensor {
    /// Backpropagates from a scalar loss, adding into every reachable leaf's
    /// `grad`. Returns the leaf gradients of this pass.
    pub fn backward(&self) -> Result<Gradients> {
        propagate(self, &|t| t.is_leaf(), true)
    }

    /// Gradients of a scalar loss with respect to `targets` (leaves or
    /// intermediates). Leaf `grad` slots are left untouched.
    pub fn grad_wrt(&self, targets: &[&Tensor]) -> Result<Gradients> {
        let ids: HashSet<u64> = targets.iter().map(|t| t.id()).collect();
        propagate(self, &|t| ids.contains(&t.id()), false)
    }
}
