//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted n-dimensional array. When
//! gradient recording is enabled and any input requires a gradient, every op
//! attaches a [`GraphNode`] to its output that remembers the inputs and any
//! values the backward rule needs. [`Tensor::backward`] walks that graph in
//! reverse topological order.
//!
//! Storage is always row-major and contiguous. Transposes and permutations
//! materialize a new buffer.

mod backward;
mod kernels;
mod ops;
mod rng;

use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use backward::Gradients;
#[allow(unused_imports)]
pub(crate) use kernels::gemm;
pub use rng::Rng;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Whether ops on this thread currently record a computation graph.
pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Runs `f` with graph recording disabled on the current thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

/// Number of elements implied by a shape. The empty shape is a scalar.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

pub(crate) struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    node: Option<GraphNode>,
}

/// Link from a non-leaf tensor back to the op and inputs that produced it.
pub struct GraphNode {
    pub(crate) op: ops::Op,
    pub(crate) inputs: Vec<Tensor>,
}

impl GraphNode {
    pub fn op_kind(&self) -> &'static str {
        self.op.name()
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }
}

impl Tensor {
    fn build(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, node: Option<GraphNode>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            node,
        }))
    }

    /// Creates a constant tensor. Fails if `data.len()` disagrees with `shape`.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape("new", shape, &[data.len()]));
        }
        Ok(Self::build(data, shape.to_vec(), false, None))
    }

    /// Creates a trainable leaf.
    pub fn parameter(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape("parameter", shape, &[data.len()]));
        }
        Ok(Self::build(data, shape.to_vec(), true, None))
    }

    pub fn from_slice(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(data.to_vec(), shape)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(vec![value], Vec::new(), false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(vec![value; numel(shape)], shape.to_vec(), false, None)
    }

    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::build(data, vec![n, n], false, None)
    }

    /// Output of an op. Records a graph node only when gradients are enabled
    /// and some input requires one.
    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: ops::Op, inputs: &[&Tensor]) -> Self {
        let requires_grad = is_grad_enabled() && inputs.iter().any(|t| t.requires_grad());
        let node = requires_grad.then(|| GraphNode {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
        });
        Self::build(data, shape, requires_grad, node)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn node(&self) -> Option<&GraphNode> {
        self.0.node.as_ref()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.0.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Usage(format!("item() on tensor of shape {:?}", self.shape()))),
        }
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Same values, no graph linkage, no gradient requirement.
    pub fn detach(&self) -> Tensor {
        Self::build(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    /// Fresh trainable leaf holding `data` with this tensor's shape.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Tensor> {
        if self.requires_grad() {
            Tensor::parameter(data, self.shape())
        } else {
            Tensor::new(data, self.shape())
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.0.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.node.as_ref().map(|n| n.op_kind()))
            .field("data", &preview)
            .finish()
    }
}
