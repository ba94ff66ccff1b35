//! Small reverse-mode autodiff over NCHW tensors, limited to the layers the
//! completion networks use.

mod checkpoint;
mod conv;
mod graph;
mod layers;
mod optim;
mod tensor;


pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, LayerKind, LayerRecord};
pub use graph::{Graph, Reduction, Var};
pub use layers::{init_weights, ConvLayer, SparseConvLayer, DEFAULT_EPSILON};
pub use optim::{Sgd, SgdConfig};
pub use tensor::Tensor;

/// Default weight of the L1 term in [`Graph::loss_l2_l1`].
pub const DEFAULT_LAMBDA: f64 = 0.0002;

/// Index of a tensor in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Owned learnable tensors, each carrying a gradient accumulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.tensors.push(value.with_grad());
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}
