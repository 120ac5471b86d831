//! Exact weighted model counting by tensor-network contraction.
//!
//! A CNF formula is reduced to a tensor network whose contraction equals the
//! weighted model count. Contraction orders are planned from graph
//! decompositions: tree decompositions of the line graph of the structure
//! graph (the LG method), or tree decompositions of the structure graph
//! itself, which guide the factoring of high-rank tensors (the FT method).

pub mod decomp;
pub mod driver;
pub mod formula;
pub mod graph;
pub mod methods;
pub mod network;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;

/// Concrete aliases for the default 64-bit float configuration.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Network64 = network::TensorNetwork<f64>;
pub type Plan64 = methods::PlanResult<f64>;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Network32 = network::TensorNetwork<f32>;
