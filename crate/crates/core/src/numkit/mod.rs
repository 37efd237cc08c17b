//! Dense numerics: tensors, seeded randomness, activations, a reverse-mode
//! tape, Adam, and a central-difference gradient checker.

mod gradcheck;
mod graph;
mod ops;
mod optim;
mod params;
mod rng;
mod tensor;

pub use gradcheck::{finite_diff_check, GradReport, DEFAULT_FD_EPS, ZERO_GRAD_NORM};
pub use graph::{Graph, Var};
pub use ops::{elu, l1_norm, leaky_relu, sigmoid, softmax, uniform_init, xavier_init, LEAKY_SLOPE};
pub use optim::Adam;
pub use params::{Gradients, ParamId, ParamStore};
pub use rng::Rng;
pub use tensor::Tensor;
