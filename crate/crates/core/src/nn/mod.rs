//! Minimal MLP toolkit: dense, batchnorm, ReLU and dropout layers with
//! analytic backward passes, softmax cross-entropy, Adam, the step learning
//! rate schedule, FLOP counting and finite-difference gradient checks.

mod flops;
mod gradcheck;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use flops::{flops, flops_of_list};
pub use gradcheck::{
    grad_check, Differentiable, GradCheckConfig, GradCheckReport, ProbeLoss, StackProblem,
};
pub use layers::{
    dense_backward, dense_forward, BatchNorm, Dense, Dropout, Layer, LayerKind, LayerStack, Mode,
    ParamRef, Relu,
};
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use optim::{adam_update, Adam, AdamConfig, LrSchedule};
pub use tensor::Tensor;
