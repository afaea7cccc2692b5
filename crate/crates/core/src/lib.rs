// NaN-rejecting range checks read as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod convolution;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod numeric;
pub mod quadrature;
pub mod rkhs;
pub mod signal;
pub mod sim;

pub use convolution::{apply_l, representer_phi, Representer};
pub use error::{Error, Result};
pub use estimator::{fit, predict_impulse, predict_output, Dataset, Estimate, OutputKernelMatrix};
pub use kernel::{
    GramMatrix, IntegrabilityMeasure, KernelDescriptor, KernelFamily, KernelSpec, KernelTable,
    TimeDomain,
};
pub use rkhs::RkhsElement;
pub use signal::Signal;
pub use sim::{make_dataset, make_input, InputKind, InputParams, LtiSystem, NoiseSpec};
