//! Linear 1-D hyperbolic boundary-control systems: reduction to delay
//! difference equations, exact simulation on piecewise-constant data, and
//! frequency-domain controllability tests, including flows in networks.

pub mod commensurable;
pub mod controllability;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod network;
pub mod pde;
pub mod pwc;
pub mod pwexp;
pub mod solution;
pub mod system;
pub mod verify;
pub mod xi;

pub use commensurable::{commensurable_reduce, AugmentedSystem, KalmanVerdict};
pub use controllability::{
    approx_controllability_report, exact_controllability_report, hautus_value, rank_kb,
    ControllabilityReport, HautusValue, StripOptions, Verdict, Witness,
};
pub use error::{Error, Result};
pub use network::{
    build_network_system, cycle_decomposition, kernel_vector, network_approx_test,
    network_exact_test, spectral_set, validate_graph, CycleDecomposition, CycleOutcome, FlowGraph,
    NetworkReport, Obstruction, SpectralPoint, Violation,
};
pub use pde::{check_characteristics, reconstruct_pde};
pub use pwc::PiecewiseConstantFn;
pub use pwexp::PiecewiseExpFn;
pub use solution::{
    endpoint_apply, endpoint_dual_apply, flow_apply, reduce_control_time, ControlSignal, Trajectory,
};
pub use system::{
    compute_damping_integrals, compute_delays, BoundaryState, DifferenceSystem, HyperbolicSystem,
};
pub use xi::{
    char_coefficients, power_sum_check, verify_xi_recurrence, AlphaCoefficients, MultiIndex,
    XiTable,
};

pub use nalgebra::DMatrix;
pub use num_complex::Complex64;
