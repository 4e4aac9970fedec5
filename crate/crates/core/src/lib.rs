//! AC power systems toolkit: MATPOWER case handling, Newton-Raphson power flow,
//! a primal-dual interior-point ACOPF solver, active-constraint extraction and
//! seeded dataset generation by load perturbation.

pub mod cases;
pub mod datagen;
pub mod equations;
pub mod grid;
pub mod linalg;
pub mod matpower;
pub mod opf;
pub mod powerflow;
pub mod ybus;

pub use grid::{Branch, Bus, BusKind, CostPolynomial, Generator, Network, Topology};
pub use matpower::{parse_matpower_case, serialize_case, CaseError};
pub use ybus::{build_admittance, AdmittanceMatrix};
pub use powerflow::{solve_newton, PfOptions, PowerFlow, PowerFlowError, PowerFlowSolution, PowerFlowState, SetpointProfile};
pub use opf::{
    check_legality, evaluate_cost, extract_active_set, solve_acopf, warm_start_from_active_set, ActiveSetVector,
    LegalityReport, OpfError, OpfOptions, OpfSolution, WarmStartHint,
};
pub use datagen::{
    generate_dataset, load_dataset, save_dataset, split_dataset, DatagenError, Dataset, Manifest, Sample, SamplerConfig,
    TargetLayout,
};
