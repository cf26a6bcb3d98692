//! DC optimal power flow with variable-impedance devices (VIDs) and optional node-breaker
//! topology optimisation. The bilinear susceptance-angle product is handled by pluggable
//! strategies registered by name in [`methods::MethodRegistry`].

pub mod bench;
pub mod formulation;
pub mod io;
pub mod methods;
pub mod network;
pub mod solver;

pub use formulation::{FormulationConfig, QuadraticMode, SusceptancePlan};
pub use io::{load_case, parse_case, PowerNetwork};
pub use methods::{BilinearMethod, MethodConfig, MethodRegistry, MethodReport};
pub use network::{Scenario, TopologyMode};
