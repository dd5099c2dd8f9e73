pub mod error;
pub mod matcore;
pub mod random;
pub mod conic;
pub mod opsys;
pub mod cpmaps;
pub mod tensorcones;
pub mod wn;
pub mod experiments;

pub use error::{Error, Result};

pub use conic::{Certificate, ConeProblem, ConicConfig, Verdict};
pub use cpmaps::CpMap;
pub use experiments::{run, ExperimentConfig, ExperimentReport, EXPERIMENTS};
pub use matcore::{ComplexMatrix, HermMatrix, C64};
pub use opsys::{OperatorSystem, Regime, SystemElement};
pub use tensorcones::TensorElement;
pub use wn::WnContext;
