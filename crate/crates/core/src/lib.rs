//! Cycle-accurate simulator for a coarse-grained reconfigurable array (CGRA)
//! attached to a cache-integrated memory subsystem.
//!
//! The crate is split along the simulated hardware:
//!
//! - [`kernel`]: mapped kernel representation, kernel file format and the
//!   builtin benchmark generators.
//! - [`pe_array`]: the PE grid, its ALU and the state save/restore logic used
//!   by runahead execution.
//! - [`memory`]: SPM, the way-partitioned non-blocking L1, the shared L2 and
//!   the flat backing store.
//! - [`runahead`]: runahead episode bookkeeping, temporary storage and
//!   prefetch classification.
//! - [`reconfig`]: time miss rate monitoring, the hit-rate model and the
//!   way-allocation solver.
//! - [`metrics`]: run statistics and CSV output.
//! - [`sim`]: the engine tying everything together on a single clock.
//!
//! Rate and profit arithmetic is generic over the scalar type (see
//! [`scalar`]); the aliases below fix it to `f64`, which is what the engine
//! uses.

pub mod kernel;
pub mod memory;
pub mod metrics;
pub mod pe_array;
pub mod reconfig;
pub mod rng;
pub mod runahead;
pub mod scalar;
pub mod sim;

#[cfg(feature = "oracle")]
pub mod oracle;

pub use kernel::{KernelError, KernelProgram};
pub use memory::{HierarchyConfig, Preset};
pub use metrics::RunStats;
pub use pe_array::TaggedWord;
pub use sim::{SimError, Simulator, Variant};

/// Scalar used for hit rates, time miss rates and profits.
pub type Rate = f64;
/// Profit matrix over `f64` log time hit rates.
pub type ProfitMatrixF64 = reconfig::ProfitMatrix<f64>;
/// Profit matrix over `f32`, for callers trading precision for footprint.
pub type ProfitMatrixF32 = reconfig::ProfitMatrix<f32>;
/// Reconfiguration plan whose objective is an `f64`.
pub type ReconfigPlanF64 = reconfig::ReconfigPlan<f64>;

/// Machine word of the array datapath.
pub type Word = u32;
/// Byte address in the simulated 32-bit address space.
pub type Addr = u32;
/// Simulation clock.
pub type Cycle = u64;
