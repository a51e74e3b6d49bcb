//! SFI-based fuzzing framework with error-point clustering and concolic
//! common-path solving, targeting a deterministic mini-IR virtual machine.
//!
//! The pipeline: [`ir`] loads programs, [`mod@derive`] builds a
//! context-inlined supergraph ([`mod@cfg`]), [`extract`] finds error points,
//! [`cluster`] groups points sharing a nearby common ancestor, [`weight`]
//! ranks clusters against the current execution path, [`solve`]/[`symbolic`]
//! compute and solve the byte constraints of a cluster's common path,
//! [`sched`] drives the concolic↔fuzzer loop, and [`fuzz`] runs the
//! coverage-guided SFI campaign.

pub mod cfg;
pub mod cluster;
pub mod constraint;
pub mod derive;
pub mod digest;
pub mod dot;
pub mod extract;
pub mod fuzz;
pub mod ir;
pub mod sched;
pub mod solve;
pub mod symbolic;
pub mod vm;
pub mod weight;

pub use cfg::{BlockId, Cfg, CfgError, EdgePredicate, PathSpec};
pub use cluster::{Cluster, ClusterMode, ClusterSet};
pub use constraint::{Atom, ByteConstraint, CmpOp, LinExpr};
pub use extract::{ErrorPoint, ErrorPointPath, HandlerKind, ReturnKind};
pub use ir::{Program, ProgramError};
pub use sched::{SchedAction, SchedEvent, Scheduler, SchedulerConfig};
pub use solve::SolveResult;
pub use vm::{ErrorSequence, ExecutionTrace, InputBytes, Outcome, Target};
pub use weight::{ClusterScore, DistanceTerm, WeightConfig};
