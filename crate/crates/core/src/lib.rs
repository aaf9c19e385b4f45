//! archweave: parse component/connector architectures, refine them with QoS
//! and platform patterns, simulate their behaviour, and emit code skeletons
//! and deployment plans.

pub mod behaviour;
pub mod diff;
pub mod emit;
pub mod model;
pub mod parser;
pub mod patterns;
pub mod pipeline;
pub mod planner;
pub mod refine;
pub mod sim;

pub use model::{ArchElement, Architecture, ElementKind, ElementPath, RoleTag, Stage};
pub use parser::{parse_architecture, parse_architecture_str, render, SourceKind, SourceUnit};
pub use patterns::{builtin_library, ConstraintPattern, PatternLibrary};
pub use planner::{apply_plan, plan, plan_platform, TransformationPlan};
pub use refine::{apply_action, execute_refinement, verify_preservation, AtomicAction, Condition};
