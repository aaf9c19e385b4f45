//! Implementation-level outputs: code skeletons and deployment plans.

mod codegen;
mod deploy;

pub use codegen::{generate_code, sha256_hex, CodegenError, CodegenMapping, FileSet, MANIFEST, PLACEHOLDERS};
pub use deploy::{
    clone_pairs, is_clone_of, plan_deployment, DeployError, DeploymentPlan, Resource, ResourceInventory,
    STRATEGY_BFD, STRATEGY_SEARCH,
};
