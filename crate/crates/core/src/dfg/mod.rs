//! Per-function data-flow graphs: node/edge model, construction from the
//! syntax tree, and pruning.

mod builder;
pub mod builtins;
mod model;
mod prune;

pub use builder::{build_dfg, key_arg_of, BuildOptions};
pub use model::*;
pub use prune::{prune_dfg, reaches_sink};
