pub mod annotations;
pub mod config;
pub mod dfg;
pub mod diag;
pub mod eval;
pub mod format;
pub mod frontend;
pub mod linker;
pub mod oracle;
pub mod pipeline;
pub mod redactor;
pub mod repository;
pub mod syntax;
pub mod tracer;
