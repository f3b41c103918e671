//! Command line and HTTP front ends over a traceview workspace.

pub mod cli;
pub mod engine;
pub mod service;
pub mod workspace;

pub use cli::run;
pub use workspace::Workspace;
