//! Command-line front end and experiment harness for [`strongcv_core`]:
//! a thread-pool executor, timed runs and RMSE studies with CSV output,
//! binary files for trained control variates, configuration files and the
//! model validation suite.

pub mod cli;
pub mod config;
pub mod exec;
pub mod format;
pub mod study;
pub mod validate;

pub use exec::ThreadPool;
pub use strongcv_core as core;
