//! Experiment runner behind the command-line tool.

pub mod commands;
pub mod config;
pub mod converge;

use sha1::{Digest, Sha1};

pub use commands::{cmd_converge, cmd_invert, cmd_loglik, cmd_mle, cmd_posterior, cmd_simulate};
pub use config::ExperimentConfig;
pub use converge::{run_convergence, sup_gap, ConvergeSettings, ConvergenceReport};

/// Git blob hash (`sha1("blob <len>\0" + bytes)`) as lowercase hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
