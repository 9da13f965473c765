//! Distributed H-infinity state-feedback synthesis for heterogeneous LTI
//! subsystems coupled over directed graphs.

pub mod admm;
pub mod analysis;
pub mod conditions;
pub mod decomposed;
pub mod error;
pub mod generator;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod report;
pub mod sdp;
pub mod sysmodel;

pub use error::{Error, Result};
