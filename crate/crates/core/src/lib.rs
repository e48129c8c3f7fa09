//! Hybrid fusion of quantized and full-precision sensor reports for weak
//! signal detection: likelihood models, LMPT detectors, quantizer design,
//! bandwidth allocation and the experiment drivers built on them.

pub mod alloc;
pub mod config;
pub mod design;
pub mod detection;
pub mod emit;
pub mod exec;
pub mod experiment;
pub mod ilp;
pub mod model;
pub mod normal;

pub use exec::Execution;
