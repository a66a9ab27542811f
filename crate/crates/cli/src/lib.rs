//! Batch experiment harness around `vmshare-core`: configuration loading,
//! full experiment runs with on-disk artifact bundles, and one-axis sweeps.
//!
//! Everything here is driven by a single master seed that fans out to
//! per-purpose child seeds through a counter-based derivation, so rerunning
//! the same configuration reproduces every output byte for byte and adding
//! a run never disturbs the ones before it.

pub mod config;
pub mod runner;
pub mod sweep;
