//! Neural global illumination for variable scenes: a path tracer, a
//! per-pixel generator network, and MCMC-driven training-sample selection.

pub mod image;
pub mod math;
pub mod scene;
pub mod tracer;
pub mod net;
pub mod explore;
pub mod reuse;
pub mod infer;
pub mod eval;
pub mod train;
