//! Instance-aware multi-view stereo: cascaded plane-sweep depth estimation
//! with per-instance range refinement, chained interval confidence, and
//! consistency-based fusion, plus a synthetic scene factory for end-to-end
//! verification.

pub mod cascade;
pub mod confidence;
pub mod config;
pub mod costvolume;
pub mod fusion;
pub mod geometry;
pub mod instance;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod scene;
