//! Deterministic multi-view plane-sweep stereo: a cascaded coarse-to-fine
//! depth estimator with adaptive per-pixel depth intervals, geometric depth
//! embedding, an image-synthesis loss with analytic gradients, and point
//! cloud fusion/evaluation — all on exactly reproducible synthetic scenes.

pub mod camera;
pub mod fusion;
pub mod gde;
pub mod hypothesis;
pub mod loss;
pub mod matching;
pub mod numerics;
pub mod pipeline;
pub mod scene_io;
