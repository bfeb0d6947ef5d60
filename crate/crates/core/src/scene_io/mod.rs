//! Synthetic scene generation with exact ground truth and the on-disk
//! formats shared with the MVS ecosystem: PFM depth maps, cam.txt cameras,
//! pair.txt view graphs, and PLY point clouds.

mod camtxt;
mod pairtxt;
mod pfm;
mod ply;
mod render;

pub use camtxt::{read_cam, write_cam};
pub use pairtxt::{read_pair, write_pair, ViewGraph};
pub use pfm::{read_pfm, write_pfm};
pub use ply::{read_ply, write_ply, PlyFormat};
pub use render::{
    render_scene, visibility_mask, Primitive, RenderedView, SceneSpec, Texture,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed {format} file: {reason}")]
    Malformed { format: &'static str, reason: String },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("scene error: {0}")]
    Scene(String),
}

impl SceneIoError {
    pub(crate) fn malformed(format: &'static str, reason: impl Into<String>) -> Self {
        Self::Malformed { format, reason: reason.into() }
    }
}
