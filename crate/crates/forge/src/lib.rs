//! Deterministic synthetic evidence for exercising the `nyonscope` toolkit:
//! seeded cases, extracted file trees with ground-truth manifests, raw images
//! with an encrypted userdata region, and tampered variants.

pub mod case;
pub mod emit;
pub mod image;
pub mod tamper;

use std::io;
use std::path::{Path, PathBuf};

use nyonscope::FileTree;
use thiserror::Error;

pub use case::{forge_case, ForgeOptions, SyntheticCase};
pub use emit::{emit_tree, GroundTruthManifest};
pub use image::{emit_image, ImageManifest, ImageOptions, Scale};
pub use tamper::{forge_trip, rollback_odometer, TamperSpec, TimestampMode, TripDiff, Waypoint};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("missing database: {0}")]
    MissingDatabase(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("reference LUKS1 encryptor unavailable: built without the `reference-luks` feature; image fixtures skipped")]
    ReferenceToolMissing,
    #[error("{0}: already exists; images are never overwritten")]
    OutputExists(PathBuf),
    #[error("reference encryptor failed: {0}")]
    Crypto(String),
}

impl ForgeError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Emits the case below `root` and applies its tamper spec, if any. The
/// manifest's expected bundle always describes the clean tree.
pub fn emit_case(case: &SyntheticCase, root: &Path) -> Result<(FileTree, GroundTruthManifest), ForgeError> {
    let (tree, mut manifest) = emit_tree(case, root)?;
    if let Some(spec) = &case.tamper {
        manifest.tamper = Some(forge_trip(&tree, &spec.waypoints, spec.mode)?);
    }
    Ok((tree, manifest))
}
