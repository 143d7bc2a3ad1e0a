//! Forensic extraction for Nyon-style eBike board computers.
//!
//! The crate is organised along the acquisition pipeline:
//!
//! * [`image`] maps partitions inside raw storage dumps and streams regions.
//! * [`luks`] parses LUKS1 headers, hunts keyfiles and decrypts the userdata payload.
//! * [`artifacts`] decodes the on-device artifacts of both device generations
//!   into a [`artifacts::CaseBundle`].
//! * [`chronicle`] merges every timestamped record into one timeline and
//!   rebuilds GPS tracks.
//! * [`sentry`] runs consistency rules that flag implausible or forged records.
//! * [`report`] renders the case as JSON and Markdown.

pub mod artifacts;
pub mod canonical;
pub mod chronicle;
pub mod geo;
pub mod image;
pub mod luks;
pub mod report;
pub mod sentry;
pub mod time;
pub mod tree;

pub use artifacts::{assemble_bundle, CaseBundle, Generation};
pub use image::{EvidenceImage, PartitionEntry, PartitionMap, PartitionRole};
pub use time::Timestamp;
pub use tree::FileTree;
