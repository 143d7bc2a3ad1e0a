//! Read-only access to raw storage images.

pub mod descriptor;
pub mod layout;

use std::fmt;
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use descriptor::{parse_verity_descriptor, DescriptorError, VerityDescriptor};
use layout::StaticLayout;

pub const SECTOR_SIZE: u64 = 512;

/// Descriptor regions are searched for within this many leading bytes.
const DESCRIPTOR_SCAN_LIMIT: u64 = 128 * 1024 * 1024;
/// LUKS magic is probed at sector boundaries this far into the trailing region.
const LUKS_PROBE_LIMIT: u64 = 16 * 1024 * 1024;
const CHUNK: usize = 1024 * 1024;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image {0} does not exist")]
    Missing(PathBuf),
    #[error("image {path} is unreadable: {source}")]
    Unreadable { path: PathBuf, source: io::Error },
    #[error("image {0} is empty")]
    ZeroLength(PathBuf),
    #[error("region [{offset:#x}, +{size:#x}) exceeds image size {image_size:#x}")]
    OutOfBounds { offset: u64, size: u64, image_size: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Opened evidence file. Only ever opened for reading.
#[derive(Debug)]
pub struct EvidenceImage {
    path: PathBuf,
    size: u64,
    digest: OnceLock<String>,
}

impl EvidenceImage {
    /// Opens the image and hashes it in full.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let image = Self::open_deferred(path)?;
        image.digest()?;
        Ok(image)
    }

    /// Opens the image; the SHA-256 is computed on first call to [`Self::digest`].
    /// Use this for multi-gigabyte dumps when only the layout is needed.
    pub fn open_deferred(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref().to_path_buf();
        let meta = match std::fs::metadata(&path) {
            Ok(m) => m,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ImageError::Missing(path)),
            Err(source) => return Err(ImageError::Unreadable { path, source }),
        };
        if !meta.is_file() {
            return Err(ImageError::Unreadable {
                path,
                source: io::Error::new(io::ErrorKind::InvalidInput, "not a regular file"),
            });
        }
        if let Err(source) = File::open(&path) {
            return Err(ImageError::Unreadable { path, source });
        }
        if meta.len() == 0 {
            return Err(ImageError::ZeroLength(path));
        }
        Ok(Self { path, size: meta.len(), digest: OnceLock::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Whether `other` names the image file itself, including through
    /// symlinks or hard links. Used to refuse writing output over evidence.
    pub fn is_same_file(&self, other: &Path) -> bool {
        if let (Ok(a), Ok(b)) = (other.canonicalize(), self.path.canonicalize()) {
            if a == b {
                return true;
            }
        }
        #[cfg(unix)]
        {
            use std::os::unix::fs::MetadataExt;
            if let (Ok(a), Ok(b)) = (std::fs::metadata(other), std::fs::metadata(&self.path)) {
                return a.dev() == b.dev() && a.ino() == b.ino();
            }
        }
        false
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    /// Lower-case hex SHA-256 of the whole image.
    pub fn digest(&self) -> Result<&str, ImageError> {
        if let Some(d) = self.digest.get() {
            return Ok(d);
        }
        let computed = sha256_reader(self.read_range(0, self.size)?)?;
        Ok(self.digest.get_or_init(|| computed))
    }

    fn file(&self) -> Result<File, ImageError> {
        File::open(&self.path).map_err(|source| ImageError::Unreadable { path: self.path.clone(), source })
    }

    pub fn read_range(&self, offset: u64, size: u64) -> Result<RegionReader, ImageError> {
        let end = offset.checked_add(size);
        if end.is_none_or(|e| e > self.size) {
            return Err(ImageError::OutOfBounds { offset, size, image_size: self.size });
        }
        let mut file = self.file()?;
        file.seek(SeekFrom::Start(offset))?;
        Ok(RegionReader { file, start: offset, len: size, pos: 0 })
    }

    /// Streams exactly the bytes `[entry.offset, entry.offset + entry.size)`.
    pub fn read_region(&self, entry: &PartitionEntry) -> Result<RegionReader, ImageError> {
        self.read_range(entry.offset, entry.size)
    }

    pub fn read_bytes(&self, offset: u64, size: usize) -> Result<Vec<u8>, ImageError> {
        let mut buf = Vec::with_capacity(size);
        self.read_range(offset, size as u64)?.read_to_end(&mut buf)?;
        Ok(buf)
    }

    pub fn region_sha256(&self, entry: &PartitionEntry) -> Result<String, ImageError> {
        Ok(sha256_reader(self.read_region(entry)?)?)
    }
}

/// Bounded, seekable reader over one image region. Positions are region-relative.
#[derive(Debug)]
pub struct RegionReader {
    file: File,
    start: u64,
    len: u64,
    pos: u64,
}

impl RegionReader {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Read for RegionReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let remaining = self.len.saturating_sub(self.pos);
        if remaining == 0 || buf.is_empty() {
            return Ok(0);
        }
        let want = buf.len().min(usize::try_from(remaining).unwrap_or(usize::MAX));
        let n = self.file.read(&mut buf[..want])?;
        self.pos += n as u64;
        Ok(n)
    }
}

impl Seek for RegionReader {
    fn seek(&mut self, pos: SeekFrom) -> io::Result<u64> {
        let target = match pos {
            SeekFrom::Start(p) => Some(p),
            SeekFrom::End(d) => self.len.checked_add_signed(d),
            SeekFrom::Current(d) => self.pos.checked_add_signed(d),
        };
        let target = target.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "seek before region start"))?;
        self.file.seek(SeekFrom::Start(self.start + target))?;
        self.pos = target;
        Ok(target)
    }
}

pub fn sha256_reader(mut reader: impl Read) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; CHUNK];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionRole {
    Descriptor,
    System,
    Systemconfig,
    Recovery,
    Maps,
    Keymaterial,
    UserdataEncrypted,
    Unallocated,
    Unknown,
}

impl PartitionRole {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Descriptor => "descriptor",
            Self::System => "system",
            Self::Systemconfig => "systemconfig",
            Self::Recovery => "recovery",
            Self::Maps => "maps",
            Self::Keymaterial => "keymaterial",
            Self::UserdataEncrypted => "userdata-encrypted",
            Self::Unallocated => "unallocated",
            Self::Unknown => "unknown",
        }
    }

    /// Role implied by a partition label.
    pub fn from_label(label: &str) -> Self {
        let label = label.to_ascii_lowercase();
        if label.ends_with("systemconfig") {
            Self::Systemconfig
        } else if label.ends_with("recovery") {
            Self::Recovery
        } else if label.ends_with("-image") || label == "system" {
            Self::System
        } else {
            Self::Unknown
        }
    }
}

impl fmt::Display for PartitionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartitionRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "descriptor" => Self::Descriptor,
            "system" => Self::System,
            "systemconfig" => Self::Systemconfig,
            "recovery" => Self::Recovery,
            "maps" => Self::Maps,
            "keymaterial" => Self::Keymaterial,
            "userdata-encrypted" => Self::UserdataEncrypted,
            "unallocated" => Self::Unallocated,
            "unknown" => Self::Unknown,
            other => return Err(format!("unknown partition role {other:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub offset: u64,
    pub size: u64,
    pub name: Option<String>,
    pub role: PartitionRole,
}

impl PartitionEntry {
    pub fn new(offset: u64, size: u64, name: Option<String>, role: PartitionRole) -> Self {
        Self { offset, size, name, role }
    }

    pub fn end(&self) -> u64 {
        self.offset + self.size
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayoutSource {
    Descriptors { region_offset: u64 },
    StaticProfile { profile: String },
    None,
}

/// Sorted, disjoint entries that tile the whole image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMap {
    pub image_size: u64,
    pub source: LayoutSource,
    pub entries: Vec<PartitionEntry>,
    pub descriptors: Vec<VerityDescriptor>,
    pub warnings: Vec<String>,
}

/// One row of the JSON partition listing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub name: Option<String>,
    pub role: PartitionRole,
    pub offset: u64,
    pub size: u64,
    pub sha256: String,
}

impl PartitionMap {
    pub fn find_role(&self, role: PartitionRole) -> Option<&PartitionEntry> {
        self.entries.iter().find(|e| e.role == role)
    }

    /// Entries other than gap filler.
    pub fn named_regions(&self) -> impl Iterator<Item = &PartitionEntry> {
        self.entries.iter().filter(|e| e.role != PartitionRole::Unknown)
    }

    pub fn records(&self, image: &EvidenceImage) -> Result<Vec<PartitionRecord>, ImageError> {
        self.entries
            .iter()
            .map(|e| {
                Ok(PartitionRecord {
                    name: e.name.clone(),
                    role: e.role,
                    offset: e.offset,
                    size: e.size,
                    sha256: image.region_sha256(e)?,
                })
            })
            .collect()
    }
}

/// Builds the partition map from the first descriptor region, falling back to
/// a static layout keyed by image size.
pub fn parse_partition_table(image: &EvidenceImage) -> Result<PartitionMap, ImageError> {
    let mut warnings = Vec::new();
    if let Some((region_offset, region_size)) = locate_descriptor_region(image)? {
        let raw = image.read_bytes(region_offset, region_size as usize)?;
        let text = String::from_utf8_lossy(&raw);
        let region = descriptor::split_region(&text);
        warnings.extend(region.warnings);

        let mut described = Vec::new();
        let mut descriptors = Vec::new();
        for file in &region.files {
            match parse_verity_descriptor(file.body.as_bytes()) {
                Ok(d) => {
                    if d.end_within(image.size()) {
                        described.push(entry_from_descriptor(&d));
                        descriptors.push(d);
                    } else {
                        warnings.push(format!(
                            "descriptor {}: region [{:#x}, +{:#x}) exceeds image",
                            file.file_name, d.offset, d.size
                        ));
                    }
                }
                Err(e) => warnings.push(format!("descriptor {}: {e}; skipped", file.file_name)),
            }
        }

        if !described.is_empty() {
            let mut entries = vec![PartitionEntry::new(region_offset, region_size, None, PartitionRole::Descriptor)];
            entries.extend(described);
            entries.sort_by_key(|e| (e.offset, e.size));
            let mut kept: Vec<PartitionEntry> = Vec::with_capacity(entries.len());
            for e in entries {
                if kept.last().is_some_and(|prev| e.offset < prev.end()) {
                    warnings.push(format!(
                        "partition {:?} at {:#x} overlaps its predecessor; skipped",
                        e.name, e.offset
                    ));
                    continue;
                }
                kept.push(e);
            }
            let tail_start = kept.last().map_or(0, PartitionEntry::end);
            if tail_start < image.size() {
                kept.extend(classify_tail(image, tail_start)?);
            }
            return Ok(PartitionMap {
                image_size: image.size(),
                source: LayoutSource::Descriptors { region_offset },
                entries: fill_gaps(kept, image.size()),
                descriptors,
                warnings,
            });
        }
        warnings.push(format!("descriptor region at {region_offset:#x} holds no usable descriptors"));
    } else {
        warnings.push("no descriptor region found".into());
    }

    Ok(static_map(image.size(), warnings))
}

impl VerityDescriptor {
    fn end_within(&self, image_size: u64) -> bool {
        self.offset.checked_add(self.size).is_some_and(|e| e <= image_size)
    }
}

fn entry_from_descriptor(d: &VerityDescriptor) -> PartitionEntry {
    let role = d
        .extras
        .get("role")
        .and_then(|r| r.parse().ok())
        .unwrap_or_else(|| PartitionRole::from_label(&d.target));
    let name = d.is_named().then(|| d.target.clone());
    PartitionEntry::new(d.offset, d.size, name, role)
}

/// Static layout for the image size, or one unknown entry when none applies.
pub fn static_map(image_size: u64, mut warnings: Vec<String>) -> PartitionMap {
    match layout::layout_for_size(image_size) {
        Some(layout) => PartitionMap {
            image_size,
            source: LayoutSource::StaticProfile { profile: layout.name.into() },
            entries: fill_gaps(static_entries(layout, image_size), image_size),
            descriptors: Vec::new(),
            warnings,
        },
        None => {
            warnings.push(format!("no static layout for image size {image_size}"));
            PartitionMap {
                image_size,
                source: LayoutSource::None,
                entries: fill_gaps(Vec::new(), image_size),
                descriptors: Vec::new(),
                warnings,
            }
        }
    }
}

fn static_entries(layout: &StaticLayout, image_size: u64) -> Vec<PartitionEntry> {
    layout
        .regions
        .iter()
        .filter(|r| r.offset < image_size)
        .map(|r| {
            let size = r.size.unwrap_or(image_size - r.offset).min(image_size - r.offset);
            PartitionEntry::new(r.offset, size, r.name.map(String::from), r.role)
        })
        .collect()
}

/// Inserts `unknown` entries for every uncovered byte range.
fn fill_gaps(entries: Vec<PartitionEntry>, image_size: u64) -> Vec<PartitionEntry> {
    let mut out = Vec::with_capacity(entries.len() * 2 + 1);
    let mut cursor = 0;
    for e in entries {
        if e.offset > cursor {
            out.push(PartitionEntry::new(cursor, e.offset - cursor, None, PartitionRole::Unknown));
        }
        cursor = e.end();
        out.push(e);
    }
    if cursor < image_size {
        out.push(PartitionEntry::new(cursor, image_size - cursor, None, PartitionRole::Unknown));
    }
    out
}

/// Sector-aligned scan of the image head for the descriptor region header.
fn locate_descriptor_region(image: &EvidenceImage) -> Result<Option<(u64, u64)>, ImageError> {
    let limit = image.size().min(DESCRIPTOR_SCAN_LIMIT);
    let magic = descriptor::REGION_MAGIC.as_bytes();
    let mut reader = image.read_range(0, limit)?;
    let mut buf = vec![0u8; CHUNK];
    let mut base = 0u64;
    loop {
        let n = read_full(&mut reader, &mut buf)?;
        if n == 0 {
            return Ok(None);
        }
        let mut at = 0;
        while at < n {
            if buf[at] == magic[0] && buf[at..n].starts_with(magic) {
                let offset = base + at as u64;
                let head = image.read_bytes(offset, (image.size() - offset).min(256) as usize)?;
                if let Some(size) = descriptor::parse_region_header(&head) {
                    let size = size.min(image.size() - offset);
                    return Ok(Some((offset, size)));
                }
            }
            at += SECTOR_SIZE as usize;
        }
        base += n as u64;
    }
}

fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// The region past the last descriptor is unallocated unless a LUKS header
/// starts at one of its sector boundaries.
fn classify_tail(image: &EvidenceImage, tail_start: u64) -> Result<Vec<PartitionEntry>, ImageError> {
    let image_size = image.size();
    let first_sector = tail_start.div_ceil(SECTOR_SIZE) * SECTOR_SIZE;
    let probe_end = image_size.min(tail_start.saturating_add(LUKS_PROBE_LIMIT));
    let mut at = first_sector;
    while at + crate::luks::LUKS_MAGIC.len() as u64 <= probe_end {
        let head = image.read_bytes(at, crate::luks::LUKS_MAGIC.len())?;
        if head == crate::luks::LUKS_MAGIC {
            let mut out = Vec::new();
            if at > tail_start {
                out.push(PartitionEntry::new(tail_start, at - tail_start, None, PartitionRole::Unknown));
            }
            out.push(PartitionEntry::new(at, image_size - at, None, PartitionRole::UserdataEncrypted));
            return Ok(out);
        }
        at += SECTOR_SIZE;
    }
    Ok(vec![PartitionEntry::new(tail_start, image_size - tail_start, None, PartitionRole::Unallocated)])
}
