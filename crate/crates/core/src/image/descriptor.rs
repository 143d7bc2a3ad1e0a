//! Partition descriptor files.
//!
//! Each descriptor is line-oriented `key=value` text with the keys `name`,
//! `offset`, `size`, `hash` and `salt`; offsets and sizes are hex with a `0x`
//! prefix or decimal. The descriptor region holds several such files behind a
//! header line:
//!
//! ```text
//! #nyon-partition-descriptors v1 size=0x40000
//! [bui3xx-image.desc]
//! name=bui3xx-image
//! offset=0x100000
//! ...
//! ```
//!
//! The region ends at its declared size or at the first NUL byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REGION_MAGIC: &str = "#nyon-partition-descriptors";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("descriptor is missing mandatory key `{0}`")]
    MissingKey(&'static str),
    #[error("descriptor key `{key}` has invalid value {value:?}")]
    InvalidValue { key: String, value: String },
    #[error("descriptor line {line} is not key=value: {text:?}")]
    Syntax { line: usize, text: String },
    #[error("descriptor is not valid UTF-8")]
    Encoding,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerityDescriptor {
    /// Partition label; `-` marks an unnamed partition.
    pub target: String,
    pub offset: u64,
    pub size: u64,
    pub root_hash: String,
    pub salt: String,
    /// Keys outside the fixed set, preserved verbatim.
    pub extras: BTreeMap<String, String>,
}

impl VerityDescriptor {
    pub fn root_hash_bytes(&self) -> Vec<u8> {
        decode_hex_field(&self.root_hash).unwrap_or_default()
    }

    pub fn salt_bytes(&self) -> Vec<u8> {
        decode_hex_field(&self.salt).unwrap_or_default()
    }

    pub fn is_named(&self) -> bool {
        !self.target.is_empty() && self.target != "-"
    }
}

pub fn parse_number(text: &str) -> Option<u64> {
    let text = text.trim();
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        text.parse().ok()
    }
}

fn decode_hex_field(text: &str) -> Option<Vec<u8>> {
    if text == "-" {
        return Some(Vec::new());
    }
    hex::decode(text).ok()
}

pub fn parse_verity_descriptor(bytes: &[u8]) -> Result<VerityDescriptor, DescriptorError> {
    let text = std::str::from_utf8(bytes).map_err(|_| DescriptorError::Encoding)?;
    let mut fields = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(DescriptorError::Syntax { line: idx + 1, text: raw.to_string() });
        };
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }

    let mut take = |key: &'static str| fields.remove(key).ok_or(DescriptorError::MissingKey(key));
    let offset_text = take("offset")?;
    let size_text = take("size")?;
    let root_hash = take("hash")?;
    let salt = take("salt")?;
    let target = fields.remove("name").unwrap_or_else(|| "-".to_string());

    let invalid = |key: &str, value: &str| DescriptorError::InvalidValue { key: key.into(), value: value.into() };
    let offset = parse_number(&offset_text).ok_or_else(|| invalid("offset", &offset_text))?;
    let size = parse_number(&size_text)
        .filter(|s| *s > 0)
        .ok_or_else(|| invalid("size", &size_text))?;
    if decode_hex_field(&root_hash).is_none() {
        return Err(invalid("hash", &root_hash));
    }
    if decode_hex_field(&salt).is_none() {
        return Err(invalid("salt", &salt));
    }

    Ok(VerityDescriptor { target, offset, size, root_hash, salt, extras: fields })
}

/// One `[file]` block of a descriptor region.
#[derive(Debug)]
pub struct DescriptorFile<'a> {
    pub file_name: &'a str,
    pub body: String,
}

#[derive(Debug)]
pub struct DescriptorRegion<'a> {
    pub declared_size: u64,
    pub files: Vec<DescriptorFile<'a>>,
    pub warnings: Vec<String>,
}

/// Reads the header line; returns the declared region size.
pub fn parse_region_header(head: &[u8]) -> Option<u64> {
    let end = head.iter().position(|b| *b == b'\n').unwrap_or(head.len());
    let line = std::str::from_utf8(&head[..end]).ok()?;
    let rest = line.strip_prefix(REGION_MAGIC)?;
    rest.split_whitespace()
        .find_map(|tok| tok.strip_prefix("size="))
        .and_then(parse_number)
        .filter(|s| *s > 0)
}

pub fn split_region(text: &str) -> DescriptorRegion<'_> {
    let text = text.split('\0').next().unwrap_or("");
    let mut lines = text.lines();
    let declared_size = lines
        .next()
        .and_then(|l| parse_region_header(l.as_bytes()))
        .unwrap_or(0);

    let mut files: Vec<DescriptorFile<'_>> = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in lines.enumerate() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            files.push(DescriptorFile { file_name: name, body: String::new() });
        } else if let Some(file) = files.last_mut() {
            file.body.push_str(line);
            file.body.push('\n');
        } else if !trimmed.is_empty() && !trimmed.starts_with('#') {
            warnings.push(format!("descriptor region line {}: content outside any file", idx + 2));
        }
    }
    DescriptorRegion { declared_size, files, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IMAGE_DESC: &str = "name=bui3xx-image\noffset=0x2800000\nsize=0x3b9aca00\nhash=ab12\nsalt=00ff\n";

    #[test]
    fn parses_all_fields() {
        let d = parse_verity_descriptor(IMAGE_DESC.as_bytes()).unwrap();
        assert_eq!(d.target, "bui3xx-image");
        assert_eq!(d.offset, 0x2800000);
        assert_eq!(d.size, 1_000_000_000);
        assert_eq!(d.root_hash_bytes(), vec![0xab, 0x12]);
        assert_eq!(d.salt_bytes(), vec![0x00, 0xff]);
        assert!(d.extras.is_empty());
    }

    #[test]
    fn missing_salt_is_error() {
        let text = IMAGE_DESC.replace("salt=00ff\n", "");
        assert_eq!(parse_verity_descriptor(text.as_bytes()), Err(DescriptorError::MissingKey("salt")));
    }

    #[test]
    fn extra_keys_preserved() {
        let text = format!("{IMAGE_DESC}version=1\n");
        let d = parse_verity_descriptor(text.as_bytes()).unwrap();
        assert_eq!(d.extras.get("version").map(String::as_str), Some("1"));
    }

    #[test]
    fn rejects_bad_values() {
        let zero = IMAGE_DESC.replace("size=0x3b9aca00", "size=0");
        assert!(matches!(parse_verity_descriptor(zero.as_bytes()), Err(DescriptorError::InvalidValue { .. })));
        let hash = IMAGE_DESC.replace("hash=ab12", "hash=xyz");
        assert!(matches!(parse_verity_descriptor(hash.as_bytes()), Err(DescriptorError::InvalidValue { .. })));
        assert!(matches!(
            parse_verity_descriptor(b"offset 12\n"),
            Err(DescriptorError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn unnamed_descriptor() {
        let text = IMAGE_DESC.replace("name=bui3xx-image\n", "");
        let d = parse_verity_descriptor(text.as_bytes()).unwrap();
        assert!(!d.is_named());
    }

    #[test]
    fn region_split() {
        let text = format!("{REGION_MAGIC} v1 size=0x1000\n[a.desc]\n{IMAGE_DESC}[b.desc]\nname=x\n\0\0garbage");
        let region = split_region(&text);
        assert_eq!(region.declared_size, 0x1000);
        assert_eq!(region.files.len(), 2);
        assert_eq!(region.files[1].file_name, "b.desc");
        assert_eq!(region.files[1].body, "name=x\n");
        assert!(region.warnings.is_empty());
    }

    #[test]
    fn header_requires_magic_and_size() {
        assert_eq!(parse_region_header(b"#nyon-partition-descriptors v1 size=512\n"), Some(512));
        assert_eq!(parse_region_header(b"#nyon-partition-descriptors v1\n"), None);
        assert_eq!(parse_region_header(b"LUKS"), None);
    }
}
