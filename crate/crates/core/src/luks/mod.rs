//! LUKS1 header parsing, key-slot unlock and payload decryption.
//!
//! On-disk layout (all integers big-endian):
//!
//! | offset | size | field                 |
//! |--------|------|-----------------------|
//! | 0      | 6    | magic `LUKS\xba\xbe`  |
//! | 6      | 2    | version               |
//! | 8      | 32   | cipher name           |
//! | 40     | 32   | cipher mode           |
//! | 72     | 32   | hash spec             |
//! | 104    | 4    | payload offset (sectors) |
//! | 108    | 4    | key bytes             |
//! | 112    | 20   | master key digest     |
//! | 132    | 32   | digest salt           |
//! | 164    | 4    | digest iterations     |
//! | 168    | 40   | UUID                  |
//! | 208    | 384  | 8 key slots x 48 bytes |

mod af;
pub mod keyfile;
mod xts;

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image::{EvidenceImage, ImageError, PartitionEntry, PartitionRole, SECTOR_SIZE};
pub use keyfile::{hunt_keyfiles, KeyfileCandidate, KEYFILE_NAME};
pub use xts::{IvMode, XtsDecryptor};

pub const LUKS_MAGIC: [u8; 6] = *b"LUKS\xba\xbe";
pub const PHDR_LEN: usize = 592;
pub const NUM_KEY_SLOTS: usize = 8;
pub const SLOT_ENABLED: u32 = 0x00AC_71F3;
pub const SLOT_DISABLED: u32 = 0x0000_DEAD;
pub const AF_STRIPES: u32 = 4000;
pub const MK_DIGEST_LEN: usize = 20;
pub const SALT_LEN: usize = 32;
const FIELD_LEN: usize = 32;
const UUID_LEN: usize = 40;
const SLOT_LEN: usize = 48;
const SLOTS_AT: usize = 208;

#[derive(Debug, Error)]
pub enum LuksError {
    #[error("header shorter than {PHDR_LEN} bytes ({0})")]
    Truncated(usize),
    #[error("bad LUKS magic")]
    BadMagic,
    #[error("LUKS2 unsupported: only LUKS version 1 headers can be unlocked")]
    Luks2Unsupported,
    #[error("unsupported LUKS version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported key size {0} bytes")]
    UnsupportedKeySize(u32),
    #[error("key slot {slot}: {reason}")]
    InvalidKeySlot { slot: usize, reason: &'static str },
    #[error("unsupported cipher {0}")]
    UnsupportedCipher(String),
    #[error("unsupported hash spec {0:?} (expected sha256 or sha1)")]
    UnsupportedHash(String),
    #[error("key material is empty")]
    EmptyKeyMaterial,
    #[error("no active key slot")]
    NoActiveSlot,
    #[error("wrong key: master key digest did not verify for any active slot")]
    WrongKey,
    #[error("master key has not been verified against the header digest")]
    UnverifiedKey,
    #[error("region is not an encrypted userdata partition (role {0})")]
    WrongRole(PartitionRole),
    #[error("payload truncated: {0}")]
    TruncatedPayload(String),
    #[error("refusing to write the plaintext over the evidence image")]
    OutputIsEvidence,
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySlot {
    pub active: bool,
    pub iterations: u32,
    #[serde(with = "hex_bytes")]
    pub salt: [u8; SALT_LEN],
    /// Start of the slot's AF material, in sectors from the header.
    pub key_material_offset: u32,
    pub stripes: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LuksHeader {
    pub version: u16,
    pub cipher_name: String,
    pub cipher_mode: String,
    pub hash_spec: String,
    /// Sectors from the header to the first payload sector.
    pub payload_offset: u32,
    pub key_bytes: u32,
    #[serde(with = "hex_bytes")]
    pub mk_digest: [u8; MK_DIGEST_LEN],
    #[serde(with = "hex_bytes")]
    pub mk_digest_salt: [u8; SALT_LEN],
    pub mk_digest_iterations: u32,
    pub uuid: String,
    pub slots: Vec<KeySlot>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum HashSpec {
    Sha1,
    Sha256,
}

impl HashSpec {
    pub fn parse(spec: &str) -> Result<Self, LuksError> {
        match spec.to_ascii_lowercase().as_str() {
            "sha256" => Ok(Self::Sha256),
            "sha1" => Ok(Self::Sha1),
            _ => Err(LuksError::UnsupportedHash(spec.to_string())),
        }
    }

    pub fn pbkdf2(self, password: &[u8], salt: &[u8], rounds: u32, out: &mut [u8]) {
        match self {
            Self::Sha256 => pbkdf2::pbkdf2_hmac::<Sha256>(password, salt, rounds, out),
            Self::Sha1 => pbkdf2::pbkdf2_hmac::<sha1::Sha1>(password, salt, rounds, out),
        }
    }

    fn af_merge(self, material: &[u8], block: usize, stripes: usize) -> Vec<u8> {
        match self {
            Self::Sha256 => af::merge::<Sha256>(material, block, stripes),
            Self::Sha1 => af::merge::<sha1::Sha1>(material, block, stripes),
        }
    }
}

fn be_u16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn cstr(b: &[u8]) -> String {
    let end = b.iter().position(|c| *c == 0).unwrap_or(b.len());
    String::from_utf8_lossy(&b[..end]).into_owned()
}

fn put_cstr(dst: &mut [u8], s: &str) {
    let n = s.len().min(dst.len());
    dst[..n].copy_from_slice(&s.as_bytes()[..n]);
}

/// Decodes the 592-byte LUKS1 header at the start of `bytes`.
pub fn parse_luks_header(bytes: &[u8]) -> Result<LuksHeader, LuksError> {
    if bytes.len() < LUKS_MAGIC.len() + 2 || bytes[..6] != LUKS_MAGIC {
        return Err(LuksError::BadMagic);
    }
    match be_u16(bytes, 6) {
        1 => {}
        2 => return Err(LuksError::Luks2Unsupported),
        v => return Err(LuksError::UnsupportedVersion(v)),
    }
    if bytes.len() < PHDR_LEN {
        return Err(LuksError::Truncated(bytes.len()));
    }

    let key_bytes = be_u32(bytes, 108);
    if key_bytes != 32 && key_bytes != 64 {
        return Err(LuksError::UnsupportedKeySize(key_bytes));
    }

    let slots = (0..NUM_KEY_SLOTS)
        .map(|i| {
            let s = &bytes[SLOTS_AT + i * SLOT_LEN..SLOTS_AT + (i + 1) * SLOT_LEN];
            let active = match be_u32(s, 0) {
                SLOT_ENABLED => true,
                SLOT_DISABLED => false,
                _ => return Err(LuksError::InvalidKeySlot { slot: i, reason: "unknown activity marker" }),
            };
            let slot = KeySlot {
                active,
                iterations: be_u32(s, 4),
                salt: s[8..40].try_into().expect("32 bytes"),
                key_material_offset: be_u32(s, 40),
                stripes: be_u32(s, 44),
            };
            if slot.active && slot.iterations == 0 {
                return Err(LuksError::InvalidKeySlot { slot: i, reason: "active with zero iterations" });
            }
            if slot.active && slot.stripes != AF_STRIPES {
                return Err(LuksError::InvalidKeySlot { slot: i, reason: "stripe count is not 4000" });
            }
            Ok(slot)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(LuksHeader {
        version: 1,
        cipher_name: cstr(&bytes[8..40]),
        cipher_mode: cstr(&bytes[40..72]),
        hash_spec: cstr(&bytes[72..104]),
        payload_offset: be_u32(bytes, 104),
        key_bytes,
        mk_digest: bytes[112..132].try_into().expect("20 bytes"),
        mk_digest_salt: bytes[132..164].try_into().expect("32 bytes"),
        mk_digest_iterations: be_u32(bytes, 164),
        uuid: cstr(&bytes[168..208]),
        slots,
    })
}

impl LuksHeader {
    /// Encodes the 592-byte on-disk header.
    pub fn to_bytes(&self) -> [u8; PHDR_LEN] {
        let mut out = [0u8; PHDR_LEN];
        out[..6].copy_from_slice(&LUKS_MAGIC);
        out[6..8].copy_from_slice(&self.version.to_be_bytes());
        put_cstr(&mut out[8..8 + FIELD_LEN], &self.cipher_name);
        put_cstr(&mut out[40..40 + FIELD_LEN], &self.cipher_mode);
        put_cstr(&mut out[72..72 + FIELD_LEN], &self.hash_spec);
        out[104..108].copy_from_slice(&self.payload_offset.to_be_bytes());
        out[108..112].copy_from_slice(&self.key_bytes.to_be_bytes());
        out[112..132].copy_from_slice(&self.mk_digest);
        out[132..164].copy_from_slice(&self.mk_digest_salt);
        out[164..168].copy_from_slice(&self.mk_digest_iterations.to_be_bytes());
        put_cstr(&mut out[168..168 + UUID_LEN], &self.uuid);
        for (i, slot) in self.slots.iter().take(NUM_KEY_SLOTS).enumerate() {
            let s = &mut out[SLOTS_AT + i * SLOT_LEN..SLOTS_AT + (i + 1) * SLOT_LEN];
            let marker = if slot.active { SLOT_ENABLED } else { SLOT_DISABLED };
            s[0..4].copy_from_slice(&marker.to_be_bytes());
            s[4..8].copy_from_slice(&slot.iterations.to_be_bytes());
            s[8..40].copy_from_slice(&slot.salt);
            s[40..44].copy_from_slice(&slot.key_material_offset.to_be_bytes());
            s[44..48].copy_from_slice(&slot.stripes.to_be_bytes());
        }
        out
    }

    pub fn payload_offset_bytes(&self) -> u64 {
        u64::from(self.payload_offset) * SECTOR_SIZE
    }

    pub fn iv_mode(&self) -> Result<IvMode, LuksError> {
        if self.cipher_name != "aes" {
            return Err(LuksError::UnsupportedCipher(format!("{}-{}", self.cipher_name, self.cipher_mode)));
        }
        IvMode::from_cipher_mode(&self.cipher_mode)
            .ok_or_else(|| LuksError::UnsupportedCipher(format!("{}-{}", self.cipher_name, self.cipher_mode)))
    }

    pub fn active_slots(&self) -> impl Iterator<Item = (usize, &KeySlot)> {
        self.slots.iter().enumerate().filter(|(_, s)| s.active)
    }
}

/// Volume master key. Only [`unlock`] produces a verified key.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterKey {
    bytes: Vec<u8>,
    verified: bool,
    slot: Option<usize>,
}

impl MasterKey {
    /// Wraps key bytes of unknown provenance; payload decryption refuses it.
    pub fn unverified(bytes: Vec<u8>) -> Self {
        Self { bytes, verified: false, slot: None }
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    /// Index of the key slot that opened the volume.
    pub fn slot(&self) -> Option<usize> {
        self.slot
    }

    pub fn expose(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterKey")
            .field("len", &self.bytes.len())
            .field("verified", &self.verified)
            .field("slot", &self.slot)
            .finish_non_exhaustive()
    }
}

/// Checks a candidate master key against the header digest.
pub fn verify_master_key(header: &LuksHeader, candidate: &[u8]) -> Result<bool, LuksError> {
    let hash = HashSpec::parse(&header.hash_spec)?;
    let mut digest = [0u8; MK_DIGEST_LEN];
    hash.pbkdf2(candidate, &header.mk_digest_salt, header.mk_digest_iterations, &mut digest);
    Ok(digest == header.mk_digest)
}

/// Tries every active slot, lowest index first, and returns the first master
/// key whose digest verifies. `volume` reads the LUKS partition from its header.
pub fn unlock<R: Read + Seek>(header: &LuksHeader, volume: &mut R, key_material: &[u8]) -> Result<MasterKey, LuksError> {
    if key_material.is_empty() {
        return Err(LuksError::EmptyKeyMaterial);
    }
    let hash = HashSpec::parse(&header.hash_spec)?;
    let iv_mode = header.iv_mode()?;
    let key_bytes = header.key_bytes as usize;
    let mut any_active = false;

    for (index, slot) in header.active_slots() {
        any_active = true;
        let mut slot_key = vec![0u8; key_bytes];
        hash.pbkdf2(key_material, &slot.salt, slot.iterations, &mut slot_key);

        let af_len = key_bytes * slot.stripes as usize;
        let sectors = af_len.div_ceil(SECTOR_SIZE as usize);
        let mut material = vec![0u8; sectors * SECTOR_SIZE as usize];
        volume.seek(SeekFrom::Start(u64::from(slot.key_material_offset) * SECTOR_SIZE))?;
        volume.read_exact(&mut material)?;
        XtsDecryptor::new(&slot_key, iv_mode)?.decrypt_sectors(&mut material, 0, SECTOR_SIZE as usize);

        let candidate = hash.af_merge(&material, key_bytes, slot.stripes as usize);
        if verify_master_key(header, &candidate)? {
            return Ok(MasterKey { bytes: candidate, verified: true, slot: Some(index) });
        }
    }
    if any_active {
        Err(LuksError::WrongKey)
    } else {
        Err(LuksError::NoActiveSlot)
    }
}

/// Summary of a decrypted payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadReport {
    pub bytes: u64,
    pub sha256: String,
}

/// Decrypts `len` payload bytes from `reader` (positioned at the first
/// payload sector) into `writer`.
pub fn decrypt_payload_stream<R: Read, W: Write>(
    header: &LuksHeader,
    master_key: &MasterKey,
    reader: &mut R,
    len: u64,
    writer: &mut W,
) -> Result<PayloadReport, LuksError> {
    if !master_key.is_verified() {
        return Err(LuksError::UnverifiedKey);
    }
    if !len.is_multiple_of(SECTOR_SIZE) {
        return Err(LuksError::TruncatedPayload(format!("{len} bytes is not a whole number of sectors")));
    }
    let cipher = XtsDecryptor::new(master_key.expose(), header.iv_mode()?)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1024 * 1024];
    let mut sector = 0u64;
    let mut remaining = len;
    while remaining > 0 {
        let n = remaining.min(buf.len() as u64) as usize;
        reader.read_exact(&mut buf[..n]).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => LuksError::TruncatedPayload(format!("ended {remaining} bytes early")),
            _ => LuksError::Io(e),
        })?;
        cipher.decrypt_sectors(&mut buf[..n], sector, SECTOR_SIZE as usize);
        hasher.update(&buf[..n]);
        writer.write_all(&buf[..n])?;
        sector += n as u64 / SECTOR_SIZE;
        remaining -= n as u64;
    }
    writer.flush()?;
    Ok(PayloadReport { bytes: len, sha256: hex::encode(hasher.finalize()) })
}

/// Decrypts the payload of an encrypted userdata region into a new file at `out`.
/// Output length is the region size minus the payload offset.
pub fn decrypt_payload(
    image: &EvidenceImage,
    entry: &PartitionEntry,
    header: &LuksHeader,
    master_key: &MasterKey,
    out: &Path,
) -> Result<PayloadReport, LuksError> {
    if !master_key.is_verified() {
        return Err(LuksError::UnverifiedKey);
    }
    if entry.role != PartitionRole::UserdataEncrypted {
        return Err(LuksError::WrongRole(entry.role));
    }
    let skip = header.payload_offset_bytes();
    let len = entry
        .size
        .checked_sub(skip)
        .ok_or_else(|| LuksError::TruncatedPayload(format!("region of {} bytes ends before payload offset {skip}", entry.size)))?;
    if image.is_same_file(out) {
        return Err(LuksError::OutputIsEvidence);
    }
    let mut reader = image.read_region(entry)?;
    reader.seek(SeekFrom::Start(skip))?;
    let mut writer = BufWriter::new(File::create(out)?);
    decrypt_payload_stream(header, master_key, &mut reader, len, &mut writer)
}

mod hex_bytes {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let text = String::deserialize(d)?;
        let v = hex::decode(&text).map_err(de::Error::custom)?;
        v.try_into().map_err(|_| de::Error::custom(format!("expected {N} bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn sample_header() -> LuksHeader {
        let slots = (0..NUM_KEY_SLOTS)
            .map(|i| KeySlot {
                active: i == 0,
                iterations: if i == 0 { 1000 } else { 0 },
                salt: [i as u8; SALT_LEN],
                key_material_offset: 8 + 256 * i as u32,
                stripes: AF_STRIPES,
            })
            .collect();
        LuksHeader {
            version: 1,
            cipher_name: "aes".into(),
            cipher_mode: "xts-plain64".into(),
            hash_spec: "sha256".into(),
            payload_offset: 4096,
            key_bytes: 32,
            mk_digest: [9; MK_DIGEST_LEN],
            mk_digest_salt: [8; SALT_LEN],
            mk_digest_iterations: 1000,
            uuid: "0f1e2d3c-4b5a-6978-8796-a5b4c3d2e1f0".into(),
            slots,
        }
    }

    #[test]
    fn zero_region_is_bad_magic() {
        assert!(matches!(parse_luks_header(&[0u8; PHDR_LEN]), Err(LuksError::BadMagic)));
    }

    #[test]
    fn luks2_is_refused() {
        let mut raw = sample_header().to_bytes();
        raw[6..8].copy_from_slice(&2u16.to_be_bytes());
        assert!(matches!(parse_luks_header(&raw), Err(LuksError::Luks2Unsupported)));
        raw[6..8].copy_from_slice(&7u16.to_be_bytes());
        assert!(matches!(parse_luks_header(&raw), Err(LuksError::UnsupportedVersion(7))));
    }

    #[test]
    fn short_header() {
        let raw = sample_header().to_bytes();
        assert!(matches!(parse_luks_header(&raw[..300]), Err(LuksError::Truncated(300))));
    }

    #[test]
    fn field_offsets() {
        let raw = sample_header().to_bytes();
        assert_eq!(&raw[..6], b"LUKS\xba\xbe");
        assert_eq!(&raw[8..11], b"aes");
        assert_eq!(&raw[104..108], &4096u32.to_be_bytes());
        assert_eq!(&raw[208..212], &SLOT_ENABLED.to_be_bytes());
        assert_eq!(&raw[256..260], &SLOT_DISABLED.to_be_bytes());
        let h = parse_luks_header(&raw).unwrap();
        assert_eq!(h.cipher_name, "aes");
        assert_eq!(h.cipher_mode, "xts-plain64");
        assert_eq!(h.key_bytes, 32);
        assert_eq!(h.active_slots().count(), 1);
    }

    #[test]
    fn invalid_slots_rejected() {
        let mut h = sample_header();
        h.slots[0].stripes = 2;
        assert!(matches!(parse_luks_header(&h.to_bytes()), Err(LuksError::InvalidKeySlot { slot: 0, .. })));
        let mut h = sample_header();
        h.key_bytes = 16;
        assert!(matches!(parse_luks_header(&h.to_bytes()), Err(LuksError::UnsupportedKeySize(16))));
    }

    #[test]
    fn all_slots_inactive() {
        let mut h = sample_header();
        h.slots[0].active = false;
        let mut vol = Cursor::new(vec![0u8; 4096]);
        assert!(matches!(unlock(&h, &mut vol, b"key"), Err(LuksError::NoActiveSlot)));
        assert!(matches!(unlock(&h, &mut vol, b""), Err(LuksError::EmptyKeyMaterial)));
    }

    #[test]
    fn wrong_key_returns_nothing() {
        let h = sample_header();
        let mut vol = Cursor::new(vec![0u8; 8 * 512 + 128_000]);
        assert!(matches!(unlock(&h, &mut vol, &[1u8; 32]), Err(LuksError::WrongKey)));
    }

    #[test]
    fn unsupported_hash() {
        let mut h = sample_header();
        h.hash_spec = "ripemd160".into();
        let mut vol = Cursor::new(vec![0u8; 512]);
        assert!(matches!(unlock(&h, &mut vol, b"k"), Err(LuksError::UnsupportedHash(_))));
    }

    #[test]
    fn unverified_key_refused() {
        let h = sample_header();
        let key = MasterKey::unverified(vec![0u8; 32]);
        let mut out = Vec::new();
        let r = decrypt_payload_stream(&h, &key, &mut Cursor::new(vec![0u8; 512]), 512, &mut out);
        assert!(matches!(r, Err(LuksError::UnverifiedKey)));
        assert!(out.is_empty());
    }

    #[test]
    fn debug_hides_key() {
        let text = format!("{:?}", MasterKey::unverified(vec![0x42; 32]));
        assert!(!text.contains("42"));
    }

    #[test]
    fn pbkdf2_sha256_known_answer() {
        // RFC 7914 section 11: PBKDF2-HMAC-SHA256("passwd", "salt", 1, 64), first 20 bytes.
        let mut out = [0u8; 20];
        HashSpec::Sha256.pbkdf2(b"passwd", b"salt", 1, &mut out);
        assert_eq!(hex::encode(out), "55ac046e56e3089fec1691c22544b605f9418521");
    }

    fn arb_slot() -> impl Strategy<Value = KeySlot> {
        (any::<bool>(), 1u32.., any::<[u8; 32]>(), any::<u32>()).prop_map(|(active, iterations, salt, off)| KeySlot {
            active,
            iterations: if active { iterations } else { 0 },
            salt,
            key_material_offset: off,
            stripes: AF_STRIPES,
        })
    }

    fn ascii(max: usize) -> impl Strategy<Value = String> {
        proptest::string::string_regex(&format!("[a-z0-9-]{{1,{max}}}")).unwrap()
    }

    proptest! {
        #[test]
        fn header_round_trip(
            cipher in ascii(31), mode in ascii(31), hash in ascii(31), uuid in ascii(39),
            payload in any::<u32>(), wide in any::<bool>(),
            digest in any::<[u8; 20]>(), dsalt in any::<[u8; 32]>(), iters in any::<u32>(),
            slots in proptest::collection::vec(arb_slot(), 8),
        ) {
            let h = LuksHeader {
                version: 1, cipher_name: cipher, cipher_mode: mode, hash_spec: hash,
                payload_offset: payload, key_bytes: if wide { 64 } else { 32 },
                mk_digest: digest, mk_digest_salt: dsalt, mk_digest_iterations: iters,
                uuid, slots,
            };
            let raw = h.to_bytes();
            let parsed = parse_luks_header(&raw).unwrap();
            prop_assert_eq!(&parsed, &h);
            prop_assert_eq!(parsed.to_bytes(), raw);
        }

        #[test]
        fn parse_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..700)) {
            let _ = parse_luks_header(&bytes);
        }
    }
}
