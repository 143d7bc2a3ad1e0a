//! Raw eMMC-style images: a descriptor region, plaintext partitions, a
//! key-material partition holding the keyfile, and a LUKS1 userdata region
//! whose payload is the packed gen-2 tree.
//!
//! The region tables below are written out independently of the toolkit's
//! static layouts so that a mismatch between the two shows up in tests.
//! Encryption goes through OpenSSL; the toolkit's own LUKS code is never used
//! to produce fixtures.

use std::fs;
use std::io::{Seek, SeekFrom, Write};
use std::path::Path;

use nyonscope::canonical::sha256_hex;
use nyonscope::{FileTree, Generation};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::case::SyntheticCase;
use crate::emit::{emit_tree, GroundTruthManifest};
use crate::ForgeError;

pub const IMAGE_FILE: &str = "image.raw";
pub const TREE_DIR: &str = "tree";
pub const KEYFILE_NAME: &str = "crypto_keyfile.bin";
pub const KEYFILE_BYTES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 64 MiB image with the device's region order and roles.
    Desk,
    /// Sparse image at the 8 GB device's exact offsets.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageOptions {
    pub scale: Scale,
    /// Extra 32-byte files next to the real keyfile.
    pub decoys: usize,
}

impl Default for ImageOptions {
    fn default() -> Self {
        Self { scale: Scale::Desk, decoys: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutRegion {
    pub name: Option<String>,
    pub role: String,
    pub offset: u64,
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub scale: Scale,
    pub image_file: String,
    pub image_size: u64,
    /// Desk scale only; hashing a full-size image is left to the caller.
    pub image_sha256: Option<String>,
    /// Every region in offset order, userdata last.
    pub layout: Vec<LayoutRegion>,
    pub cipher: String,
    pub hash_spec: String,
    pub payload_offset_sectors: u32,
    pub mk_digest: String,
    /// SHA-256 of the complete decrypted payload. Full-scale images encrypt
    /// only the packed tree, so there it is `None`.
    pub plaintext_sha256: Option<String>,
    /// Length and digest of the packed tree at the start of the payload.
    pub packed_tree_len: u64,
    pub packed_tree_sha256: String,
    pub keyfile: PlantedFile,
    pub decoys: Vec<PlantedFile>,
}

struct Region {
    name: Option<&'static str>,
    role: &'static str,
    offset: u64,
    /// `None` runs to the end of the image.
    size: Option<u64>,
}

const fn r(name: Option<&'static str>, role: &'static str, offset: u64, size: Option<u64>) -> Region {
    Region { name, role, offset, size }
}

const FULL_SIZE: u64 = 0x1_D1F0_0000;
const FULL: [Region; 7] = [
    r(None, "descriptor", 0x40_0000, Some(16_000_000)),
    r(Some("bui3xx-image"), "system", 0x280_0000, Some(1_000_000_000)),
    r(Some("bui3xx-systemconfig"), "systemconfig", 0x4290_0000, Some(192_000_000)),
    r(Some("bui3xx-recovery"), "recovery", 0x4ea0_0000, Some(336_000_000)),
    r(None, "maps", 0x6ac0_0000, Some(5_000_000_000)),
    r(None, "keymaterial", 0x1_ac90_0000, Some(50_000_000)),
    r(None, "userdata-encrypted", 0x1_af90_0200, None),
];

const DESK_SIZE: u64 = 64 << 20;
const DESK: [Region; 7] = [
    r(None, "descriptor", 0x4_0000, Some(0x4_0000)),
    r(Some("bui3xx-image"), "system", 0x10_0000, Some(0x80_0000)),
    r(Some("bui3xx-systemconfig"), "systemconfig", 0x98_0000, Some(0x20_0000)),
    r(Some("bui3xx-recovery"), "recovery", 0xc0_0000, Some(0x30_0000)),
    r(None, "maps", 0x100_0000, Some(0x240_0000)),
    r(None, "keymaterial", 0x348_0000, Some(0x20_0000)),
    r(None, "userdata-encrypted", 0x370_0200, None),
];

fn regions(scale: Scale) -> (u64, &'static [Region]) {
    match scale {
        Scale::Desk => (DESK_SIZE, &DESK),
        Scale::Full => (FULL_SIZE, &FULL),
    }
}

/// The layout an image of this scale is written with.
pub fn layout(scale: Scale) -> Vec<LayoutRegion> {
    let (size, table) = regions(scale);
    table
        .iter()
        .map(|g| LayoutRegion {
            name: g.name.map(str::to_string),
            role: g.role.to_string(),
            offset: g.offset,
            size: g.size.unwrap_or(size - g.offset),
        })
        .collect()
}

/// Packs files into a tar archive with fixed metadata, sorted by path.
pub fn pack(files: &[(String, Vec<u8>)], mtime: u64) -> Result<Vec<u8>, ForgeError> {
    let mut sorted: Vec<&(String, Vec<u8>)> = files.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut builder = tar::Builder::new(Vec::new());
    for (path, bytes) in sorted {
        let mut header = tar::Header::new_gnu();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o600);
        header.set_uid(0);
        header.set_gid(0);
        header.set_mtime(mtime);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, path, bytes.as_slice()).map_err(|e| ForgeError::io(Path::new(path), e))?;
    }
    builder.into_inner().map_err(|e| ForgeError::io(Path::new("<tar>"), e))
}

fn tree_files(tree: &FileTree) -> Result<Vec<(String, Vec<u8>)>, ForgeError> {
    tree.files()
        .into_iter()
        .map(|rel| {
            let bytes = tree.read(&rel).map_err(|e| ForgeError::io(&tree.path(&rel), e))?;
            Ok((rel, bytes))
        })
        .collect()
}

fn descriptor_text(regions: &[LayoutRegion], rng: &mut impl RngCore) -> String {
    let region = &regions[0];
    let mut text = format!("#nyon-partition-descriptors v1 size={:#x}\n", region.size);
    for g in &regions[1..regions.len() - 1] {
        let mut hash = [0u8; 32];
        let mut salt = [0u8; 32];
        rng.fill_bytes(&mut hash);
        rng.fill_bytes(&mut salt);
        let label = g.name.clone().unwrap_or_else(|| "-".into());
        let file = g.name.clone().unwrap_or_else(|| g.role.clone());
        text.push_str(&format!(
            "[{file}.desc]\nname={label}\noffset={:#x}\nsize={:#x}\nhash={}\nsalt={}\n",
            g.offset,
            g.size,
            hex::encode(hash),
            hex::encode(salt)
        ));
        if g.name.is_none() {
            text.push_str(&format!("role={}\n", g.role));
        }
    }
    text
}

fn write_at(file: &mut fs::File, path: &Path, offset: u64, bytes: &[u8]) -> Result<(), ForgeError> {
    file.seek(SeekFrom::Start(offset)).map_err(|e| ForgeError::io(path, e))?;
    file.write_all(bytes).map_err(|e| ForgeError::io(path, e))
}

/// Writes `<out>/tree` (the plaintext gen-2 tree) and `<out>/image.raw`,
/// returning the tree's manifest extended with the image facts.
pub fn emit_image(case: &SyntheticCase, options: &ImageOptions, out: &Path) -> Result<GroundTruthManifest, ForgeError> {
    if case.generation != Generation::Gen2 {
        return Err(ForgeError::Unsupported("only gen-2 cases have a partition layout".into()));
    }
    if !cfg!(feature = "reference-luks") {
        return Err(ForgeError::ReferenceToolMissing);
    }
    let path = out.join(IMAGE_FILE);
    if path.symlink_metadata().is_ok() {
        return Err(ForgeError::OutputExists(path));
    }
    fs::create_dir_all(out).map_err(|e| ForgeError::io(out, e))?;
    let tree_root = out.join(TREE_DIR);
    if tree_root.exists() {
        fs::remove_dir_all(&tree_root).map_err(|e| ForgeError::io(&tree_root, e))?;
    }
    let (tree, mut manifest) = emit_tree(case, &tree_root)?;

    let mut rng = ChaCha20Rng::seed_from_u64(case.seed ^ 0x6e79_6f6e_696d_6167);
    let mtime = (case.epoch.millis() / 1000) as u64;
    let (image_size, _) = regions(options.scale);
    let layout = layout(options.scale);
    let role = |name: &str| layout.iter().find(|g| g.role == name).expect("layout has every role");

    let mut file = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path).map_err(|e| ForgeError::io(&path, e))?;
    file.set_len(image_size).map_err(|e| ForgeError::io(&path, e))?;

    write_at(&mut file, &path, layout[0].offset, descriptor_text(&layout, &mut rng).as_bytes())?;
    for (role_name, contents) in [
        ("system", "NAME=\"Nyon BUI\"\nVERSION_ID=3.2\n"),
        ("systemconfig", "region=EU\nunits=metric\n"),
        ("recovery", "recovery=1\n"),
    ] {
        let archive = pack(&[("etc/os-release".to_string(), contents.as_bytes().to_vec())], mtime)?;
        write_at(&mut file, &path, role(role_name).offset, &archive)?;
    }

    let mut keyfile = [0u8; KEYFILE_BYTES];
    rng.fill_bytes(&mut keyfile);
    let mut planted = vec![(KEYFILE_NAME.to_string(), keyfile.to_vec())];
    let mut decoys = Vec::new();
    for i in 0..options.decoys {
        let mut bytes = vec![0u8; KEYFILE_BYTES];
        rng.fill_bytes(&mut bytes);
        let name = format!("backup/slot{}.key", i + 1);
        decoys.push(PlantedFile { path: name.clone(), sha256: sha256_hex(&bytes) });
        planted.push((name, bytes));
    }
    // Not keyfile-sized; the hunt must skip it.
    let cert: Vec<u8> = (0..1200).map(|_| rng.gen_range(b'A'..=b'Z')).collect();
    planted.push(("certs/device.pem".to_string(), cert));
    write_at(&mut file, &path, role("keymaterial").offset, &pack(&planted, mtime)?)?;

    let packed = pack(&tree_files(&tree)?, mtime)?;
    let userdata = role("userdata-encrypted");
    let luks = reference::Luks1::new(&mut rng, &keyfile);
    let payload_len = userdata.size - luks.payload_offset_bytes();
    if (packed.len() as u64) > payload_len {
        return Err(ForgeError::Unsupported(format!("packed tree of {} bytes exceeds the userdata payload", packed.len())));
    }
    let plain_len = match options.scale {
        Scale::Desk => payload_len,
        Scale::Full => (packed.len() as u64).div_ceil(1 << 20) << 20,
    };
    let mut plaintext = packed.clone();
    plaintext.resize(plain_len as usize, 0);
    let plaintext_sha256 = (options.scale == Scale::Desk).then(|| sha256_hex(&plaintext));
    write_at(&mut file, &path, userdata.offset, &luks.header_and_key_material()?)?;
    write_at(&mut file, &path, userdata.offset + luks.payload_offset_bytes(), &luks.encrypt_payload(&plaintext)?)?;
    file.sync_all().map_err(|e| ForgeError::io(&path, e))?;
    drop(file);

    let image_sha256 = match options.scale {
        Scale::Desk => {
            let bytes = fs::read(&path).map_err(|e| ForgeError::io(&path, e))?;
            Some(sha256_hex(&bytes))
        }
        Scale::Full => None,
    };
    manifest.image = Some(ImageManifest {
        scale: options.scale,
        image_file: IMAGE_FILE.into(),
        image_size,
        image_sha256,
        layout,
        cipher: "aes-xts-plain64".into(),
        hash_spec: "sha256".into(),
        payload_offset_sectors: reference::PAYLOAD_OFFSET_SECTORS,
        mk_digest: hex::encode(luks.mk_digest()?),
        plaintext_sha256,
        packed_tree_len: packed.len() as u64,
        packed_tree_sha256: sha256_hex(&packed),
        keyfile: PlantedFile { path: KEYFILE_NAME.into(), sha256: sha256_hex(&keyfile) },
        decoys,
    });
    Ok(manifest)
}

#[cfg(feature = "reference-luks")]
mod reference {
    //! LUKS1 on-disk format written with OpenSSL primitives.

    use openssl::hash::MessageDigest;
    use openssl::pkcs5::pbkdf2_hmac;
    use openssl::sha::Sha256;
    use openssl::symm::{Cipher, Crypter, Mode};
    use rand::RngCore;

    use crate::ForgeError;

    pub const PAYLOAD_OFFSET_SECTORS: u32 = 4096;
    const KEY_BYTES: usize = 64;
    const STRIPES: usize = 4000;
    const SLOT_ITERATIONS: u32 = 2000;
    const DIGEST_ITERATIONS: u32 = 1000;
    const SLOT_STRIDE_SECTORS: u32 = 504;

    pub struct Luks1 {
        master_key: [u8; KEY_BYTES],
        digest_salt: [u8; 32],
        slot_salt: [u8; 32],
        stripes: Vec<u8>,
        uuid: String,
        passphrase: Vec<u8>,
    }

    fn err(e: openssl::error::ErrorStack) -> ForgeError {
        ForgeError::Crypto(e.to_string())
    }

    fn pbkdf2(pass: &[u8], salt: &[u8], iterations: u32, out: &mut [u8]) -> Result<(), ForgeError> {
        pbkdf2_hmac(pass, salt, iterations as usize, MessageDigest::sha256(), out).map_err(err)
    }

    /// Hashes each digest-sized block with its big-endian index in front.
    fn diffuse(block: &[u8]) -> Vec<u8> {
        block
            .chunks(32)
            .enumerate()
            .flat_map(|(i, chunk)| {
                let mut h = Sha256::new();
                h.update(&(i as u32).to_be_bytes());
                h.update(chunk);
                h.finish()[..chunk.len()].to_vec()
            })
            .collect()
    }

    fn xts(key: &[u8], data: &[u8]) -> Result<Vec<u8>, ForgeError> {
        let cipher = Cipher::aes_256_xts();
        let mut out = vec![0u8; data.len() + 16];
        let mut written = 0;
        for (n, sector) in data.chunks(512).enumerate() {
            let mut iv = [0u8; 16];
            iv[..8].copy_from_slice(&(n as u64).to_le_bytes());
            let mut c = Crypter::new(cipher, Mode::Encrypt, key, Some(&iv)).map_err(err)?;
            let mut n_out = c.update(sector, &mut out[written..]).map_err(err)?;
            n_out += c.finalize(&mut out[written + n_out..]).map_err(err)?;
            written += n_out;
        }
        out.truncate(written);
        Ok(out)
    }

    impl Luks1 {
        pub fn new(rng: &mut impl RngCore, passphrase: &[u8]) -> Self {
            let mut master_key = [0u8; KEY_BYTES];
            let mut digest_salt = [0u8; 32];
            let mut slot_salt = [0u8; 32];
            rng.fill_bytes(&mut master_key);
            rng.fill_bytes(&mut digest_salt);
            rng.fill_bytes(&mut slot_salt);
            let mut stripes = vec![0u8; KEY_BYTES * (STRIPES - 1)];
            rng.fill_bytes(&mut stripes);
            let mut u = [0u8; 16];
            rng.fill_bytes(&mut u);
            let h = hex::encode(u);
            let uuid = format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..]);
            Self { master_key, digest_salt, slot_salt, stripes, uuid, passphrase: passphrase.to_vec() }
        }

        pub fn payload_offset_bytes(&self) -> u64 {
            PAYLOAD_OFFSET_SECTORS as u64 * 512
        }

        pub fn mk_digest(&self) -> Result<[u8; 20], ForgeError> {
            let mut d = [0u8; 20];
            pbkdf2(&self.master_key, &self.digest_salt, DIGEST_ITERATIONS, &mut d)?;
            Ok(d)
        }

        /// Anti-forensic split: random stripes, the last one chosen so that
        /// folding all of them with the diffuser yields the master key.
        fn split(&self) -> Vec<u8> {
            let mut acc = vec![0u8; KEY_BYTES];
            for stripe in self.stripes.chunks(KEY_BYTES) {
                let mixed: Vec<u8> = acc.iter().zip(stripe).map(|(a, s)| a ^ s).collect();
                acc = diffuse(&mixed);
            }
            let mut material = self.stripes.clone();
            material.extend(acc.iter().zip(&self.master_key).map(|(a, m)| a ^ m));
            material
        }

        fn field(text: &str, len: usize) -> Vec<u8> {
            let mut f = text.as_bytes().to_vec();
            f.resize(len, 0);
            f
        }

        /// Header plus slot 0 material, laid out from the start of the region.
        pub fn header_and_key_material(&self) -> Result<Vec<u8>, ForgeError> {
            let mut h = Vec::with_capacity(592);
            h.extend_from_slice(b"LUKS\xba\xbe");
            h.extend_from_slice(&1u16.to_be_bytes());
            h.extend(Self::field("aes", 32));
            h.extend(Self::field("xts-plain64", 32));
            h.extend(Self::field("sha256", 32));
            h.extend_from_slice(&PAYLOAD_OFFSET_SECTORS.to_be_bytes());
            h.extend_from_slice(&(KEY_BYTES as u32).to_be_bytes());
            h.extend_from_slice(&self.mk_digest()?);
            h.extend_from_slice(&self.digest_salt);
            h.extend_from_slice(&DIGEST_ITERATIONS.to_be_bytes());
            h.extend(Self::field(&self.uuid, 40));
            for slot in 0..8u32 {
                let offset = 8 + slot * SLOT_STRIDE_SECTORS;
                if slot == 0 {
                    h.extend_from_slice(&0x00AC_71F3u32.to_be_bytes());
                    h.extend_from_slice(&SLOT_ITERATIONS.to_be_bytes());
                    h.extend_from_slice(&self.slot_salt);
                } else {
                    h.extend_from_slice(&0x0000_DEADu32.to_be_bytes());
                    h.extend_from_slice(&0u32.to_be_bytes());
                    h.extend_from_slice(&[0u8; 32]);
                }
                h.extend_from_slice(&offset.to_be_bytes());
                h.extend_from_slice(&(STRIPES as u32).to_be_bytes());
            }
            debug_assert_eq!(h.len(), 592);

            let mut slot_key = [0u8; KEY_BYTES];
            pbkdf2(&self.passphrase, &self.slot_salt, SLOT_ITERATIONS, &mut slot_key)?;
            let material = xts(&slot_key, &self.split())?;
            h.resize(8 * 512, 0);
            h.extend(material);
            Ok(h)
        }

        pub fn encrypt_payload(&self, plaintext: &[u8]) -> Result<Vec<u8>, ForgeError> {
            xts(&self.master_key, plaintext)
        }
    }
}

#[cfg(not(feature = "reference-luks"))]
mod reference {
    use crate::ForgeError;

    pub const PAYLOAD_OFFSET_SECTORS: u32 = 4096;

    pub struct Luks1;

    impl Luks1 {
        pub fn new(_: &mut impl rand::RngCore, _: &[u8]) -> Self {
            Self
        }
        pub fn payload_offset_bytes(&self) -> u64 {
            PAYLOAD_OFFSET_SECTORS as u64 * 512
        }
        pub fn mk_digest(&self) -> Result<[u8; 20], ForgeError> {
            Err(ForgeError::ReferenceToolMissing)
        }
        pub fn header_and_key_material(&self) -> Result<Vec<u8>, ForgeError> {
            Err(ForgeError::ReferenceToolMissing)
        }
        pub fn encrypt_payload(&self, _: &[u8]) -> Result<Vec<u8>, ForgeError> {
            Err(ForgeError::ReferenceToolMissing)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_are_ordered_and_disjoint() {
        for scale in [Scale::Desk, Scale::Full] {
            let (size, _) = regions(scale);
            let l = layout(scale);
            assert_eq!(l.last().unwrap().role, "userdata-encrypted");
            assert_eq!(l[l.len() - 2].role, "keymaterial");
            for w in l.windows(2) {
                assert!(w[0].offset + w[0].size <= w[1].offset, "{w:?}");
            }
            assert_eq!(l.last().unwrap().offset + l.last().unwrap().size, size);
            assert!(l.iter().all(|g| g.offset % 512 == 0));
        }
    }

    #[test]
    fn full_scale_offsets_are_the_device_offsets() {
        let offsets: Vec<u64> = layout(Scale::Full).iter().map(|g| g.offset).collect();
        assert_eq!(offsets, [0x400000, 0x2800000, 0x42900000, 0x4ea00000, 0x6ac00000, 0x1ac900000, 0x1af900200]);
        assert_eq!(FULL_SIZE, 0x1D1F00000);
    }

    #[test]
    fn pack_is_deterministic_and_order_free() {
        let a = vec![("b".to_string(), vec![1u8]), ("a/x".to_string(), vec![2u8; 700])];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(pack(&a, 5).unwrap(), pack(&b, 5).unwrap());
    }

    #[test]
    fn gen1_has_no_image() {
        let case = crate::forge_case(1, Generation::Gen1, &Default::default());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_image(&case, &ImageOptions::default(), dir.path()), Err(ForgeError::Unsupported(_))));
    }

    #[cfg(feature = "reference-luks")]
    #[test]
    fn existing_image_is_left_alone() {
        let case = crate::forge_case(1, Generation::Gen2, &Default::default());
        let dir = tempfile::tempdir().unwrap();
        let image = dir.path().join(IMAGE_FILE);
        std::fs::write(&image, b"evidence").unwrap();
        assert!(matches!(emit_image(&case, &ImageOptions::default(), dir.path()), Err(ForgeError::OutputExists(_))));
        assert_eq!(std::fs::read(&image).unwrap(), b"evidence");
        assert!(!dir.path().join(TREE_DIR).exists());
    }
}
