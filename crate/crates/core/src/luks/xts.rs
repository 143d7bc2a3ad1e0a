//! XTS-AES sector decryption (IEEE 1619) over the `aes` block cipher.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::{Aes128, Aes256};

use super::LuksError;

const BLOCK: usize = 16;

enum Halves {
    Aes128 { data: Aes128, tweak: Aes128 },
    Aes256 { data: Aes256, tweak: Aes256 },
}

/// IV derivation for dm-crypt style sector numbering.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum IvMode {
    /// 64-bit little-endian sector number.
    Plain64,
    /// 32-bit little-endian sector number, wrapping.
    Plain,
}

impl IvMode {
    pub fn from_cipher_mode(mode: &str) -> Option<Self> {
        match mode {
            "xts-plain64" => Some(Self::Plain64),
            "xts-plain" => Some(Self::Plain),
            _ => None,
        }
    }

    fn iv(self, sector: u64) -> [u8; BLOCK] {
        let mut iv = [0u8; BLOCK];
        match self {
            Self::Plain64 => iv[..8].copy_from_slice(&sector.to_le_bytes()),
            Self::Plain => iv[..4].copy_from_slice(&(sector as u32).to_le_bytes()),
        }
        iv
    }
}

pub struct XtsDecryptor {
    halves: Halves,
    iv_mode: IvMode,
}

impl XtsDecryptor {
    /// `key` is the concatenation of the data key and the tweak key.
    pub fn new(key: &[u8], iv_mode: IvMode) -> Result<Self, LuksError> {
        let (k1, k2) = key.split_at(key.len() / 2);
        let halves = match key.len() {
            32 => Halves::Aes128 {
                data: Aes128::new(GenericArray::from_slice(k1)),
                tweak: Aes128::new(GenericArray::from_slice(k2)),
            },
            64 => Halves::Aes256 {
                data: Aes256::new(GenericArray::from_slice(k1)),
                tweak: Aes256::new(GenericArray::from_slice(k2)),
            },
            n => return Err(LuksError::UnsupportedKeySize(n as u32)),
        };
        Ok(Self { halves, iv_mode })
    }

    /// Decrypts `data` in place as consecutive sectors of `sector_size` bytes
    /// starting at `first_sector`.
    pub fn decrypt_sectors(&self, data: &mut [u8], first_sector: u64, sector_size: usize) {
        debug_assert_eq!(sector_size % BLOCK, 0);
        for (i, sector) in data.chunks_mut(sector_size).enumerate() {
            self.decrypt_sector(sector, first_sector + i as u64);
        }
    }

    fn decrypt_sector(&self, sector: &mut [u8], number: u64) {
        let mut tweak = GenericArray::from(self.iv_mode.iv(number));
        match &self.halves {
            Halves::Aes128 { tweak: t, .. } => t.encrypt_block(&mut tweak),
            Halves::Aes256 { tweak: t, .. } => t.encrypt_block(&mut tweak),
        }
        for block in sector.chunks_exact_mut(BLOCK) {
            xor_in_place(block, &tweak);
            let b = GenericArray::from_mut_slice(block);
            match &self.halves {
                Halves::Aes128 { data, .. } => data.decrypt_block(b),
                Halves::Aes256 { data, .. } => data.decrypt_block(b),
            }
            xor_in_place(block, &tweak);
            mul_alpha(&mut tweak);
        }
    }
}

fn xor_in_place(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Multiplies the tweak by the primitive element of GF(2^128), little-endian
/// byte order, reduction polynomial x^128 + x^7 + x^2 + x + 1.
fn mul_alpha(tweak: &mut [u8]) {
    let mut carry = 0u8;
    for byte in tweak.iter_mut() {
        let next = *byte >> 7;
        *byte = (*byte << 1) | carry;
        carry = next;
    }
    if carry != 0 {
        tweak[0] ^= 0x87;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unhex(s: &str) -> Vec<u8> {
        hex::decode(s).unwrap()
    }

    // Expected ciphertexts were recomputed with OpenSSL through Python's
    // `cryptography` package: aes-128-xts for vector 2, and AES-ECB with a
    // manual tweak chain for vector 1 (OpenSSL refuses identical key halves).
    #[test]
    fn all_zero_key_vector() {
        // IEEE 1619 XTS-AES-128 vector 1: zero keys, data unit 0, 32 zero bytes.
        let mut data = unhex("917cf69ebd68b2ec9b9fe9a3eadda692cd43d2f59598ed858c02c2652fbf922e");
        XtsDecryptor::new(&[0u8; 32], IvMode::Plain64).unwrap().decrypt_sectors(&mut data, 0, 32);
        assert_eq!(data, vec![0u8; 32]);
    }

    #[test]
    fn repeated_byte_key_vector() {
        // IEEE 1619 XTS-AES-128 vector 2: key1 = 0x11.., key2 = 0x22.., data unit 0x3333333333.
        let mut key = vec![0x11u8; 16];
        key.extend([0x22u8; 16]);
        let mut data = unhex("c454185e6a16936e39334038acef838bfb186fff7480adc4289382ecd6d394f0");
        XtsDecryptor::new(&key, IvMode::Plain64).unwrap().decrypt_sectors(&mut data, 0x33_3333_3333, 32);
        assert_eq!(data, vec![0x44u8; 32]);
    }

    #[test]
    fn rejects_odd_key_length() {
        assert!(matches!(XtsDecryptor::new(&[0u8; 48], IvMode::Plain64), Err(LuksError::UnsupportedKeySize(48))));
    }

    #[test]
    fn tweak_doubling_wraps() {
        let mut t = [0u8; 16];
        t[15] = 0x80;
        mul_alpha(&mut t);
        let mut expect = [0u8; 16];
        expect[0] = 0x87;
        assert_eq!(t, expect);
    }
}
