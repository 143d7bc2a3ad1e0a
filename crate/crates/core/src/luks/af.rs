//! Anti-forensic merge of LUKS1 key-material stripes.

use sha2::Digest;

/// SHA-based diffusion: block `i` of the buffer is replaced by
/// H(be32(i) || block), the final partial block by a truncated digest.
fn diffuse<D: Digest>(buf: &mut [u8]) {
    let ds = <D as Digest>::output_size();
    for (i, chunk) in buf.chunks_mut(ds).enumerate() {
        let mut hasher = D::new();
        hasher.update((i as u32).to_be_bytes());
        hasher.update(&*chunk);
        let out = hasher.finalize();
        let n = chunk.len();
        chunk.copy_from_slice(&out[..n]);
    }
}

/// Recovers `block_size` bytes from `stripes` consecutive blocks of `material`.
pub fn merge<D: Digest>(material: &[u8], block_size: usize, stripes: usize) -> Vec<u8> {
    assert!(stripes > 0 && material.len() >= block_size * stripes);
    let mut acc = vec![0u8; block_size];
    for (i, stripe) in material.chunks_exact(block_size).take(stripes).enumerate() {
        for (a, s) in acc.iter_mut().zip(stripe) {
            *a ^= s;
        }
        if i + 1 < stripes {
            diffuse::<D>(&mut acc);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::Sha256;

    #[test]
    fn single_stripe_is_identity() {
        let data = [7u8; 32];
        assert_eq!(merge::<Sha256>(&data, 32, 1), data.to_vec());
    }

    #[test]
    fn two_stripes_by_hand() {
        // merge(s0, s1) = H(be32(0) || s0) XOR s1 for a 32-byte block.
        let s0 = [1u8; 32];
        let s1 = [2u8; 32];
        let mut h = Sha256::new();
        h.update([0, 0, 0, 0]);
        h.update(s0);
        let expect: Vec<u8> = h.finalize().iter().zip(s1).map(|(a, b)| a ^ b).collect();
        let material: Vec<u8> = s0.iter().chain(&s1).copied().collect();
        assert_eq!(merge::<Sha256>(&material, 32, 2), expect);
    }

    #[test]
    fn partial_digest_block() {
        // 40-byte block with SHA-1: two full 20-byte digests, no remainder.
        // 24-byte block with SHA-256: one truncated digest.
        let material = [3u8; 48];
        let merged = merge::<Sha256>(&material, 24, 2);
        let mut h = Sha256::new();
        h.update([0, 0, 0, 0]);
        h.update([3u8; 24]);
        let expect: Vec<u8> = h.finalize()[..24].iter().map(|b| b ^ 3).collect();
        assert_eq!(merged, expect);
    }
}
