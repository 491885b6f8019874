use sha2::{Digest, Sha256};

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// First 16 hex chars of the SHA-256 digest.
pub fn short_digest(data: &[u8]) -> String {
    let mut full = sha256_hex(data);
    full.truncate(16);
    full
}

/// 64-bit seed derived from arbitrary bytes.
pub(crate) fn seed_from(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}
