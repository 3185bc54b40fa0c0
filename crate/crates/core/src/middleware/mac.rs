//! Keyed FNV-1a digest used for handshake tokens and frame integrity.
//! Deterministic and dependency free; not a secure MAC.

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// Plain FNV-1a-64 over `data`.
pub fn fnv1a64(data: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET_BASIS, data)
}

fn fnv1a64_extend(mut h: u64, data: &[u8]) -> u64 {
    for &b in data {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// FNV-1a-64 over `key_le || data || key_le`.
pub fn mac64(key: u64, data: &[u8]) -> u64 {
    let k = key.to_le_bytes();
    let h = fnv1a64_extend(FNV_OFFSET_BASIS, &k);
    let h = fnv1a64_extend(h, data);
    fnv1a64_extend(h, &k)
}
