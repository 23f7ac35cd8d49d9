//! Deterministic derivation of per-component seeds from one master seed.

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the component named `label`, stable across platforms and runs.
pub fn derive(master: u64, label: &str) -> u64 {
    // FNV-1a over the label
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(master ^ mix(h))
}

/// Seed for the `index`-th member of a family, e.g. one per device.
pub fn derive_indexed(master: u64, label: &str, index: usize) -> u64 {
    mix(derive(master, label).wrapping_add(index as u64))
}
