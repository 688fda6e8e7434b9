//! Named random substreams derived from one user seed.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for the stream called `name`, further keyed by `extra`. Distinct
/// names give unrelated streams for the same user seed.
pub fn substream(seed: u64, name: &str, extra: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for b in name.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    for &x in extra {
        h = splitmix64(h ^ x);
    }
    h
}
