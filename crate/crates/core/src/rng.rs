//! Counter-based random streams keyed by `(master_seed, module_tag, index)`.
//!
//! Every replica draws from its own ChaCha8 stream, so results do not depend
//! on how replicas are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a of a module name, used as the second half of the key.
pub const fn tag(name: &str) -> u64 {
    let bytes = name.as_bytes();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

pub mod tags {
    use super::tag;
    pub const BBM: u64 = tag("bbm");
    pub const INIT: u64 = tag("init");
    pub const SPINE: u64 = tag("spine");
    pub const CPP: u64 = tag("cpp");
    pub const VERIFY: u64 = tag("verify");
}

/// Stream `index` of the family `(master_seed, module_tag)`.
pub fn stream(master_seed: u64, module_tag: u64, index: u64) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&module_tag.to_le_bytes());
    key[16..24].copy_from_slice(b"fwl-rng1");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
