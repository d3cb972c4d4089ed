//! Deterministic seed derivation.
//!
//! Every source of randomness in the harness is a ChaCha stream whose seed is
//! derived from one root seed plus a path of integer tags (block id,
//! participant id, purpose tag, ...). Derivation uses splitmix64 steps, so
//! distinct tag paths give independent streams and runs are reproducible from
//! the root seed alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 output function: one full avalanche step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` and a path of tags.
///
/// Mixing is sequential, so `mix(s, &[a, b])` differs from `mix(s, &[b, a])`
/// and from `mix(mix(s, &[a]), &[])`.
pub fn mix(root: u64, tags: &[u64]) -> u64 {
    let mut state = root;
    let mut out = splitmix64(&mut state);
    for &tag in tags {
        state ^= tag;
        out = splitmix64(&mut state);
    }
    out
}

/// A ChaCha generator seeded from a derived seed.
pub fn rng(root: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(root, tags))
}

/// Stable 64-bit FNV-1a hash of a byte string.
///
/// Used to fold textual content (prompt text, config files) into seed paths
/// and identifiers without depending on the platform hasher.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Purpose tags keeping unrelated streams apart even for equal numeric ids.
pub mod tag {
    /// Block-level design randomness.
    pub const DESIGN: u64 = 0x6465_7369;
    /// Per-participant presentation order.
    pub const ORDER: u64 = 0x6f72_6465;
    /// Synthetic completion noise.
    pub const COMPLETION: u64 = 0x636f_6d70;
    /// Demographic profile sampling.
    pub const PROFILE: u64 = 0x7072_6f66;
    /// Deprivation triple sampling.
    pub const DEPRIVATION: u64 = 0x6465_7072;
    /// Article variant assignment.
    pub const ARTICLE: u64 = 0x6172_7469;
    /// Bootstrap resampling.
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    /// Synthetic per-statement baseline means.
    pub const BASELINE: u64 = 0x6261_7365;
}
