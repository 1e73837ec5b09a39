//! Seed derivation. One user-facing seed fans out into independent streams
//! for graph construction, per-run experiment replicas, and per-vertex draw
//! sequences, so that results never depend on iteration or thread order.

/// splitmix64 finalizer. Good avalanche, cheap, and stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a base seed and a salt (run index, purpose tag).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt))
}

/// The draw stream of vertex `v` under a run seed. The colouring engine and
/// the tag-inventory model both build their streams through here, which is
/// what makes a tag's slot choices reproduce the matching vertex's colour
/// choices draw for draw.
pub(crate) fn vertex_rng(run_seed: u64, v: u32) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(v as u64);
    rng
}
