//! Small shared helpers.

/// splitmix64 step: advances `state` and returns a well-mixed value.
/// Deterministic, cheap, and good enough for jitter and victim selection;
/// not for anything cryptographic.
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One-shot mix of a composite key into a u64, built from splitmix steps.
pub(crate) fn mix_u64(parts: &[u64]) -> u64 {
    let mut state = 0x9e37_79b9_7f4a_7c15;
    let mut out = 0;
    for &p in parts {
        state ^= p;
        out = splitmix64(&mut state);
    }
    out
}
