//! Fingerprints of the piecewise branches taken by non-smooth ops.
//!
//! relu, leaky relu, abs and the safe norm/reciprocal each hash the branch
//! pattern they took while tracking is on. Two evaluations with different
//! fingerprints straddle a kink, so central differences across them are
//! meaningless.

use std::cell::Cell;

thread_local! {
    static FINGERPRINT: Cell<Option<u64>> = const { Cell::new(None) };
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

pub(crate) fn tracking() -> bool {
    FINGERPRINT.with(|c| c.get().is_some())
}

/// Mixes one branch pattern into the current fingerprint.
pub(crate) fn record(op_tag: u8, branches: impl Iterator<Item = u8>) {
    FINGERPRINT.with(|c| {
        if let Some(mut h) = c.get() {
            h = (h ^ op_tag as u64).wrapping_mul(FNV_PRIME);
            for b in branches {
                h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
            }
            c.set(Some(h));
        }
    });
}

/// Runs `f` and returns its result with the branch fingerprint it produced.
pub fn fingerprint<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let prev = FINGERPRINT.with(|c| c.replace(Some(FNV_OFFSET)));
    let out = f();
    let h = FINGERPRINT.with(|c| c.replace(prev)).unwrap_or(FNV_OFFSET);
    (out, h)
}
