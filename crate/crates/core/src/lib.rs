//! Join-order optimization workbench core.
//!
//! The crate is organized around the lifecycle of a query plan:
//!
//! - [`storage`] — in-memory triple store, pattern matching, hash joins,
//!   exact plan cost, and a synthetic graph/query generator.
//! - [`plan`] — triple patterns, queries, binary join trees, their
//!   adjacency-matrix encoding, enumeration, and projection from a soft
//!   adjacency back to a discrete plan.
//! - [`tensor`] — dense matrices with reverse-mode automatic
//!   differentiation.
//! - [`costmodel`] — node features, an edge-weighted GIN cost model, and
//!   its supervised training loop.
//! - [`relax`] — gradient-based plan search over Gumbel-Softmax relaxed
//!   adjacencies with differentiable structural penalties.
//! - [`discrete`] — exhaustive, dynamic-programming, and greedy baselines
//!   over a pluggable cost function.

pub mod optim;
pub mod plan;
pub mod storage;
pub mod tensor;

/// Stable 64-bit FNV-1a hash, used to derive deterministic seeds from
/// string labels independently of the process hasher.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// SplitMix64 step, used to derive independent seeds from a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
