//! Deterministic random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream selected by
//! `(seed, purpose, group, index)`. Streams never overlap, so replicas can
//! be scheduled on any number of workers without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    EpsReplica = 1,
    LimitReplica = 2,
    GreenKubo = 3,
    Bootstrap = 4,
    Projections = 5,
    Diagnostics = 6,
    Probe = 7,
    SelfTest = 8,
}

/// Stream for `(purpose, group, index)` under `seed`.
///
/// `group` is typically the eps-grid index (or diffusion mode), `index` the
/// replica number.
pub fn stream(seed: u64, purpose: Purpose, group: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((purpose as u64) << 56) | (((group as u64) & 0xff_ffff) << 32) | index as u64;
    rng.set_stream(id);
    rng
}
