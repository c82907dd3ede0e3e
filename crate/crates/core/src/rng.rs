//! Named, independently seeded random streams.
//!
//! Every consumer of randomness (UE placement, mobility, channel draws,
//! traffic mix, controllers) pulls from its own ChaCha stream derived from
//! `(seed, name)`. Adding a new stream never shifts the values produced by an
//! existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const PLACEMENT: &str = "placement";
pub const MOBILITY: &str = "mobility";
pub const CHANNEL: &str = "channel";
pub const TRAFFIC: &str = "traffic";
pub const CONTROLLER: &str = "controller";

/// FNV-1a, used only to turn a stream name into a ChaCha stream id.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream(seed: u64, name: &str) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}
