//! Seeded random streams.
//!
//! Every randomized component draws from its own ChaCha8 stream derived from
//! the single user seed: the generator is seeded with `seed_from_u64(seed)`
//! and then moved to the stream number assigned to the component below. Two
//! components never share a stream, so changing e.g. the Gibbs sampler does
//! not perturb the message initialization of the BP trainers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    MessageInit = 1,
    GibbsInit = 2,
    GibbsSweep = 3,
    CorpusSplit = 4,
    DocumentSplit = 5,
    Synthetic = 6,
    FoldInInit = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
