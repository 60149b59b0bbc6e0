//! Seed expansion.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! user seed and positioned on a stream `(domain << 32) | index`. ChaCha is a
//! counter-based generator, so each stream is an independent, reproducible
//! sequence and adding draws to one subsystem never shifts another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Subsystem tag occupying the high 32 bits of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Domain {
    /// Exogenous noise; index = node position in the SCM.
    Noise = 1,
    /// Network weight initialization; index = layer.
    Init = 2,
    /// Minibatch shuffling; index = epoch.
    Shuffle = 3,
    /// VCF unit selection (index 0) and intervention draws (index 1).
    Vcf = 4,
    /// Augmentation resampling.
    Augment = 5,
    /// Random Fourier frequencies; index = kernel slot.
    Fourier = 6,
    /// Anything test- or tool-specific.
    Aux = 7,
}

pub fn stream(seed: u64, domain: Domain, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 32) | index as u64);
    rng
}
