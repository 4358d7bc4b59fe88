//! Keyed random substreams.
//!
//! Every random draw in a campaign comes from a ChaCha8 stream whose seed is
//! derived from `(seed, trial, vehicle, slot, purpose)`, so results do not
//! depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    InitialState = 1,
    Prior = 2,
    Truth = 3,
    Delay = 4,
    Doppler = 5,
    Array = 6,
    ParticleInit = 7,
    ParticleStep = 8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub trial: u64,
    pub vehicle: u64,
    pub slot: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, trial: usize, vehicle: usize, slot: usize, purpose: Purpose) -> Self {
        Self {
            seed,
            trial: trial as u64,
            vehicle: vehicle as u64,
            slot: slot as u64,
            purpose,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed ^ 0x5DEE_CE66_D1CE_4E5B;
        for word in [self.trial, self.vehicle, self.slot, self.purpose as u64] {
            state = splitmix64(&mut state) ^ word;
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

pub fn substream(seed: u64, trial: usize, vehicle: usize, slot: usize, purpose: Purpose) -> ChaCha8Rng {
    StreamKey::new(seed, trial, vehicle, slot, purpose).rng()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
