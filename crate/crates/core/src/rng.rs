//! Counter-based random substreams.
//!
//! Every stream is a ChaCha8 generator keyed by the root seed; the 64-bit
//! stream id packs `(seed index, phase, level)`. Streams never overlap, so a
//! seed's records do not depend on which other seeds run, and level 0 draws
//! the same numbers whether or not upper levels exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train = 0,
    Eval = 1,
}

pub fn substream(root: u64, seed_index: u64, phase: Phase, level: usize) -> ChaCha8Rng {
    assert!(seed_index < 1 << 48, "seed index out of range");
    assert!(level < 1 << 8, "level out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream((seed_index << 16) | ((phase as u64) << 8) | level as u64);
    rng
}

/// One independent generator per hierarchy level.
#[derive(Debug, Clone)]
pub struct LevelRngs {
    rngs: Vec<ChaCha8Rng>,
}

impl LevelRngs {
    pub fn new(root: u64, seed_index: u64, phase: Phase, levels: usize) -> Self {
        LevelRngs {
            rngs: (0..levels)
                .map(|l| substream(root, seed_index, phase, l))
                .collect(),
        }
    }

    #[inline]
    pub fn level(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.rngs[i]
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }
}
