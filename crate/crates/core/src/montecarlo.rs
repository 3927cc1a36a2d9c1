//! Counter-based random streams and order-independent trajectory maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Identifies the random increments of one trajectory.
///
/// The stream is the ChaCha8 keystream keyed by `master_seed` at stream
/// position `trajectory_index`, so it depends on nothing else: not on which
/// worker runs it, nor on how many other trajectories ran before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub master_seed: u64,
    pub trajectory_index: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        Self {
            master_seed,
            trajectory_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trajectory_index);
        rng
    }
}

/// Derives an independent master seed for an auxiliary computation.
pub fn derive_seed(master_seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` for trajectory indices `0..n` on the current rayon pool and
/// returns results in index order.
pub fn map_trajectories<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = CompensatedSum::default();
    for x in xs {
        s.add(x);
    }
    s.value()
}
