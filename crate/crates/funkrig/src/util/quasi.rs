//! Scrambled Halton sequences for quasi-random space filling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// A digit-scrambled Halton sequence in `dim` dimensions on [0,1)^dim.
///
/// Scrambling uses one random digit permutation per base (fixing 0), drawn
/// deterministically from the seed, which removes the correlation artifacts
/// of plain Halton in higher dimensions.
pub struct ScrambledHalton {
    perms: Vec<Vec<usize>>,
    index: usize,
}

impl ScrambledHalton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(
            dim <= PRIMES.len(),
            "scrambled Halton supports up to {} dimensions",
            PRIMES.len()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = PRIMES[..dim]
            .iter()
            .map(|&b| {
                let mut digits: Vec<usize> = (1..b).collect();
                digits.shuffle(&mut rng);
                let mut perm = vec![0usize];
                perm.extend(digits);
                perm
            })
            .collect();
        ScrambledHalton { perms, index: 0 }
    }

    /// Next point of the sequence.
    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1; // skip the all-zeros point at index 0
        self.perms
            .iter()
            .zip(PRIMES.iter())
            .map(|(perm, &b)| {
                let mut x = 0.0;
                let mut denom = 1.0;
                let mut k = self.index;
                while k > 0 {
                    denom *= b as f64;
                    x += perm[k % b] as f64 / denom;
                    k /= b;
                }
                x
            })
            .collect()
    }

    pub fn take_points(&mut self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.next_point()).collect()
    }
}
