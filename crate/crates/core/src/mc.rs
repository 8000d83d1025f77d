//! Seeded, chunked particle loops.
//!
//! Particles are cut into fixed-size chunks and chunk `i` draws from ChaCha
//! stream `i` of the master seed, so results depend only on the seed and the
//! particle count, never on how many worker threads ran the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Particles per chunk.
pub const CHUNK_SIZE: u64 = 1 << 14;

/// Runs `work(rng, n)` over every chunk in parallel and returns the chunk
/// results in chunk order.
pub fn run_chunks<T, F>(particles: u64, seed: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let chunks = particles.div_ceil(CHUNK_SIZE);
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let n = CHUNK_SIZE.min(particles - i * CHUNK_SIZE);
            work(&mut rng, n)
        })
        .collect()
}

/// Derives a fresh sub-seed from a master generator.
pub fn next_seed(master: &mut ChaCha8Rng) -> u64 {
    use rand::RngCore;
    master.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunk_sizes_cover_particles() {
        let sizes = run_chunks(CHUNK_SIZE * 2 + 5, 1, |_, n| n);
        assert_eq!(sizes, vec![CHUNK_SIZE, CHUNK_SIZE, 5]);
        assert!(run_chunks(0, 1, |_, n| n).is_empty());
    }

    #[test]
    fn independent_of_thread_count() {
        let draw = || run_chunks(100_000, 42, |rng, n| (0..n).map(|_| rng.random::<u32>() as u64).sum::<u64>());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(draw);
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(draw);
        assert_eq!(one, four);
    }
}
