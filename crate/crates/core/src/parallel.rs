//! Deterministic parallelism and seeded random streams.
//!
//! Work is split into fixed-size chunks whose boundaries do not depend on the
//! number of threads. Each chunk draws from its own ChaCha stream and partial
//! results are reduced in chunk order, so outputs are bit-identical for any
//! worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable read by the `htomo` binary to size its thread pool.
pub const WORKERS_ENV: &str = "HTOMO_WORKERS";

/// Number of trials generated from one random stream.
pub const CHUNK: usize = 4096;

/// Random streams are separated by purpose so that, for example, trace noise
/// never aliases quadrature draws made with the same user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Quadratures = 1,
    Traces = 2,
    Clicks = 3,
    Bootstrap = 4,
    Heralds = 5,
    Decay = 6,
}

/// A ChaCha8 generator for `(seed, domain, stream)`.
pub fn stream_rng(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"htomo-v1");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Runs `f` inside a dedicated pool with `workers` threads.
pub fn with_workers<T, F>(workers: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Reads [`WORKERS_ENV`], ignoring values that are not positive integers.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Chunk index ranges covering `0..total`.
pub(crate) fn chunks(total: usize) -> impl Iterator<Item = (u64, std::ops::Range<usize>)> {
    (0..total.div_ceil(CHUNK)).map(move |c| {
        let start = c * CHUNK;
        (c as u64, start..(start + CHUNK).min(total))
    })
}
