//! Deterministic chunked parallelism.
//!
//! Work is cut into fixed-size chunks that do not depend on the thread
//! count. Chunk `c` owns its own random stream and results come back in
//! chunk order, so merged outputs are identical for any rayon pool size.

use std::ops::Range;

use rayon::prelude::*;

use crate::gauss::RngStream;

/// Samples per chunk used by the Monte Carlo estimators.
pub const CHUNK_SAMPLES: u64 = 512;

/// Context handed to the per-chunk closure.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub index: u64,
    pub samples: Range<u64>,
}

impl Chunk {
    pub fn len(&self) -> usize {
        (self.samples.end - self.samples.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The random stream reserved for this chunk within family `tag`.
    pub fn stream(&self, seed: u64, tag: u64) -> RngStream {
        RngStream::with_chunk(seed, tag, self.index)
    }
}

/// Map `f` over the chunks of `0..total`, returning results in chunk order.
pub fn map_chunks<T, F>(total: u64, chunk_size: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Chunk) -> T + Sync + Send,
{
    assert!(chunk_size > 0);
    let chunks = total.div_ceil(chunk_size);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk_size;
            f(Chunk {
                index: c,
                samples: start..(start + chunk_size).min(total),
            })
        })
        .collect()
}

/// Like [`map_chunks`] but flattens per-chunk vectors into one, in order.
pub fn collect_chunks<T, F>(total: u64, chunk_size: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Chunk) -> Vec<T> + Sync + Send,
{
    let parts = map_chunks(total, chunk_size, f);
    let mut out = Vec::with_capacity(total as usize);
    for part in parts {
        out.extend(part);
    }
    out
}

/// Run `f` on a dedicated pool with `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool construction");
    pool.install(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_layout_is_worker_independent() {
        let run = |w| {
            with_workers(w, || {
                collect_chunks(10_000, 333, |c| {
                    let mut s = c.stream(9, 1);
                    (0..c.len()).map(|_| s.next_u64()).collect()
                })
            })
        };
        let one = run(1);
        assert_eq!(one.len(), 10_000);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }

    #[test]
    fn ranges_cover_total() {
        let parts = map_chunks(1001, 100, |c| c.samples.clone());
        assert_eq!(parts.len(), 11);
        assert_eq!(parts[10], 1000..1001);
        assert!(map_chunks(0, 10, |c| c.len()).is_empty());
    }
}
