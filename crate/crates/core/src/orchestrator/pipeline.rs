//! Fetch → compute → store over batches of partitions.
//!
//! With pipelining on, each stage runs on its own thread and hands batches
//! on through bounded queues, so the next batch downloads while the current
//! one computes. Within a batch the compute stage runs one worker per
//! partition. Batches are stored in order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crossbeam_channel::bounded;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub workers: usize,
    /// Partitions per batch; `None` means one per worker.
    pub batch_size: Option<usize>,
    pub pipelined: bool,
    /// Batches each hand-off queue may hold.
    pub queue_depth: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { workers: 1, batch_size: None, pipelined: true, queue_depth: 2 }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.batch_size == Some(0) || self.queue_depth == 0 {
            return Err(Error::Orchestrator("workers, batch size and queue depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.unwrap_or(self.workers).max(1)
    }
}

/// Summed busy time per stage, plus end-to-end wall clock.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub fetch: Duration,
    /// Sum over partitions of compute time, so it counts each worker.
    pub compute: Duration,
    pub store: Duration,
    pub wall: Duration,
}

type Slot<X> = Mutex<Option<X>>;

/// Runs `compute` over a batch with up to `workers` threads, keeping order.
fn compute_batch<T: Send, U: Send>(
    items: Vec<(u32, T)>,
    workers: usize,
    compute: &(dyn Fn(u32, T) -> Result<U> + Sync),
    busy: &Mutex<Duration>,
) -> Result<Vec<(u32, U)>> {
    let n = items.len();
    let slots: Vec<Slot<(u32, T)>> = items.into_iter().map(|i| Mutex::new(Some(i))).collect();
    let results: Vec<Slot<Result<(u32, U)>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= n {
            break;
        }
        let (id, item) = slots[i].lock().unwrap().take().expect("each slot taken once");
        let t = Instant::now();
        let r = compute(id, item).map(|u| (id, u));
        *busy.lock().unwrap() += t.elapsed();
        *results[i].lock().unwrap() = Some(r);
    };
    let threads = workers.min(n);
    if threads <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    results.into_iter().map(|m| m.into_inner().unwrap().expect("every slot computed")).collect()
}

/// Processes `ids` and returns stage timings. Stops at the first error.
pub fn run<T: Send, U: Send>(
    ids: &[u32],
    cfg: &PipelineConfig,
    fetch: &(dyn Fn(u32) -> Result<T> + Sync),
    compute: &(dyn Fn(u32, T) -> Result<U> + Sync),
    store: &(dyn Fn(u32, U) -> Result<()> + Sync),
) -> Result<StageTimes> {
    cfg.validate()?;
    let start = Instant::now();
    let batches: Vec<&[u32]> = ids.chunks(cfg.effective_batch_size()).collect();
    let busy_compute = Mutex::new(Duration::ZERO);
    let mut fetch_time = Duration::ZERO;
    let mut store_time = Duration::ZERO;

    let fetch_batch = |batch: &[u32], acc: &mut Duration| -> Result<Vec<(u32, T)>> {
        let t = Instant::now();
        let r = batch.iter().map(|&id| fetch(id).map(|x| (id, x))).collect();
        *acc += t.elapsed();
        r
    };
    let store_batch = |batch: Vec<(u32, U)>, acc: &mut Duration| -> Result<()> {
        let t = Instant::now();
        for (id, u) in batch {
            store(id, u)?;
        }
        *acc += t.elapsed();
        Ok(())
    };

    if !cfg.pipelined {
        for batch in batches {
            let items = fetch_batch(batch, &mut fetch_time)?;
            let out = compute_batch(items, cfg.workers, compute, &busy_compute)?;
            store_batch(out, &mut store_time)?;
        }
    } else {
        let (to_compute, from_fetch) = bounded::<Vec<(u32, T)>>(cfg.queue_depth);
        let (to_store, from_compute) = bounded::<Vec<(u32, U)>>(cfg.queue_depth);
        let failure: Mutex<Option<Error>> = Mutex::new(None);
        let fail = |e: Error| {
            failure.lock().unwrap().get_or_insert(e);
        };
        std::thread::scope(|s| {
            let fetcher = s.spawn(|| {
                let mut acc = Duration::ZERO;
                for batch in batches {
                    match fetch_batch(batch, &mut acc) {
                        Ok(items) => {
                            if to_compute.send(items).is_err() {
                                break;
                            }
                        }
                        Err(e) => {
                            fail(e);
                            break;
                        }
                    }
                }
                drop(to_compute);
                acc
            });
            let computer = s.spawn(|| {
                for items in from_fetch.iter() {
                    match compute_batch(items, cfg.workers, compute, &busy_compute) {
                        Ok(out) => {
                            if to_store.send(out).is_err() {
                                break;
                            }
                        }
                        Err(e) => {
                            fail(e);
                            break;
                        }
                    }
                }
                drop(to_store);
                drop(from_fetch);
            });
            let mut acc = Duration::ZERO;
            for out in from_compute.iter() {
                if let Err(e) = store_batch(out, &mut acc) {
                    fail(e);
                    break;
                }
            }
            drop(from_compute);
            computer.join().expect("compute stage panicked");
            fetch_time = fetcher.join().expect("fetch stage panicked");
            store_time = acc;
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
    }
    Ok(StageTimes {
        fetch: fetch_time,
        compute: busy_compute.into_inner().unwrap(),
        store: store_time,
        wall: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(cfg: PipelineConfig, fail_at: Option<u32>) -> Result<Vec<(u32, u64)>> {
        let ids: Vec<u32> = (1..=23).collect();
        let out = Mutex::new(Vec::new());
        run(
            &ids,
            &cfg,
            &|id| Ok(id as u64),
            &|id, x| if Some(id) == fail_at { Err(Error::Orchestrator("boom".into())) } else { Ok(x * x) },
            &|id, y| {
                out.lock().unwrap().push((id, y));
                Ok(())
            },
        )?;
        Ok(out.into_inner().unwrap())
    }

    #[test]
    fn order_and_results_independent_of_config() {
        let expected: Vec<(u32, u64)> = (1..=23).map(|i| (i, (i as u64).pow(2))).collect();
        for workers in [1, 3, 8] {
            for batch_size in [None, Some(1), Some(5)] {
                for pipelined in [false, true] {
                    let cfg = PipelineConfig { workers, batch_size, pipelined, queue_depth: 2 };
                    assert_eq!(collect(cfg, None).unwrap(), expected, "{cfg:?}");
                }
            }
        }
    }

    #[test]
    fn errors_propagate() {
        for pipelined in [false, true] {
            let cfg = PipelineConfig { workers: 2, batch_size: Some(3), pipelined, queue_depth: 1 };
            assert!(collect(cfg, Some(10)).is_err());
        }
    }

    #[test]
    fn rejects_zero_sizes() {
        assert!(PipelineConfig { workers: 0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { batch_size: Some(0), ..Default::default() }.validate().is_err());
    }
}
