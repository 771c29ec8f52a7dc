use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crossbeam_queue::SegQueue;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ReconParams;
use crate::error::{CwsError, Result};
use crate::estimator::GradientField;

/// Queue operations allowed per bin before a fill is abandoned.
pub const ITERATION_CAP_PER_BIN: u64 = 1_000_000;

struct Shared<'a> {
    grad: &'a GradientField,
    probs: &'a [f64],
    claimed: Vec<AtomicBool>,
    phase: Vec<AtomicU64>,
    queue: SegQueue<usize>,
    /// Bins queued or being expanded.
    pending: AtomicUsize,
    ops: AtomicU64,
    cap: u64,
    abort: AtomicBool,
}

impl Shared<'_> {
    fn worker(&self, mut rng: ChaCha8Rng) -> Result<()> {
        let spec = &self.grad.spec;
        let h = spec.pitch;
        loop {
            if self.abort.load(Ordering::Relaxed) {
                return Ok(());
            }
            let Some(m) = self.queue.pop() else {
                if self.pending.load(Ordering::Acquire) == 0 {
                    return Ok(());
                }
                std::thread::yield_now();
                continue;
            };
            if self.ops.fetch_add(1, Ordering::Relaxed) >= self.cap {
                self.abort.store(true, Ordering::Relaxed);
                return Err(CwsError::Convergence { cap: self.cap });
            }
            let phi = f64::from_bits(self.phase[m].load(Ordering::Acquire));
            let mut unfilled = false;
            for a in 0..spec.axes() {
                for step in [1isize, -1] {
                    let Some(nb) = spec.offset(m, a, step) else { continue };
                    if !self.grad.mask[nb] || self.claimed[nb].load(Ordering::Acquire) {
                        continue;
                    }
                    if rng.random::<f64>() >= self.probs[nb] {
                        unfilled = true;
                        continue;
                    }
                    if self.claimed[nb].compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                        let k = &self.grad.components[a];
                        let v = if step > 0 { phi + k[m] * h } else { phi - k[nb] * h };
                        self.phase[nb].store(v.to_bits(), Ordering::Release);
                        self.pending.fetch_add(1, Ordering::AcqRel);
                        self.queue.push(nb);
                    }
                }
            }
            if unfilled {
                self.queue.push(m);
            } else {
                self.pending.fetch_sub(1, Ordering::AcqRel);
            }
        }
    }
}

/// Per-worker random stream derived from `(seed, repeat, worker)`.
pub fn worker_rng(seed: u64, repeat: usize, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((repeat as u64) << 20) | worker as u64);
    rng
}

/// One randomized flood fill from `reference`. Returns the phase of every
/// bin, `NaN` outside the reached region.
pub fn single_fill(
    grad: &GradientField,
    probs: &[f64],
    reference: usize,
    params: &ReconParams,
    repeat: usize,
) -> Result<Vec<f64>> {
    let bins = grad.spec.bins();
    let shared = Shared {
        grad,
        probs,
        claimed: (0..bins).map(|_| AtomicBool::new(false)).collect(),
        phase: (0..bins).map(|_| AtomicU64::new(f64::NAN.to_bits())).collect(),
        queue: SegQueue::new(),
        pending: AtomicUsize::new(1),
        ops: AtomicU64::new(0),
        cap: ITERATION_CAP_PER_BIN.saturating_mul(bins as u64),
        abort: AtomicBool::new(false),
    };
    shared.claimed[reference].store(true, Ordering::Relaxed);
    shared.phase[reference].store(0.0f64.to_bits(), Ordering::Relaxed);
    shared.queue.push(reference);

    let workers = params.workers.max(1);
    if workers == 1 {
        shared.worker(worker_rng(params.seed, repeat, 0))?;
    } else {
        let results: Vec<Result<()>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let shared = &shared;
                    s.spawn(move || shared.worker(worker_rng(params.seed, repeat, w)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("fill worker panicked")).collect()
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
    }
    Ok(shared.phase.into_iter().map(|p| f64::from_bits(p.into_inner())).collect())
}
