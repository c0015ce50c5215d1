//! Shared training-loop plumbing.

use alloc::vec::Vec;

use crate::numkit::Rng;
use crate::{Error, Result};

/// Learning-rate halvings allowed before a run is declared diverged.
pub const MAX_LR_HALVINGS: u32 = 3;

/// Shuffled minibatches covering `0..n`; the last one may be short.
pub(crate) fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size.clamp(1, n.max(1))).map(|c| c.to_vec()).collect()
}

/// Runs `epochs` epochs of `step`, which returns a per-epoch record. When
/// `finite` rejects a record the state is rolled back to the start of the
/// epoch, the learning rate halves and the epoch is retried.
pub(crate) fn guarded_epochs<S: Clone, T>(
    state: &mut S,
    epochs: usize,
    lr: f64,
    mut step: impl FnMut(&mut S, usize, f64) -> Result<T>,
    finite: impl Fn(&T) -> bool,
) -> Result<Vec<T>> {
    let mut lr = lr;
    let mut halvings = 0;
    let mut records = Vec::with_capacity(epochs);
    let mut epoch = 0;
    while epoch < epochs {
        let snapshot = state.clone();
        let record = step(state, epoch, lr)?;
        if finite(&record) {
            records.push(record);
            epoch += 1;
        } else {
            *state = snapshot;
            halvings += 1;
            if halvings > MAX_LR_HALVINGS {
                return Err(Error::TrainingDiverged {
                    halvings: MAX_LR_HALVINGS,
                });
            }
            lr *= 0.5;
        }
    }
    Ok(records)
}
