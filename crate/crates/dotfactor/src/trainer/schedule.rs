//! Progressive one-dimension-at-a-time intervention schedule.

use serde::{Deserialize, Serialize};

/// Which structured dimensions are currently intervened on and what the
/// objective has done so far.
///
/// The active set is always the contiguous prefix `{0 .. active-1}`;
/// `active == 0` means interventions have not started yet. `active` never
/// decreases.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleState {
    pub active: usize,
    /// Per-epoch mean of the reconstruction objective.
    pub history: Vec<f64>,
    pub stopped: bool,
    pub(crate) last_growth_epoch: usize,
}

impl ScheduleState {
    pub fn new() -> Self {
        ScheduleState { active: 0, history: Vec::new(), stopped: false, last_growth_epoch: 0 }
    }

    pub fn begin_interventions(&mut self, epoch: usize) {
        if self.active == 0 {
            self.active = 1;
            self.last_growth_epoch = epoch;
        }
    }
}

impl Default for ScheduleState {
    fn default() -> Self {
        Self::new()
    }
}

/// Grows the active set by one when the objective has saturated: relative
/// improvement over the last `window` epochs below `threshold`, and at least
/// `window` epochs since the previous growth. Capped at `max_dims`.
///
/// Returns true when the set grew.
pub fn schedule_update(
    schedule: &mut ScheduleState,
    epoch: usize,
    window: usize,
    threshold: f64,
    max_dims: usize,
) -> bool {
    if schedule.active == 0 || schedule.active >= max_dims {
        return false;
    }
    if epoch < schedule.last_growth_epoch + window {
        return false;
    }
    let n = schedule.history.len();
    if n < window + 1 {
        return false;
    }
    let earlier = schedule.history[n - 1 - window];
    let latest = schedule.history[n - 1];
    let improvement = (earlier - latest) / earlier.abs().max(1e-12);
    if improvement < threshold {
        schedule.active += 1;
        schedule.last_growth_epoch = epoch;
        true
    } else {
        false
    }
}
