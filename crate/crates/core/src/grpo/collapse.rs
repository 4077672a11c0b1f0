//! Reward-variance collapse monitoring.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub step: usize,
    pub median: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First step `t` whose trailing window `stds[t+1-window..=t]` has median
/// below `floor`.
pub fn detect_variance_collapse(stds: &[f64], window: usize, floor: f64) -> Option<CollapseEvent> {
    assert!(window >= 1, "window must be at least 1");
    (window - 1..stds.len()).find_map(|t| {
        let m = median(&stds[t + 1 - window..=t]);
        (m < floor).then_some(CollapseEvent { step: t, median: m })
    })
}

/// Online form of [`detect_variance_collapse`].
#[derive(Debug, Clone)]
pub struct CollapseMonitor {
    window: usize,
    floor: f64,
    recent: VecDeque<f64>,
    collapsed: bool,
}

impl CollapseMonitor {
    pub fn new(window: usize, floor: f64) -> Self {
        assert!(window >= 1, "window must be at least 1");
        CollapseMonitor {
            window,
            floor,
            recent: VecDeque::with_capacity(window),
            collapsed: false,
        }
    }

    /// Records one std and reports whether the full trailing window is
    /// collapsed. The event is returned only on the transition into
    /// collapse.
    pub fn push(&mut self, step: usize, std: f64) -> (bool, Option<CollapseEvent>) {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(std);
        if self.recent.len() < self.window {
            return (false, None);
        }
        let m = median(self.recent.make_contiguous());
        let now = m < self.floor;
        let onset = now && !self.collapsed;
        self.collapsed = now;
        (now, onset.then_some(CollapseEvent { step, median: m }))
    }
}
