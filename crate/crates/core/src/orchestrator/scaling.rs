use serde::{Deserialize, Serialize};

use crate::model::ConferenceId;

/// Watermark policy for elastic conference scaling. Sizes are participants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingPolicy {
    pub high_watermark: f64,
    pub low_watermark: f64,
    pub step: u32,
    pub check_interval_s: u64,
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        ScalingPolicy { high_watermark: 0.9, low_watermark: 0.4, step: 200, check_interval_s: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleRequest {
    pub conference_id: ConferenceId,
    pub from: u32,
    pub target: u32,
}

impl ScalingPolicy {
    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = (self.low_watermark, self.high_watermark);
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return Err(format!("need 0 < low_watermark ({lo}) < high_watermark ({hi}) <= 1"));
        }
        if self.step < 1 {
            return Err("step must be >= 1".into());
        }
        if self.check_interval_s < 1 {
            return Err("check_interval_s must be >= 1".into());
        }
        Ok(())
    }

    /// Growth target once `participants` exceeds the high watermark of
    /// `capacity`: whole steps until the watermark is met again.
    pub fn grow_target(&self, capacity: u32, participants: u32) -> u32 {
        let step = self.step as f64;
        let over = participants as f64 - self.high_watermark * capacity as f64;
        capacity + self.step * (over / step).ceil().max(1.0) as u32
    }

    /// New capacity for a conference, or `None` when it sits between the
    /// watermarks.
    pub fn decide(&self, capacity: u32, participants: u32) -> Option<u32> {
        let (cap, n) = (capacity as f64, participants as f64);
        if n > self.high_watermark * cap {
            return Some(self.grow_target(capacity, participants));
        }
        if n < self.low_watermark * cap && capacity > self.step {
            let steps = (n / (self.high_watermark * self.step as f64)).ceil() as u32;
            let target = (self.step * steps).max(self.step);
            return (target < capacity).then_some(target);
        }
        None
    }

    pub fn check_interval_ms(&self) -> u64 {
        self.check_interval_s * 1000
    }
}
