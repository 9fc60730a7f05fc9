//! Time-of-day training-window selection.
//!
//! The day is split into segments by hour-of-day boundaries (default
//! before 08:00, 08:00–17:00, after 17:00). A test point at absolute hour `x`
//! with hour of day `h` in segment `i` trains on `n_i` consecutive hours
//! starting at `x − 23 − (h − v_i)`, which always falls on hour `v_i + 1` of
//! the previous day. A 04:00 test point therefore starts 27 hours back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::HOURS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowPolicy {
    /// Hour-of-day thresholds separating segments, strictly increasing.
    pub boundaries: Vec<usize>,
    /// Base hour `v_i` of each segment.
    pub offsets: Vec<usize>,
    /// Training window length `n_i` of each segment, in hours.
    pub lengths: Vec<usize>,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            boundaries: vec![8, 17],
            offsets: vec![0, 8, 17],
            lengths: vec![10, 12, 1],
        }
    }
}

impl WindowPolicy {
    pub fn new(boundaries: Vec<usize>, offsets: Vec<usize>, lengths: Vec<usize>) -> Result<Self> {
        let policy = Self {
            boundaries,
            offsets,
            lengths,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn segments(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// First hour of day belonging to segment `i`.
    pub fn segment_start(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.boundaries[i - 1]
        }
    }

    pub fn with_lengths(&self, lengths: Vec<usize>) -> Result<Self> {
        Self::new(self.boundaries.clone(), self.offsets.clone(), lengths)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.boundaries.iter().any(|&b| b >= HOURS_PER_DAY) {
            return invalid(format!(
                "boundaries {:?} must lie in [0, 24)",
                self.boundaries
            ));
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!(
                "boundaries {:?} must be strictly increasing",
                self.boundaries
            ));
        }
        let segments = self.segments();
        if self.offsets.len() != segments || self.lengths.len() != segments {
            return invalid(format!(
                "{segments} segments need {segments} offsets and lengths, got {} and {}",
                self.offsets.len(),
                self.lengths.len()
            ));
        }
        if self.lengths.contains(&0) {
            return invalid("window lengths must be at least 1".into());
        }
        for (i, &v) in self.offsets.iter().enumerate() {
            if v > self.segment_start(i) {
                return invalid(format!(
                    "offset {v} of segment {} exceeds its first hour {}",
                    i + 1,
                    self.segment_start(i)
                ));
            }
        }
        Ok(())
    }
}

/// Zero-based segment containing `hour_of_day`.
pub fn segment_of(hour_of_day: usize, policy: &WindowPolicy) -> usize {
    debug_assert!(hour_of_day < HOURS_PER_DAY);
    policy
        .boundaries
        .iter()
        .take_while(|&&b| b <= hour_of_day)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingWindow {
    pub start: usize,
    pub length: usize,
}

impl TrainingWindow {
    /// One past the last training hour.
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

/// Chooses the training window for the test point at absolute hour `test_hour`.
///
/// Lengths that would reach the test hour are cut short so the window ends
/// at `test_hour`. Windows that would begin before hour 0 are an error.
pub fn select_window(
    test_hour: usize,
    hour_of_day: usize,
    policy: &WindowPolicy,
) -> Result<TrainingWindow> {
    let segment = segment_of(hour_of_day, policy);
    let offset = policy.offsets[segment];
    debug_assert!(offset <= hour_of_day);
    let lookback = 23 + hour_of_day - offset;
    if lookback > test_hour {
        return Err(Error::WindowUnderflow {
            test_hour,
            offset: lookback - test_hour,
        });
    }
    Ok(TrainingWindow {
        start: test_hour - lookback,
        length: policy.lengths[segment].min(lookback),
    })
}
