use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One acquisition frame, times in seconds post-injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub start_s: f64,
    pub end_s: f64,
}

impl Frame {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn mid_s(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Frame>", into = "Vec<Frame>")]
pub struct FrameTiming {
    frames: Vec<Frame>,
}

impl FrameTiming {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Config("frame timing is empty".into()));
        }
        for (m, f) in frames.iter().enumerate() {
            if !(f.start_s >= 0.0 && f.end_s > f.start_s && f.end_s.is_finite()) {
                return Err(Error::Config(format!(
                    "frame {m}: invalid interval [{}, {}] s",
                    f.start_s, f.end_s
                )));
            }
        }
        if let Some(m) = frames.windows(2).position(|w| w[1].start_s < w[0].end_s) {
            return Err(Error::Config(format!(
                "frames {m} and {} overlap or are out of order",
                m + 1
            )));
        }
        Ok(Self { frames })
    }

    /// Contiguous frames built from `(count, duration_s)` groups starting at 0.
    pub fn from_groups(groups: &[(usize, f64)]) -> Result<Self> {
        let mut t = 0.0;
        let mut frames = Vec::new();
        for &(count, dur) in groups {
            for _ in 0..count {
                frames.push(Frame::new(t, t + dur));
                t += dur;
            }
        }
        Self::new(frames)
    }

    /// The 29-frame, 60-minute protocol:
    /// 6×10 s, 2×30 s, 6×60 s, 5×120 s, 4×180 s, 6×300 s.
    pub fn total_body_protocol() -> Self {
        Self::from_groups(&[
            (6, 10.0),
            (2, 30.0),
            (6, 60.0),
            (5, 120.0),
            (4, 180.0),
            (6, 300.0),
        ])
        .expect("protocol is valid")
    }

    /// The last five frames of [`Self::total_body_protocol`] (35–60 min).
    pub fn late_protocol() -> Self {
        Self::total_body_protocol().last(5)
    }

    /// The trailing `n` frames.
    pub fn last(&self, n: usize) -> Self {
        let n = n.clamp(1, self.frames.len());
        Self {
            frames: self.frames[self.frames.len() - n..].to_vec(),
        }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl TryFrom<Vec<Frame>> for FrameTiming {
    type Error = Error;

    fn try_from(frames: Vec<Frame>) -> Result<Self> {
        Self::new(frames)
    }
}

impl From<FrameTiming> for Vec<Frame> {
    fn from(t: FrameTiming) -> Self {
        t.frames
    }
}
