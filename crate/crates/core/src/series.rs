use crate::error::{Error, Result};
use crate::kinetics::FrameTiming;
use crate::volume::{Dims, Volume3D};

/// Reconstructed frames with their acquisition timing.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSeries {
    frames: Vec<Volume3D>,
    timing: FrameTiming,
    dose_fraction: f64,
}

impl DynamicSeries {
    pub fn new(frames: Vec<Volume3D>, timing: FrameTiming, dose_fraction: f64) -> Result<Self> {
        if frames.len() != timing.len() {
            return Err(Error::Shape(format!(
                "{} frame volumes for {} timing entries",
                frames.len(),
                timing.len()
            )));
        }
        let dims = frames[0].dims();
        if frames.iter().any(|f| f.dims() != dims) {
            return Err(Error::Shape("frame volumes have differing dims".into()));
        }
        if !(dose_fraction > 0.0 && dose_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "dose fraction {dose_fraction} outside (0, 1]"
            )));
        }
        Ok(Self {
            frames,
            timing,
            dose_fraction,
        })
    }

    pub fn frames(&self) -> &[Volume3D] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Volume3D] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<Volume3D> {
        self.frames
    }

    pub fn timing(&self) -> &FrameTiming {
        &self.timing
    }

    pub fn dose_fraction(&self) -> f64 {
        self.dose_fraction
    }

    pub fn dims(&self) -> Dims {
        self.frames[0].dims()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Replaces the frame volumes, keeping timing and dose.
    pub fn with_frames(&self, frames: Vec<Volume3D>) -> Result<Self> {
        Self::new(frames, self.timing.clone(), self.dose_fraction)
    }
}
