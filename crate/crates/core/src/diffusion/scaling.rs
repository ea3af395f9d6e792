use crate::kinetics::{Channel, ParametricImage};

/// Percentile used as the robust channel maximum.
pub const ROBUST_PERCENTILE: f64 = 99.9;

/// Per-channel scale mapping parametric images into the score's working
/// range, `u = x / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScaling {
    pub scale: [f64; 2],
}

impl ChannelScaling {
    pub fn identity() -> Self {
        Self { scale: [1.0, 1.0] }
    }

    /// Scales each channel by its 99.9th percentile, falling back to the
    /// largest magnitude and then to 1 for images without positive values.
    pub fn robust_max(x: &ParametricImage) -> Self {
        let mut scale = [1.0; 2];
        for c in Channel::ALL {
            let vol = x.channel(c);
            let p = vol.percentile(ROBUST_PERCENTILE);
            let s = if p > 0.0 {
                p
            } else {
                vol.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
            };
            scale[c.index()] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
        }
        Self { scale }
    }

    pub fn normalize(&self, x: &ParametricImage) -> ParametricImage {
        x.map_channels(|c, v| {
            let s = self.scale[c.index()];
            v.map(|a| a / s)
        })
    }

    pub fn denormalize(&self, u: &ParametricImage) -> ParametricImage {
        u.map_channels(|c, v| {
            let s = self.scale[c.index()];
            v.map(|a| a * s)
        })
    }
}

impl Default for ChannelScaling {
    fn default() -> Self {
        Self::identity()
    }
}
