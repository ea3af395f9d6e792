use super::config::AdamConfig;
use crate::kinetics::ParametricImage;
use crate::volume::Dims;

/// ADAM with bias-corrected moments over both channels.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: ParametricImage,
    v: ParametricImage,
    step: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, dims: Dims) -> Self {
        Self {
            cfg,
            m: ParametricImage::zeros(dims),
            v: ParametricImage::zeros(dims),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// Moves `x` against `grad`.
    pub fn step(&mut self, x: &mut ParametricImage, grad: &ParametricImage) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let pairs = [
            (&mut x.kappa, &mut self.m.kappa, &mut self.v.kappa, &grad.kappa),
            (&mut x.b, &mut self.m.b, &mut self.v.b, &grad.b),
        ];
        for (xv, mv, vv, gv) in pairs {
            let xs = xv.data_mut();
            let ms = mv.data_mut();
            let vs = vv.data_mut();
            for (i, &g) in gv.data().iter().enumerate() {
                ms[i] = beta1 * ms[i] + (1.0 - beta1) * g;
                vs[i] = beta2 * vs[i] + (1.0 - beta2) * g * g;
                xs[i] -= lr * (ms[i] / c1) / ((vs[i] / c2).sqrt() + eps);
            }
        }
    }
}
