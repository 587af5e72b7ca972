use super::param::Module;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Bias-corrected Adam update of one tensor at step `t` (1-based).
pub fn adam_step(value: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        value[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
}

/// Adam state for every trainable parameter of one network, in visiting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, net: &mut dyn Module) -> Self {
        let mut m = Vec::new();
        net.visit("", &mut |_, p| {
            if p.trainable {
                m.push(vec![0.0; p.len()]);
            }
        });
        Self {
            cfg,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step(&mut self, net: &mut dyn Module) {
        self.t += 1;
        let (t, cfg) = (self.t, self.cfg);
        let mut i = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        net.visit("", &mut |_, p| {
            if p.trainable {
                adam_step(&mut p.value, &p.grad, &mut ms[i], &mut vs[i], t, &cfg);
                i += 1;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: AdamConfig = AdamConfig {
        lr: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    #[test]
    fn zero_gradient_is_fixed_point() {
        let (mut x, mut m, mut v) = (vec![1.5, -2.0], vec![0.0; 2], vec![0.0; 2]);
        adam_step(&mut x, &[0.0, 0.0], &mut m, &mut v, 1, &CFG);
        assert_eq!(x, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_by_hand() {
        let (mut x, mut m, mut v) = (vec![0.0], vec![0.0], vec![0.0]);
        adam_step(&mut x, &[0.5], &mut m, &mut v, 1, &CFG);
        // m_hat = 0.5, v_hat = 0.25: delta = -0.1 * 0.5 / (0.5 + 1e-8)
        assert!((x[0] - (-0.099_999_998)).abs() < 1e-12);
    }
}
