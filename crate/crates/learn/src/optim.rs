//! Adam / AdamW and Polyak averaging.

use serde::{Deserialize, Serialize};

use crate::mlp::Mlp;
use crate::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW) weight decay; 0 gives plain Adam.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl AdamConfig {
    pub fn adam(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, ..Self::default() }
    }
}

/// Moment accumulators mirroring a list of parameter slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_mlp(config: AdamConfig, net: &Mlp) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        Self::new(config, &sizes)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every slice in `params`.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<(), LearnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(LearnError::Dimension {
                what: "parameter group count",
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(LearnError::Dimension { what: "parameter group size", expected: m.len(), got: p.len() });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                if weight_decay != 0.0 {
                    p[i] -= lr * weight_decay * p[i];
                }
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &[&[f64]]) -> Result<(), LearnError> {
        self.step(net.params_mut(), grads)
    }
}

/// target ← (1 − τ)·target + τ·online, parameter-wise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<(), LearnError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(LearnError::Config(format!("tau must lie in (0, 1], got {tau}")));
    }
    if target.spec() != online.spec() {
        return Err(LearnError::Config("soft update between networks of different shapes".into()));
    }
    let src = online.params();
    for (t, o) in target.params_mut().into_iter().zip(src) {
        for (a, b) in t.iter_mut().zip(o) {
            *a = if tau == 1.0 { *b } else { (1.0 - tau) * *a + tau * b };
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Activation, MlpSpec};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut opt = Adam::new(AdamConfig::adam(0.1), &[3]);
        for _ in 0..10 {
            opt.step(vec![&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };
        let g = [0.5, -3.0, 1e-6, 0.0];
        let mut p = vec![0.0; 4];
        let mut opt = Adam::new(cfg, &[4]);
        opt.step(vec![&mut p], &[&g]).unwrap();
        for i in 0..4 {
            // m̂ = g, v̂ = g² after bias correction
            let expect = -0.01 * g[i] / (g[i].abs() + 1e-8);
            assert_abs_diff_eq!(p[i], expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn decoupled_decay_shrinks_weights() {
        let mut p = vec![2.0];
        let mut opt = Adam::new(AdamConfig::adamw(0.1, 0.5), &[1]);
        opt.step(vec![&mut p], &[&[0.0]]).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 - 0.1 * 0.5 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = vec![0.3, -0.7];
            let mut opt = Adam::new(AdamConfig::adamw(0.05, 0.01), &[2]);
            for t in 0..50 {
                let g = [p[0] - 1.0 + (t as f64).sin() * 0.1, 2.0 * p[1]];
                opt.step(vec![&mut p], &[&g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![0.0; 2];
        let mut opt = Adam::new(AdamConfig::default(), &[3]);
        assert!(opt.step(vec![&mut p], &[&[0.0, 0.0]]).is_err());
    }

    fn pair(seed: u64) -> (Mlp, Mlp) {
        let spec = MlpSpec::new(&[3, 4, 2], Activation::Relu, Activation::Identity);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (Mlp::new(&spec, None, &mut r).unwrap(), Mlp::new(&spec, None, &mut r).unwrap())
    }

    #[test]
    fn full_soft_update_copies() {
        let (mut t, o) = pair(1);
        soft_update(&mut t, &o, 1.0).unwrap();
        assert_eq!(t, o);
    }

    #[test]
    fn polyak_step_value() {
        let spec = MlpSpec::new(&[2, 2], Activation::Identity, Activation::Identity);
        let mut t = Mlp::zeros(&spec).unwrap();
        let mut o = Mlp::zeros(&spec).unwrap();
        for p in o.params_mut() {
            p.fill(1.0);
        }
        soft_update(&mut t, &o, 0.005).unwrap();
        assert!(t.params().concat().iter().all(|&v| (v - 0.005).abs() < 1e-15));
    }

    #[test]
    fn geometric_convergence_half_life() {
        let (mut t, o) = pair(2);
        let tau = 0.005;
        let dist = |a: &Mlp, b: &Mlp| {
            a.params().concat().iter().zip(b.params().concat()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let d0 = dist(&t, &o);
        let half_life = (2f64.ln() / tau).round() as usize;
        let mut steps = 0usize;
        while dist(&t, &o) > d0 / 2.0 {
            soft_update(&mut t, &o, tau).unwrap();
            steps += 1;
        }
        assert!(steps.abs_diff(half_life) <= 1, "{steps} vs {half_life}");
        // contraction
        let before = dist(&t, &o);
        soft_update(&mut t, &o, tau).unwrap();
        assert!(dist(&t, &o) < before);
    }

    #[test]
    fn soft_update_rejects_bad_tau_and_shapes() {
        let (mut t, o) = pair(3);
        assert!(soft_update(&mut t, &o, 0.0).is_err());
        let other = Mlp::zeros(&MlpSpec::new(&[3, 5, 2], Activation::Relu, Activation::Identity)).unwrap();
        assert!(soft_update(&mut t, &other, 0.5).is_err());
    }
}
