use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Damped double integrator with a scalar force input.
///
/// `s' = A s + B clip(a) + noise`, reward `-(|s|^2 + control_weight * a^2)`.
/// Episodes start at rest with the position uniform on `[-init_pos, init_pos]`
/// and only end by truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassSpec {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub noise_std: f64,
    pub control_weight: f64,
    pub action_low: f64,
    pub action_high: f64,
    pub init_pos: f64,
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for PointMassSpec {
    fn default() -> Self {
        Self {
            a: [[1.0, 0.1], [0.0, 0.95]],
            b: [0.0, 0.1],
            noise_std: 0.01,
            control_weight: 0.01,
            action_low: -1.0,
            action_high: 1.0,
            init_pos: 1.0,
            gamma: 0.95,
            horizon: 100,
        }
    }
}

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 1;

impl PointMassSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = self.a.iter().flatten().chain(&self.b).all(|x| x.is_finite());
        if !finite || !(self.noise_std >= 0.0) || !(self.control_weight >= 0.0) {
            return Err(Error::InvalidSpec("point-mass dynamics must be finite with nonnegative noise".into()));
        }
        if !(self.action_low < self.action_high) {
            return Err(Error::InvalidSpec("action bounds need low < high".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) || self.horizon == 0 {
            return Err(Error::InvalidSpec("gamma must lie in (0, 1) and horizon be positive".into()));
        }
        Ok(())
    }

    pub fn clip(&self, a: f64) -> f64 {
        a.clamp(self.action_low, self.action_high)
    }

    pub fn reward(&self, s: &[f64], a: f64) -> f64 {
        let a = self.clip(a);
        -(s[0] * s[0] + s[1] * s[1] + self.control_weight * a * a)
    }

    /// Noise-free successor.
    pub fn mean_next(&self, s: &[f64], a: f64) -> [f64; 2] {
        let a = self.clip(a);
        [
            self.a[0][0] * s[0] + self.a[0][1] * s[1] + self.b[0] * a,
            self.a[1][0] * s[0] + self.a[1][1] * s[1] + self.b[1] * a,
        ]
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: &[f64], a: f64, rng: &mut R) -> Vec<f64> {
        let m = self.mean_next(s, a);
        if self.noise_std == 0.0 {
            return m.to_vec();
        }
        let noise = Normal::new(0.0, self.noise_std).expect("validated noise std");
        m.iter().map(|&x| x + noise.sample(rng)).collect()
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        vec![rng.gen_range(-self.init_pos..=self.init_pos), 0.0]
    }

    /// Spectral radius of `A - B K` under the feedback `a = -K s` (ignoring clipping).
    pub fn closed_loop_radius(&self, gain: [f64; 2]) -> f64 {
        let m = [
            [self.a[0][0] - self.b[0] * gain[0], self.a[0][1] - self.b[0] * gain[1]],
            [self.a[1][0] - self.b[1] * gain[0], self.a[1][1] - self.b[1] * gain[1]],
        ];
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            (tr / 2.0 + r).abs().max((tr / 2.0 - r).abs())
        } else {
            det.sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_step_is_linear() {
        let spec = PointMassSpec {
            noise_std: 0.0,
            ..PointMassSpec::default()
        };
        let mut rng = crate::seeds::rng_from_seed(0);
        let s = spec.sample_next(&[0.5, -0.2], 0.3, &mut rng);
        assert!((s[0] - (0.5 - 0.02)).abs() < 1e-15);
        assert!((s[1] - (-0.19 + 0.03)).abs() < 1e-15);
        // actions are clipped before use
        let s = spec.sample_next(&[0.0, 0.0], 5.0, &mut rng);
        assert!((s[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn default_gain_is_stabilizing() {
        let spec = PointMassSpec::default();
        let r = spec.closed_loop_radius([0.6, 1.0]);
        assert!(r < 1.0 && (r - 0.856f64.sqrt()).abs() < 1e-12);
        // open loop has a unit eigenvalue
        assert!((spec.closed_loop_radius([0.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
