//! ADAM, the step-halving learning-rate schedule and parameter-norm clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected ADAM update, in place.
///
/// Non-finite gradient entries leave both `params` and `state` untouched and
/// return [`Error::NonFinite`]; training loops turn that into a divergence
/// report.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    let n = params.len();
    if grads.len() != n {
        return Err(Error::shape(n, grads.len()));
    }
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(n, state.m.len()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}: {}", grads[i])));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// `lr0 · 2^(−⌊step / halve_every⌋)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub halve_every: usize,
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        let halvings = (step / self.halve_every.max(1)).min(i32::MAX as usize) as i32;
        self.lr0 * 0.5f64.powi(halvings)
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Radial projection onto the ball `‖Θ‖₂ ≤ R`; identity inside the ball.
pub fn clip_params(params: &mut [f64], radius: f64) {
    let norm = l2_norm(params);
    if norm > radius {
        let s = radius / norm;
        for p in params.iter_mut() {
            *p *= s;
        }
        // rounding can leave the norm a few ulps above the radius
        let mut after = l2_norm(params);
        while after > radius {
            let s = radius / after * (1.0 - f64::EPSILON);
            for p in params.iter_mut() {
                *p *= s;
            }
            after = l2_norm(params);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn scalar_first_step() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        assert!((s.m[0] - 0.1).abs() < 1e-15);
        assert!((s.v[0] - 0.001).abs() < 1e-15);
        // m_hat = v_hat = 1 up to rounding, so the step is 0.1 / (1 + 1e-8)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{}", p[0]);
        assert!((p[0] + 0.09999999).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![1.0, 2.0, 3.0];
            let mut s = AdamState::new(3);
            s.m = vec![0.1, 0.2, -0.3];
            s.v = vec![0.01, 0.5, 0.2];
            s.t = 4;
            adam_step(&mut p, &[0.5, -0.25, 2.0], &mut s, 0.01).unwrap();
            (p, s)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), p2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(s1, s2);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(2);
        assert!(matches!(adam_step(&mut p, &[f64::NAN, 0.0], &mut s, 0.1), Err(Error::NonFinite(_))));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s, AdamState::new(2));
        assert!(matches!(adam_step(&mut p, &[0.0], &mut s, 0.1), Err(Error::Shape { .. })));
    }

    #[test]
    fn schedule_halves() {
        let s = LrSchedule { lr0: 0.005, halve_every: 2500 };
        assert_eq!(s.at(0), 0.005);
        assert_eq!(s.at(2499), 0.005);
        assert_eq!(s.at(2500), 0.0025);
        assert_eq!(s.at(10_000), 0.005 / 16.0);
    }

    #[test]
    fn clipping_examples() {
        let mut inside = vec![0.3, 0.4];
        clip_params(&mut inside, 1.0);
        assert_eq!(inside, vec![0.3, 0.4]);
        let mut outside = vec![3.0, 4.0];
        clip_params(&mut outside, 1.0);
        assert!((outside[0] - 0.6).abs() < 1e-15 && (outside[1] - 0.8).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn clipped_norm_within_radius(v in proptest::collection::vec(-100f64..100.0, 1..40), r in 1e-3f64..50.0) {
            let mut p = v.clone();
            clip_params(&mut p, r);
            prop_assert!(l2_norm(&p) <= r + 1e-12);
            if l2_norm(&v) <= r {
                prop_assert_eq!(p, v);
            }
        }
    }
}
