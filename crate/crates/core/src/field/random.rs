//! Seeded random band-limited fields used by tests and the identity battery.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PeriodicField, SpaceGrid, TimeGrid};

/// Deterministic generator used wherever a report records a seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape of a random trigonometric-times-polynomial field.
#[derive(Debug, Clone, Copy)]
pub struct Band {
    /// Highest time harmonic.
    pub t_modes: usize,
    /// Highest power of `x` (plus one cosine mode per power).
    pub x_modes: usize,
    /// Scale of the coefficients.
    pub amplitude: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self {
            t_modes: 3,
            x_modes: 3,
            amplitude: 1.0,
        }
    }
}

/// A random smooth field `sum_{k,m} c_{km} trig_k(t) cos(m pi x)`, where
/// `trig_k` is `cos` or `sin` of `2 pi k t` with random phase.
pub fn random_field<R: Rng>(rng: &mut R, time: &TimeGrid, space: SpaceGrid, ncomp: usize, band: Band) -> PeriodicField {
    let t_modes = band.t_modes.min((time.len() - 1) / 2);
    let mut coeffs = Vec::new();
    for _ in 0..ncomp {
        let mut comp = Vec::new();
        for k in 0..=t_modes {
            for m in 0..=band.x_modes {
                let decay = 1.0 / (1.0 + (k + m) as f64);
                let amp = band.amplitude * decay * rng.gen_range(-1.0..1.0);
                let phase = rng.gen_range(0.0..2.0 * PI);
                comp.push((k as f64, m as f64, amp, phase));
            }
        }
        coeffs.push(comp);
    }
    PeriodicField::from_fn(time, space, ncomp, |c, t, x| {
        coeffs[c]
            .iter()
            .map(|&(k, m, amp, phase)| amp * (2.0 * PI * k * t + phase).cos() * (m * PI * x).cos())
            .sum()
    })
    .expect("random fields are finite")
}
