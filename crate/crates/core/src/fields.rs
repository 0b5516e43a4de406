//! Seeded band-limited test fields: real trigonometric polynomials with a
//! bounded mode set, reproducible from an explicit seed.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{GridScalar, GridSpec};

/// Real trig polynomial with modes `|k_a| <= max_mode` on the listed axes
/// (t-independent when the last axis is excluded), sup-amplitude about `amp`.
pub fn random_trig_scalar(
    spec: &GridSpec,
    seed: u64,
    max_mode: usize,
    amp: f64,
    axes: &[usize],
) -> GridScalar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.ndim();
    // enumerate non-zero mode vectors supported on `axes`
    let mut modes: Vec<Vec<i64>> = vec![vec![0; d]];
    for &a in axes {
        let mut next = Vec::new();
        for m in &modes {
            for k in -(max_mode as i64)..=(max_mode as i64) {
                let mut mm = m.clone();
                mm[a] = k;
                next.push(mm);
            }
        }
        modes = next;
    }
    modes.retain(|m| m.iter().any(|&k| k != 0));
    let terms: Vec<(Vec<i64>, f64, f64)> = modes
        .into_iter()
        .map(|m| {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            (m, a, b)
        })
        .collect();
    let norm: f64 = terms.iter().map(|(_, a, b)| a.abs() + b.abs()).sum();
    let scale = if norm > 0.0 { amp / norm } else { 0.0 };
    let periods = spec.periods().to_vec();
    GridScalar::from_real_fn(spec, move |p| {
        let mut v = 0.0;
        for (m, a, b) in &terms {
            let phase: f64 = m
                .iter()
                .zip(p)
                .zip(&periods)
                .map(|((&k, &x), &per)| 2.0 * std::f64::consts::PI * k as f64 * x / per)
                .sum();
            v += a * phase.cos() + b * phase.sin();
        }
        v * scale
    })
}

/// Complex storage of a real constant.
pub fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}
