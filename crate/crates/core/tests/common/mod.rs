#![allow(dead_code)]

use bcm_spectral::model::{ExpPolyModel, Mode};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Sampling box for random fixtures.
#[derive(Debug, Clone, Copy)]
pub struct FixtureBox {
    pub re: (f64, f64),
    pub im_max: f64,
    pub separation: f64,
    pub amplitude: (f64, f64),
}

pub const SIMPLE_BOX: FixtureBox =
    FixtureBox { re: (-2.0, 1.0), im_max: 8.0, separation: 0.5, amplitude: (0.5, 2.0) };

fn amplitude(rng: &mut ChaCha8Rng, b: &FixtureBox) -> Complex64 {
    Complex64::from_polar(
        rng.random_range(b.amplitude.0..b.amplitude.1),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// Poles by rejection sampling until pairwise separation holds; one mode per
/// entry of `mults`.
pub fn random_model(rng: &mut ChaCha8Rng, mults: &[usize], b: &FixtureBox) -> ExpPolyModel {
    let mut poles: Vec<Complex64> = Vec::new();
    while poles.len() < mults.len() {
        let p = c(rng.random_range(b.re.0..b.re.1), rng.random_range(-b.im_max..b.im_max));
        if poles.iter().all(|q| (q - p).norm() >= b.separation) {
            poles.push(p);
        }
    }
    let modes = poles
        .into_iter()
        .zip(mults)
        .map(|(p, &l)| Mode::new(p, (0..l).map(|_| amplitude(rng, b)).collect()).unwrap())
        .collect();
    ExpPolyModel::new(modes).unwrap()
}

/// Seeded model with 1..=`k_max` simple poles.
pub fn seeded_simple_model(seed: u64, k_max: usize) -> ExpPolyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=k_max);
    random_model(&mut rng, &vec![1; k], &SIMPLE_BOX)
}

/// Trace on `[0, 2T]` with `2n - 1` samples.
pub fn window_trace(m: &ExpPolyModel, half_window: f64, n: usize) -> bcm_spectral::model::SignalTrace {
    m.synthesize(0.0, half_window / (n - 1) as f64, 2 * n - 1).unwrap()
}

/// Largest pole distance between models with matching mode counts.
pub fn pole_error(got: &ExpPolyModel, want: &ExpPolyModel) -> f64 {
    assert_eq!(got.len(), want.len());
    got.modes().iter().zip(want.modes()).map(|(a, b)| (a.lambda() - b.lambda()).norm()).fold(0.0, f64::max)
}

/// Largest per-coefficient relative error `|â − a| / |a|`.
pub fn coeff_error(got: &ExpPolyModel, want: &ExpPolyModel) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in got.modes().iter().zip(want.modes()) {
        for (x, y) in a.coeffs.as_slice().iter().zip(b.coeffs.as_slice()) {
            worst = worst.max((x - y).norm() / y.norm());
        }
    }
    worst
}

pub fn same_shape(got: &ExpPolyModel, want: &ExpPolyModel) -> bool {
    got.len() == want.len()
        && got.modes().iter().zip(want.modes()).all(|(a, b)| a.multiplicity() == b.multiplicity())
}
