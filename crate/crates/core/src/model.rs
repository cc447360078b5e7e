//! Exponential-polynomial signals
//!
//! ```text
//! r(t) = Σ_k e^{λ_k t} Σ_{i=1..L_k} a_k^i t^{i-1} / (i-1)!
//! ```
//!
//! Amplitudes are stored in the factorial-weighted basis above. The plain
//! monomial basis `Σ c_k^i t^{i-1}` is available through [`to_monomial`] and
//! [`from_monomial`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// Two poles closer than `POLE_MERGE_TOL * (1 + |λ|)` are treated as one.
pub const POLE_MERGE_TOL: f64 = 1e-6;

/// Minimum node count used by [`model_distance`].
pub const DISTANCE_NODES: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub lambda: Complex64,
    pub multiplicity: usize,
}

impl Pole {
    pub fn new(lambda: Complex64, multiplicity: usize) -> Result<Self> {
        if multiplicity == 0 {
            return Err(Error::InvalidModel("multiplicity must be at least 1".into()));
        }
        if !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(Error::InvalidModel(format!("pole {lambda} is not finite")));
        }
        Ok(Self { lambda, multiplicity })
    }

    pub fn simple(lambda: Complex64) -> Self {
        Self { lambda, multiplicity: 1 }
    }
}

/// Coefficients `a^1..a^L` in the factorial-weighted basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeCoeffs(Vec<Complex64>);

impl AmplitudeCoeffs {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidModel("empty coefficient list".into()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        Ok(Self(coeffs))
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Value of the factorial-basis polynomial at `t` (Horner form).
    pub fn polynomial_at(&self, t: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &a) in self.0.iter().enumerate().rev() {
            // acc <- a^{i+1} + acc * t / (i+1)
            acc = a + acc * (t / (i + 1) as f64);
        }
        acc
    }

    /// Derivative of the factorial-basis polynomial: the basis shifts down by one.
    pub fn derivative_at(&self, t: f64) -> Complex64 {
        if self.0.len() < 2 {
            return Complex64::new(0.0, 0.0);
        }
        AmplitudeCoeffs(self.0[1..].to_vec()).polynomial_at(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub pole: Pole,
    pub coeffs: AmplitudeCoeffs,
}

impl Mode {
    pub fn new(lambda: Complex64, coeffs: Vec<Complex64>) -> Result<Self> {
        let coeffs = AmplitudeCoeffs::new(coeffs)?;
        let pole = Pole::new(lambda, coeffs.len())?;
        Ok(Self { pole, coeffs })
    }

    pub fn lambda(&self) -> Complex64 {
        self.pole.lambda
    }

    pub fn multiplicity(&self) -> usize {
        self.pole.multiplicity
    }

    pub fn evaluate(&self, t: f64) -> Complex64 {
        (self.pole.lambda * t).exp() * self.coeffs.polynomial_at(t)
    }

    pub fn evaluate_derivative(&self, t: f64) -> Complex64 {
        let lambda = self.pole.lambda;
        (lambda * t).exp() * (lambda * self.coeffs.polynomial_at(t) + self.coeffs.derivative_at(t))
    }
}

/// A finite sum of exponential-polynomial modes with pairwise distinct poles,
/// kept sorted by `(Re λ, Im λ)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpPolyModel {
    modes: Vec<Mode>,
}

pub(crate) fn pole_order(a: Complex64, b: Complex64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

pub(crate) fn poles_coincide(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

impl ExpPolyModel {
    pub fn new(mut modes: Vec<Mode>) -> Result<Self> {
        for m in &modes {
            if m.coeffs.len() != m.pole.multiplicity {
                return Err(Error::InvalidModel(format!(
                    "pole {} has multiplicity {} but {} coefficients",
                    m.pole.lambda,
                    m.pole.multiplicity,
                    m.coeffs.len()
                )));
            }
        }
        modes.sort_by(|a, b| pole_order(a.lambda(), b.lambda()));
        for (i, a) in modes.iter().enumerate() {
            for b in &modes[i + 1..] {
                if poles_coincide(a.lambda(), b.lambda(), POLE_MERGE_TOL) {
                    return Err(Error::InvalidModel(format!(
                        "poles {} and {} are closer than the merge tolerance",
                        a.lambda(),
                        b.lambda()
                    )));
                }
            }
        }
        Ok(Self { modes })
    }

    /// Model with one simple or multiple pole.
    pub fn single(lambda: Complex64, coeffs: Vec<Complex64>) -> Result<Self> {
        Self::new(vec![Mode::new(lambda, coeffs)?])
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn poles(&self) -> Vec<Pole> {
        self.modes.iter().map(|m| m.pole).collect()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn evaluate(&self, t: f64) -> Complex64 {
        self.modes.iter().map(|m| m.evaluate(t)).sum()
    }

    pub fn evaluate_derivative(&self, t: f64) -> Complex64 {
        self.modes.iter().map(|m| m.evaluate_derivative(t)).sum()
    }

    pub fn synthesize(&self, t0: f64, step: f64, n: usize) -> Result<SignalTrace> {
        self.synthesize_with(t0, step, n, Execution::default())
    }

    pub fn synthesize_with(
        &self,
        t0: f64,
        step: f64,
        n: usize,
        exec: Execution,
    ) -> Result<SignalTrace> {
        check_grid(t0, step, n)?;
        let values = exec::map_range(n, exec, |j| self.evaluate(t0 + j as f64 * step));
        SignalTrace::new(t0, step, values)
    }

    /// Every coefficient multiplied by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| Mode {
                pole: m.pole,
                coeffs: AmplitudeCoeffs(m.coeffs.0.iter().map(|&a| a * c).collect()),
            })
            .collect();
        Self { modes }
    }

    /// The model `t ↦ self(t + dt)`, re-expanded in the factorial basis.
    pub fn time_shift(&self, dt: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let a = m.coeffs.as_slice();
                let growth = (m.lambda() * dt).exp();
                let shifted = (0..a.len())
                    .map(|j| {
                        // a'^{j+1} = Σ_{i>j} a^{i+1} dt^{i-j} / (i-j)!
                        let mut acc = Complex64::new(0.0, 0.0);
                        let mut w = 1.0;
                        for (k, &ai) in a[j..].iter().enumerate() {
                            if k > 0 {
                                w *= dt / k as f64;
                            }
                            acc += ai * w;
                        }
                        acc * growth
                    })
                    .collect();
                Mode { pole: m.pole, coeffs: AmplitudeCoeffs(shifted) }
            })
            .collect();
        Self { modes }
    }

    /// Model keeping only the modes for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&Mode) -> bool) -> Self {
        Self { modes: self.modes.iter().filter(|m| keep(m)).cloned().collect() }
    }

    pub fn max_real_part(&self) -> Option<f64> {
        self.modes.iter().map(|m| m.lambda().re).reduce(f64::max)
    }
}

fn check_grid(t0: f64, step: f64, n: usize) -> Result<()> {
    if !t0.is_finite() {
        return Err(Error::InvalidGrid("start time is not finite".into()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
    }
    if n < 3 {
        return Err(Error::InvalidGrid(format!("at least 3 samples required, got {n}")));
    }
    Ok(())
}

/// Samples on the uniform grid `t0 + j·step`, `j = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    t0: f64,
    step: f64,
    values: Vec<Complex64>,
}

impl SignalTrace {
    pub fn new(t0: f64, step: f64, values: Vec<Complex64>) -> Result<Self> {
        check_grid(t0, step, values.len())?;
        Ok(Self { t0, step, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.step
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|j| self.time(j))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            t0: self.t0,
            step: self.step,
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    /// Same samples re-labelled to start at `t0`.
    pub fn with_origin(&self, t0: f64) -> Self {
        Self { t0, step: self.step, values: self.values.clone() }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn same_grid(&self, other: &SignalTrace) -> bool {
        self.t0 == other.t0 && self.step == other.step && self.len() == other.len()
    }
}

/// Factorial-basis coefficients to plain monomial coefficients of `t^{i-1}`.
pub fn to_monomial(factorial: &[Complex64], multiplicity: usize) -> Result<Vec<Complex64>> {
    if factorial.len() != multiplicity {
        return Err(Error::Shape { expected: multiplicity, actual: factorial.len() });
    }
    let mut fact = 1.0;
    Ok(factorial
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if i > 0 {
                fact *= i as f64;
            }
            a / fact
        })
        .collect())
}

pub fn from_monomial(monomial: &[Complex64], multiplicity: usize) -> Result<Vec<Complex64>> {
    if monomial.len() != multiplicity {
        return Err(Error::Shape { expected: multiplicity, actual: monomial.len() });
    }
    let mut fact = 1.0;
    Ok(monomial
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if i > 0 {
                fact *= i as f64;
            }
            c * fact
        })
        .collect())
}

/// Relative L2 distance `‖a − b‖ / max(‖a‖, ‖b‖)` over `window`, by the
/// trapezoid rule on [`DISTANCE_NODES`] nodes.
pub fn model_distance(a: &ExpPolyModel, b: &ExpPolyModel, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidGrid(format!("empty window [{lo}, {hi}]")));
    }
    let n = DISTANCE_NODES;
    let h = (hi - lo) / (n - 1) as f64;
    let terms = exec::map_range(n, Execution::default(), |j| {
        let t = lo + j as f64 * h;
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        let va = a.evaluate(t);
        let vb = b.evaluate(t);
        [w * (va - vb).norm_sqr(), w * va.norm_sqr(), w * vb.norm_sqr()]
    });
    let mut sums = [0.0; 3];
    for term in terms {
        for (s, x) in sums.iter_mut().zip(term) {
            *s += x;
        }
    }
    let scale = sums[1].max(sums[2]);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((sums[0] / scale).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn r(x: f64) -> Complex64 {
        c(x, 0.0)
    }

    #[test]
    fn evaluate_examples() {
        let m = ExpPolyModel::single(r(-1.0), vec![r(2.0)]).unwrap();
        assert_eq!(m.evaluate(0.0), r(2.0));
        let m = ExpPolyModel::single(c(0.0, PI), vec![r(1.0)]).unwrap();
        assert!((m.evaluate(1.0) - r(-1.0)).norm() < 1e-15);
        let m = ExpPolyModel::single(r(0.0), vec![r(0.0), r(0.0), r(2.0)]).unwrap();
        assert_eq!(m.evaluate(2.0), r(4.0));
    }

    #[test]
    fn derivative_examples() {
        let m = ExpPolyModel::single(r(2.0), vec![r(3.0)]).unwrap();
        assert_eq!(m.evaluate_derivative(0.0), r(6.0));
        let m = ExpPolyModel::single(r(0.0), vec![r(1.0), r(2.0)]).unwrap();
        assert_eq!(m.evaluate_derivative(5.0), r(2.0));
        // d/dt (1 + t) e^t = (2 + t) e^t, 3e at t = 1
        let m = ExpPolyModel::single(r(1.0), vec![r(1.0), r(1.0)]).unwrap();
        let h = 1e-6;
        let fd = (m.evaluate(1.0 + h) - m.evaluate(1.0 - h)) / (2.0 * h);
        assert!((fd - r(3.0 * E)).norm() / (3.0 * E) < 1e-8);
        assert!((m.evaluate_derivative(1.0) - r(3.0 * E)).norm() < 1e-14);
    }

    #[test]
    fn synthesize_examples() {
        let m = ExpPolyModel::single(r(0.0), vec![r(1.0)]).unwrap();
        let tr = m.synthesize(0.0, 0.5, 3).unwrap();
        assert_eq!(tr.values(), &[r(1.0); 3]);

        let m = ExpPolyModel::single(r(1.0), vec![r(1.0)]).unwrap();
        let tr = m.synthesize(0.0, 1.0, 3).unwrap();
        assert_eq!(&tr.values()[..2], &[r(1.0), r(E)]);

        let m = ExpPolyModel::new(vec![
            Mode::new(r(-1.0), vec![r(1.0)]).unwrap(),
            Mode::new(r(1.0), vec![r(4.0)]).unwrap(),
        ])
        .unwrap();
        let tr = m.synthesize(0.0, 1.0, 3).unwrap();
        assert_eq!(tr.values()[0], r(5.0));
        assert!((tr.values()[1] - r((-1.0f64).exp() + 4.0 * E)).norm() < 1e-14);
    }

    #[test]
    fn synthesize_rejects_bad_grid() {
        let m = ExpPolyModel::single(r(0.0), vec![r(1.0)]).unwrap();
        assert!(matches!(m.synthesize(0.0, 0.0, 5), Err(Error::InvalidGrid(_))));
        assert!(matches!(m.synthesize(0.0, 1.0, 2), Err(Error::InvalidGrid(_))));
        assert!(matches!(m.synthesize(0.0, -1.0, 5), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn monomial_conversion_examples() {
        let m = to_monomial(&[r(1.0), r(2.0), r(6.0)], 3).unwrap();
        assert_eq!(m, vec![r(1.0), r(2.0), r(3.0)]);
        assert_eq!(from_monomial(&[r(1.0)], 1).unwrap(), vec![r(1.0)]);
        assert!(matches!(to_monomial(&[r(1.0)], 2), Err(Error::Shape { .. })));
    }

    #[test]
    fn model_rejects_bad_modes() {
        assert!(Mode::new(r(0.0), vec![]).is_err());
        assert!(Mode::new(c(f64::NAN, 0.0), vec![r(1.0)]).is_err());
        let close = ExpPolyModel::new(vec![
            Mode::new(r(1.0), vec![r(1.0)]).unwrap(),
            Mode::new(r(1.0 + 1e-9), vec![r(1.0)]).unwrap(),
        ]);
        assert!(matches!(close, Err(Error::InvalidModel(_))));
        let bad = ExpPolyModel::new(vec![Mode {
            pole: Pole::simple(r(0.0)),
            coeffs: AmplitudeCoeffs::new(vec![r(1.0), r(2.0)]).unwrap(),
        }]);
        assert!(bad.is_err());
    }

    #[test]
    fn modes_sorted_canonically() {
        let m = ExpPolyModel::new(vec![
            Mode::new(c(1.0, -1.0), vec![r(1.0)]).unwrap(),
            Mode::new(c(-2.0, 0.0), vec![r(1.0)]).unwrap(),
            Mode::new(c(1.0, -3.0), vec![r(1.0)]).unwrap(),
        ])
        .unwrap();
        let poles: Vec<_> = m.modes().iter().map(|m| m.lambda()).collect();
        assert_eq!(poles, vec![c(-2.0, 0.0), c(1.0, -3.0), c(1.0, -1.0)]);
    }

    #[test]
    fn distance_examples() {
        let a = ExpPolyModel::single(r(0.0), vec![r(1.0)]).unwrap();
        let b = ExpPolyModel::single(r(0.0), vec![r(2.0)]).unwrap();
        assert_eq!(model_distance(&a, &a, (0.0, 1.0)).unwrap(), 0.0);
        assert!((model_distance(&a, &b, (0.0, 1.0)).unwrap() - 0.5).abs() < 1e-14);
        assert!(model_distance(&a, &b, (1.0, 1.0)).is_err());

        let base = ExpPolyModel::single(r(-1.0), vec![r(1.0)]).unwrap();
        let mut last = f64::INFINITY;
        for delta in [1e-2, 1e-3, 1e-4, 1e-5] {
            let other = ExpPolyModel::single(r(-1.0 - delta), vec![r(1.0)]).unwrap();
            let d = model_distance(&base, &other, (0.0, 2.0)).unwrap();
            let back = model_distance(&other, &base, (0.0, 2.0)).unwrap();
            assert!(d > 0.0 && d < last);
            assert_eq!(d, back);
            last = d;
        }
    }

    #[test]
    fn time_shift_matches_direct_evaluation() {
        let m = ExpPolyModel::new(vec![
            Mode::new(c(0.5, 2.0), vec![c(1.0, 1.0), r(-2.0), c(0.0, 3.0)]).unwrap(),
            Mode::new(r(-1.0), vec![r(2.0)]).unwrap(),
        ])
        .unwrap();
        let shifted = m.time_shift(0.75);
        for t in [0.0, 0.3, 1.7] {
            let want = m.evaluate(t + 0.75);
            assert!((shifted.evaluate(t) - want).norm() <= 1e-13 * want.norm());
        }
        let back = shifted.time_shift(-0.75);
        assert!(model_distance(&back, &m, (0.0, 1.0)).unwrap() < 1e-14);
    }

    fn arb_c() -> impl Strategy<Value = Complex64> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| c(a, b))
    }

    fn arb_mode() -> impl Strategy<Value = Mode> {
        ((-5.0f64..5.0, -5.0f64..5.0), proptest::collection::vec(arb_c(), 1..=3))
            .prop_map(|((re, im), coeffs)| Mode::new(c(re, im), coeffs).unwrap())
    }

    proptest! {
        #[test]
        fn basis_round_trip(coeffs in proptest::collection::vec(arb_c(), 1..=8)) {
            let l = coeffs.len();
            let back = from_monomial(&to_monomial(&coeffs, l).unwrap(), l).unwrap();
            for (a, b) in coeffs.iter().zip(&back) {
                prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
            }
        }

        #[test]
        fn derivative_matches_central_difference(mode in arb_mode(), t in 0.0f64..2.0) {
            let m = ExpPolyModel::new(vec![mode]).unwrap();
            let h = 1e-6;
            let fd = (m.evaluate(t + h) - m.evaluate(t - h)) / (2.0 * h);
            let exact = m.evaluate_derivative(t);
            let scale = exact.norm().max(m.evaluate(t).norm()).max(1e-3);
            prop_assert!((fd - exact).norm() <= 1e-6 * scale);
        }

        #[test]
        fn evaluation_is_linear_in_modes(a in arb_mode(), b in arb_mode(), t in -1.0f64..2.0) {
            prop_assume!(!poles_coincide(a.lambda(), b.lambda(), 1e-3));
            let ma = ExpPolyModel::new(vec![a.clone()]).unwrap();
            let mb = ExpPolyModel::new(vec![b.clone()]).unwrap();
            let both = ExpPolyModel::new(vec![a, b]).unwrap();
            let sum = ma.evaluate(t) + mb.evaluate(t);
            let scale = ma.evaluate(t).norm() + mb.evaluate(t).norm();
            prop_assert!((both.evaluate(t) - sum).norm() <= 4.0 * f64::EPSILON * scale.max(1e-300));
        }
    }
}
