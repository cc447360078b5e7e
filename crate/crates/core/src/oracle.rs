//! Reference estimators for cross-checking the kernel-pencil path.

use nalgebra::{DMatrix, Schur, SVD};

use crate::error::{Error, Result};
use crate::model::{pole_order, ExpPolyModel, Pole, SignalTrace};

/// Singular values below this fraction of the largest are treated as zero.
pub const ORACLE_RANK_TOL: f64 = 1e-10;

/// Classical matrix-pencil estimate of simple poles.
///
/// Builds the `(N−L)×(L+1)` sample Hankel matrix with `L = N/2`, keeps at most
/// `order_cap` singular directions, and maps the eigenvalues `z` of the shifted
/// right-singular-vector pencil to `λ = ln(z)/h`. The principal logarithm
/// folds `Im λ` into `(−π/h, π/h]`.
pub fn matrix_pencil_estimate(trace: &SignalTrace, order_cap: usize) -> Result<Vec<Pole>> {
    let y = trace.values();
    let n = y.len();
    let l = n / 2;
    if l < 1 || order_cap == 0 {
        return Ok(Vec::new());
    }
    let hankel = DMatrix::from_fn(n - l, l + 1, |i, j| y[i + j]);
    let svd = SVD::try_new(hankel, false, true, crate::SVD_EPS, 0)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Ok(Vec::new());
    }
    let rank = sv.iter().filter(|&&s| s > ORACLE_RANK_TOL * smax).count();
    let m = order_cap.min(rank);
    if m == 0 {
        return Ok(Vec::new());
    }
    // rows of v_t are right singular vectors; with V' = v_t[..m]ᴴ,
    // V1ᴴ drops the last row of V' and V2ᴴ drops the first
    let v_t = svd.v_t.expect("requested");
    let vh = v_t.rows(0, m);
    let v1h = vh.columns(0, l).into_owned();
    let v2h = vh.columns(1, l).into_owned();
    let pinv = v1h
        .pseudo_inverse(f64::EPSILON)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
    let z_op = v2h * pinv;
    let schur = Schur::try_new(z_op, f64::EPSILON, 10_000 * m.max(10))
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let h = trace.step();
    let mut poles: Vec<Pole> = (0..m)
        .map(|i| t[(i, i)].ln() / h)
        .filter(|lam| lam.re.is_finite() && lam.im.is_finite())
        .map(Pole::simple)
        .collect();
    poles.sort_by(|a, b| pole_order(a.lambda, b.lambda));
    Ok(poles)
}

/// `‖model − trace‖ / ‖trace‖` over the trace samples; the absolute norm of
/// the model samples when the trace is identically zero.
pub fn reconstruction_residual(model: &ExpPolyModel, trace: &SignalTrace) -> f64 {
    let mut err = 0.0;
    let mut norm = 0.0;
    for (t, &y) in trace.times().zip(trace.values()) {
        err += (model.evaluate(t) - y).norm_sqr();
        norm += y.norm_sqr();
    }
    if norm == 0.0 {
        return err.sqrt();
    }
    (err / norm).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use num_complex::Complex64;

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn constant_signal_has_zero_pole() {
        let tr = SignalTrace::new(0.0, 0.01, vec![r(1.0); 101]).unwrap();
        let p = matrix_pencil_estimate(&tr, 3).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].lambda.norm() < 1e-12);
    }

    #[test]
    fn two_real_poles() {
        let m = ExpPolyModel::new(vec![
            Mode::new(r(-1.0), vec![r(2.0)]).unwrap(),
            Mode::new(r(2.0), vec![r(1.0)]).unwrap(),
        ])
        .unwrap();
        let tr = m.synthesize(0.0, 0.01, 401).unwrap();
        let p = matrix_pencil_estimate(&tr, 2).unwrap();
        assert!((p[0].lambda - r(-1.0)).norm() < 1e-9);
        assert!((p[1].lambda - r(2.0)).norm() < 1e-9);
    }

    #[test]
    fn aliased_frequency_folds() {
        let m = ExpPolyModel::single(Complex64::new(0.0, 200.0), vec![r(1.0)]).unwrap();
        let tr = m.synthesize(0.0, 0.1, 101).unwrap();
        let p = matrix_pencil_estimate(&tr, 1).unwrap();
        let h = 0.1;
        let im = p[0].lambda.im;
        assert!(im > -std::f64::consts::PI / h && im <= std::f64::consts::PI / h);
        let folded = 200.0 - (200.0 * h / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI / h;
        assert!((im - folded).abs() < 1e-8);
    }

    #[test]
    fn order_cap_reduced_to_rank() {
        let m = ExpPolyModel::single(r(-0.5), vec![r(1.0)]).unwrap();
        let tr = m.synthesize(0.0, 0.01, 201).unwrap();
        assert_eq!(matrix_pencil_estimate(&tr, 10).unwrap().len(), 1);
    }

    #[test]
    fn residual_examples() {
        let m = ExpPolyModel::single(r(-1.0), vec![r(1.0), r(0.5)]).unwrap();
        let tr = m.synthesize(0.0, 0.01, 201).unwrap();
        assert!(reconstruction_residual(&m, &tr) <= 1e-12);
        let zero = ExpPolyModel::new(Vec::new()).unwrap();
        assert_eq!(reconstruction_residual(&zero, &tr), 1.0);
    }

    #[test]
    fn residual_grows_with_pole_error() {
        let m = ExpPolyModel::single(r(-1.0), vec![r(1.0)]).unwrap();
        let tr = m.synthesize(0.0, 0.01, 201).unwrap();
        let mut last = 0.0;
        for k in 1..6 {
            let d = 1e-3 * k as f64;
            let p = ExpPolyModel::single(r(-1.0 + d), vec![r(1.0)]).unwrap();
            let res = reconstruction_residual(&p, &tr);
            assert!(res > last);
            last = res;
        }
    }
}
