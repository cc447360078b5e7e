//! Discrete connecting operator.
//!
//! On the uniform grid `t_i = i·h`, `h = T/(n-1)`, the kernels
//! `r(2T - t_i - t_j)` and `ṙ(2T - t_i - t_j)` only ever need the samples
//! `r((2(n-1) - i - j)·h)`, so a trace with `2n - 1` samples on `[0, 2T]`
//! fills both matrices by direct indexing. Quadrature is the trapezoid rule,
//! folded in as a diagonal right factor: the pencil is `(Ṙ·W, R·W)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ExpPolyModel, SignalTrace};

pub type ControlVector = DVector<Complex64>;

pub const MIN_GRID_NODES: usize = 8;

/// Relative tolerance when comparing a trace step against a grid step.
const STEP_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    half_window: f64,
    n: usize,
    step: f64,
    weights: Vec<f64>,
}

impl Grid {
    /// `n` trapezoid nodes on `[0, half_window]`.
    pub fn new(half_window: f64, n: usize) -> Result<Self> {
        if !(half_window > 0.0 && half_window.is_finite()) {
            return Err(Error::InvalidGrid(format!("T must be positive, got {half_window}")));
        }
        if n < MIN_GRID_NODES {
            return Err(Error::InvalidGrid(format!(
                "at least {MIN_GRID_NODES} nodes required, got {n}"
            )));
        }
        let step = half_window / (n - 1) as f64;
        let mut weights = vec![step; n];
        weights[0] = 0.5 * step;
        weights[n - 1] = 0.5 * step;
        Ok(Self { half_window, n, step, weights })
    }

    pub fn half_window(&self) -> f64 {
        self.half_window
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }

    /// Control vector sampled from `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> Complex64) -> ControlVector {
        DVector::from_iterator(self.n, self.nodes().map(f))
    }

    fn check(&self, v: &ControlVector) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::Shape { expected: self.n, actual: v.len() });
        }
        Ok(())
    }
}

/// How `ṙ` is obtained when filling `Ṙ`.
#[derive(Debug, Clone, Copy)]
pub enum DerivativeMode<'a> {
    /// Exact derivative of a known generating model.
    Analytic(&'a ExpPolyModel),
    /// Finite differences of the trace samples.
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct KernelPencil {
    grid: Grid,
    origin: f64,
    samples: Vec<Complex64>,
    derivative_samples: Vec<Complex64>,
    r: DMatrix<Complex64>,
    r_dot: DMatrix<Complex64>,
    rw: DMatrix<Complex64>,
    r_dot_w: DMatrix<Complex64>,
}

/// Kernel pencil for a trace with `2n - 1` samples; `T = (n-1)·step`.
///
/// Kernel arguments are measured from the first sample, so a trace starting
/// at `t0 ≠ 0` describes `s ↦ r(t0 + s)`.
pub fn build_pencil(trace: &SignalTrace, mode: DerivativeMode<'_>) -> Result<KernelPencil> {
    let len = trace.len();
    if len % 2 == 0 {
        return Err(Error::Shape { expected: len + 1, actual: len });
    }
    let n = (len + 1) / 2;
    let grid = Grid::new((n - 1) as f64 * trace.step(), n)?;
    build_pencil_on(trace, &grid, mode)
}

pub fn build_pencil_on(
    trace: &SignalTrace,
    grid: &Grid,
    mode: DerivativeMode<'_>,
) -> Result<KernelPencil> {
    let n = grid.len();
    if trace.len() != 2 * n - 1 {
        return Err(Error::Shape { expected: 2 * n - 1, actual: trace.len() });
    }
    if (trace.step() - grid.step()).abs() > STEP_MATCH_TOL * grid.step() {
        return Err(Error::GridMismatch(format!(
            "trace step {} differs from grid step {}",
            trace.step(),
            grid.step()
        )));
    }
    let samples = trace.values().to_vec();
    if samples.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidGrid("trace contains non-finite samples".into()));
    }
    let derivative_samples = match mode {
        DerivativeMode::Analytic(model) => {
            trace.times().map(|t| model.evaluate_derivative(t)).collect()
        }
        DerivativeMode::FiniteDifference => finite_difference(&samples, trace.step())?,
    };
    let last = 2 * (n - 1);
    let r = DMatrix::from_fn(n, n, |i, j| samples[last - i - j]);
    let r_dot = DMatrix::from_fn(n, n, |i, j| derivative_samples[last - i - j]);
    let rw = weighted(&r, grid.weights());
    let r_dot_w = weighted(&r_dot, grid.weights());
    Ok(KernelPencil {
        grid: grid.clone(),
        origin: trace.t0(),
        samples,
        derivative_samples,
        r,
        r_dot,
        rw,
        r_dot_w,
    })
}

fn weighted(m: &DMatrix<Complex64>, w: &[f64]) -> DMatrix<Complex64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= Complex64::new(w[j], 0.0);
    }
    out
}

impl KernelPencil {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Time of the first trace sample.
    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// `R[i][j] = r(2T - t_i - t_j)`.
    pub fn r(&self) -> &DMatrix<Complex64> {
        &self.r
    }

    /// `Ṙ[i][j] = ṙ(2T - t_i - t_j)`.
    pub fn r_dot(&self) -> &DMatrix<Complex64> {
        &self.r_dot
    }

    /// `R·W`.
    pub fn rw(&self) -> &DMatrix<Complex64> {
        &self.rw
    }

    /// `Ṙ·W`.
    pub fn r_dot_w(&self) -> &DMatrix<Complex64> {
        &self.r_dot_w
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn derivative_samples(&self) -> &[Complex64] {
        &self.derivative_samples
    }

    /// `r(T - τ_j)` for every node `τ_j`.
    pub fn mid_kernel(&self) -> impl Iterator<Item = Complex64> + '_ {
        let n = self.grid.len();
        (0..n).map(move |j| self.samples[n - 1 - j])
    }

    /// The same pencil with every kernel sample multiplied by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        let scale = |v: &[Complex64]| v.iter().map(|&x| x * c).collect::<Vec<_>>();
        Self {
            grid: self.grid.clone(),
            origin: self.origin,
            samples: scale(&self.samples),
            derivative_samples: scale(&self.derivative_samples),
            r: &self.r * c,
            r_dot: &self.r_dot * c,
            rw: &self.rw * c,
            r_dot_w: &self.r_dot_w * c,
        }
    }
}

/// `(C^T f)(t_i) ≈ Σ_j w_j r(2T - t_i - τ_j) f(τ_j)`.
pub fn apply_connecting(pencil: &KernelPencil, f: &ControlVector) -> Result<ControlVector> {
    pencil.grid.check(f)?;
    Ok(pencil.rw() * f)
}

/// `Σ_i w_i a_i conj(b_i)`.
pub fn inner_product(a: &ControlVector, b: &ControlVector, grid: &Grid) -> Result<Complex64> {
    grid.check(a)?;
    grid.check(b)?;
    Ok(weighted_dot(a.as_slice(), b.as_slice(), grid.weights()))
}

pub(crate) fn weighted_dot(a: &[Complex64], b: &[Complex64], w: &[f64]) -> Complex64 {
    a.iter().zip(b).zip(w).map(|((&x, &y), &wi)| x * y.conj() * wi).sum()
}

pub(crate) fn weighted_norm(a: &[Complex64], w: &[f64]) -> f64 {
    a.iter().zip(w).map(|(x, &wi)| x.norm_sqr() * wi).sum::<f64>().sqrt()
}

/// Derivative of a control on the grid, same stencils as the kernel derivative.
pub fn differentiate(f: &ControlVector, grid: &Grid) -> Result<ControlVector> {
    grid.check(f)?;
    Ok(DVector::from_vec(finite_difference(f.as_slice(), grid.step())?))
}

/// Fourth-order differences throughout: five-point central in the interior,
/// five-point one-sided at the two nodes nearest each end.
pub fn finite_difference(values: &[Complex64], h: f64) -> Result<Vec<Complex64>> {
    let n = values.len();
    if n < 5 {
        return Err(Error::InvalidGrid(format!("at least 5 nodes required, got {n}")));
    }
    let f = values;
    let inv12h = 1.0 / (12.0 * h);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for j in 2..n - 2 {
        out[j] = (f[j - 2] - f[j - 1] * 8.0 + f[j + 1] * 8.0 - f[j + 2]) * inv12h;
    }
    out[0] = (f[0] * -25.0 + f[1] * 48.0 - f[2] * 36.0 + f[3] * 16.0 - f[4] * 3.0) * inv12h;
    out[1] = (f[0] * -3.0 - f[1] * 10.0 + f[2] * 18.0 - f[3] * 6.0 + f[4]) * inv12h;
    let e = n - 1;
    out[e] = (f[e] * 25.0 - f[e - 1] * 48.0 + f[e - 2] * 36.0 - f[e - 3] * 16.0 + f[e - 4] * 3.0) * inv12h;
    out[e - 1] = (f[e] * 3.0 + f[e - 1] * 10.0 - f[e - 2] * 18.0 + f[e - 3] * 6.0 - f[e - 4]) * inv12h;
    Ok(out)
}
