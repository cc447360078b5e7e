//! Amplitude coefficients from matched Jordan chains.
//!
//! With chains normalized so that `⟨C^T f̃^i, g̃^i⟩ = 1`,
//!
//! ```text
//! a^1     = Σ_i b̃^i d̃^i
//! a^{l+1} = Σ_{i ≥ l} b̂^i d̂^{i-l}
//! ```
//!
//! where `b(g) = ∫ r(T−τ) conj(g(τ)) dτ`, `d(f) = ∫ r(T−τ) f(τ) dτ`, and the
//! hat quantities use `S^l f̃`, with `S` the pencil surrogate of `∂ − λ`.
//! Indices above are 0-based chain positions.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::discretization::{weighted_dot, weighted_norm, ControlVector, KernelPencil};
use crate::error::{Error, Result};
use crate::model::{poles_coincide, ExpPolyModel, Mode, Pole, SignalTrace, POLE_MERGE_TOL};
use crate::pencil::{JordanCluster, ReducedPencil};

/// Relative size below which a chain pairing is treated as zero.
pub const PAIRING_TOL: f64 = 1e-12;

/// Condition number above which the least-squares design is rejected.
pub const LSQ_COND_LIMIT: f64 = 1e12;

/// `b` and `d` projections of one cluster at one normalization level.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCoeffs {
    pub level: usize,
    pub b: Vec<Complex64>,
    pub d: Vec<Complex64>,
}

impl ProjectionCoeffs {
    /// `Σ_{i ≥ level} b^i d^{i-level}`, the coefficient `a^{level+1}`.
    pub fn coefficient(&self) -> Complex64 {
        (self.level..self.b.len()).map(|i| self.b[i] * self.d[i - self.level]).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }
}

/// A coefficient that could not be computed because a pairing vanished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unrecovered {
    pub lambda: Complex64,
    /// 1-based coefficient index `l` of `a^l`.
    pub coefficient: usize,
    pub chain_index: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub model: ExpPolyModel,
    /// Unrecovered coefficients are emitted as zero and listed here.
    pub unrecovered: Vec<Unrecovered>,
}

fn check_chains(cluster: &JordanCluster) -> Result<()> {
    let m = cluster.chain.len();
    if m == 0 || cluster.adjoint_chain.len() != m {
        return Err(Error::Shape { expected: m.max(1), actual: cluster.adjoint_chain.len() });
    }
    Ok(())
}

fn normalize_one(
    pencil: &KernelPencil,
    f: &ControlVector,
    g: &ControlVector,
    index: usize,
) -> Result<ControlVector> {
    let w = pencil.grid().weights();
    let cf = pencil.rw() * f;
    let p = weighted_dot(cf.as_slice(), g.as_slice(), w);
    let scale = weighted_norm(cf.as_slice(), w) * weighted_norm(g.as_slice(), w);
    if !(p.norm() > PAIRING_TOL * scale) {
        return Err(Error::DegeneratePairing { index, magnitude: p.norm() });
    }
    Ok(f / p)
}

/// Rescales each forward vector so that `⟨C^T f̃^i, g^i⟩ = 1`; the adjoint
/// chain is left unchanged.
pub fn normalize_level0(cluster: &JordanCluster, pencil: &KernelPencil) -> Result<JordanCluster> {
    check_chains(cluster)?;
    let chain = cluster
        .chain
        .iter()
        .zip(&cluster.adjoint_chain)
        .enumerate()
        .map(|(i, (f, g))| normalize_one(pencil, f, g, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(JordanCluster { chain, ..cluster.clone() })
}

/// `d(f) = Σ_j w_j r(T − τ_j) f_j`.
pub fn project_d(pencil: &KernelPencil, f: &ControlVector) -> Complex64 {
    pencil
        .mid_kernel()
        .zip(f.iter())
        .zip(pencil.grid().weights())
        .map(|((k, &fj), &w)| k * fj * w)
        .sum()
}

/// `b(g) = Σ_j w_j r(T − τ_j) conj(g_j)`.
pub fn project_b(pencil: &KernelPencil, g: &ControlVector) -> Complex64 {
    let kernel: Vec<Complex64> = pencil.mid_kernel().collect();
    weighted_dot(&kernel, g.as_slice(), pencil.grid().weights())
}

/// Projections at `level` for a cluster already passed through
/// [`normalize_level0`]. `d^j` is `d(S^level f̃^{j+level})`, zero past the end
/// of the chain. Empty when `level` reaches the multiplicity.
pub fn project_b_d(
    cluster: &JordanCluster,
    pencil: &KernelPencil,
    reduced: &ReducedPencil,
    level: usize,
) -> Result<ProjectionCoeffs> {
    check_chains(cluster)?;
    let m = cluster.chain.len();
    if level >= m {
        return Ok(ProjectionCoeffs { level, b: Vec::new(), d: Vec::new() });
    }
    let b = cluster.adjoint_chain.iter().map(|g| project_b(pencil, g)).collect();
    let mut d = vec![Complex64::new(0.0, 0.0); m];
    for (j, dj) in d.iter_mut().enumerate().take(m - level) {
        let mut f = cluster.chain[j + level].clone();
        for _ in 0..level {
            f = reduced.shift(&f, cluster.lambda);
        }
        *dj = project_d(pencil, &f);
    }
    Ok(ProjectionCoeffs { level, b, d })
}

/// Assembles the model from matched clusters of `pencil`.
///
/// `reduced` is the forward reduction of the same pencil. Coefficients are
/// computed in the pencil's local time and shifted back to trace time.
pub fn recover_coefficients(
    clusters: &[JordanCluster],
    pencil: &KernelPencil,
    reduced: &ReducedPencil,
) -> Result<Recovery> {
    let mut modes = Vec::with_capacity(clusters.len());
    let mut unrecovered = Vec::new();
    for cluster in clusters {
        check_chains(cluster)?;
        let m = cluster.chain.len();
        let mut normalized = Vec::with_capacity(m);
        let mut failures = Vec::new();
        for (i, (f, g)) in cluster.chain.iter().zip(&cluster.adjoint_chain).enumerate() {
            match normalize_one(pencil, f, g, i) {
                Ok(v) => normalized.push(v),
                Err(Error::DegeneratePairing { index, magnitude }) => {
                    failures.push((index, magnitude));
                    normalized.push(DVector::zeros(f.len()));
                }
                Err(e) => return Err(e),
            }
        }
        let scaled = JordanCluster { chain: normalized, ..cluster.clone() };
        let mut coeffs = Vec::with_capacity(m);
        for level in 0..m {
            // level `l` reads f̃^l..f̃^{m-1}
            if let Some(&(chain_index, magnitude)) = failures.iter().find(|(i, _)| *i >= level) {
                unrecovered.push(Unrecovered {
                    lambda: cluster.lambda,
                    coefficient: level + 1,
                    chain_index,
                    magnitude,
                });
                coeffs.push(Complex64::new(0.0, 0.0));
                continue;
            }
            coeffs.push(project_b_d(&scaled, pencil, reduced, level)?.coefficient());
        }
        modes.push(Mode::new(cluster.lambda, coeffs)?);
    }
    let local = ExpPolyModel::new(modes)?;
    Ok(Recovery { model: local.time_shift(-pencil.origin()), unrecovered })
}

fn design_column(lambda: Complex64, power: usize, times: &[f64]) -> DVector<Complex64> {
    let fact: f64 = (1..=power).map(|k| k as f64).product();
    DVector::from_iterator(
        times.len(),
        times.iter().map(|&t| (lambda * t).exp() * (t.powi(power as i32) / fact)),
    )
}

fn closest_pair(poles: &[Pole]) -> (String, String) {
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..poles.len() {
        for j in i + 1..poles.len() {
            let d = (poles[i].lambda - poles[j].lambda).norm();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    if poles.len() < 2 {
        let p = poles.first().map(|p| p.lambda.to_string()).unwrap_or_default();
        return (p.clone(), p);
    }
    (poles[best.1].lambda.to_string(), poles[best.2].lambda.to_string())
}

/// Least-squares amplitudes for known poles on the confluent design
/// `t^{i-1} e^{λt} / (i-1)!` at the trace's sample times.
pub fn recover_amplitudes_lsq(poles: &[Pole], trace: &SignalTrace) -> Result<ExpPolyModel> {
    if poles.is_empty() {
        return Err(Error::InvalidModel("no poles supplied".into()));
    }
    for (i, a) in poles.iter().enumerate() {
        for b in &poles[i + 1..] {
            if poles_coincide(a.lambda, b.lambda, POLE_MERGE_TOL) {
                return Err(Error::RankDeficient {
                    first: a.lambda.to_string(),
                    second: b.lambda.to_string(),
                });
            }
        }
    }
    let times: Vec<f64> = trace.times().collect();
    let mut columns = Vec::new();
    for p in poles {
        for power in 0..p.multiplicity {
            columns.push(design_column(p.lambda, power, &times));
        }
    }
    if columns.len() > times.len() {
        let (first, second) = closest_pair(poles);
        return Err(Error::RankDeficient { first, second });
    }
    let scales: Vec<f64> = columns.iter().map(|c| c.norm()).collect();
    if scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Numerical("design column vanished or overflowed".into()));
    }
    for (c, &s) in columns.iter_mut().zip(&scales) {
        *c /= Complex64::new(s, 0.0);
    }
    let design = DMatrix::from_columns(&columns);
    let svd = SVD::try_new(design, true, true, crate::SVD_EPS, 0)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) || smax / smin > LSQ_COND_LIMIT {
        let (first, second) = closest_pair(poles);
        return Err(Error::RankDeficient { first, second });
    }
    let y = DVector::from_column_slice(trace.values());
    let x = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let mut k = 0;
    let mut modes = Vec::with_capacity(poles.len());
    for p in poles {
        let coeffs = (0..p.multiplicity)
            .map(|_| {
                let a = x[k] / scales[k];
                k += 1;
                a
            })
            .collect();
        modes.push(Mode::new(p.lambda, coeffs)?);
    }
    ExpPolyModel::new(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_pencil, DerivativeMode};
    use crate::pencil::{match_clusters, pairing, solve_adjoint, solve_forward, PencilConfig};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn r(x: f64) -> Complex64 {
        c(x, 0.0)
    }

    fn trace_of(model: &ExpPolyModel, t0: f64, n: usize) -> SignalTrace {
        model.synthesize(t0, 1.0 / (n - 1) as f64, 2 * n - 1).unwrap()
    }

    struct Solved {
        pencil: KernelPencil,
        reduced: ReducedPencil,
        clusters: Vec<JordanCluster>,
    }

    fn solve(model: &ExpPolyModel, trace: &SignalTrace) -> Solved {
        let pencil = build_pencil(trace, DerivativeMode::Analytic(model)).unwrap();
        let cfg = PencilConfig::default();
        let f = solve_forward(&pencil, &cfg).unwrap();
        let a = solve_adjoint(&pencil, &cfg).unwrap();
        let m = match_clusters(&f.clusters, &a.clusters, &pencil, &cfg);
        assert!(m.diagnostics.is_empty(), "{:?}", m.diagnostics);
        Solved { pencil, reduced: f.reduced, clusters: m.clusters }
    }

    fn recover(model: &ExpPolyModel, t0: f64, n: usize) -> ExpPolyModel {
        let tr = trace_of(model, t0, n);
        let s = solve(model, &tr);
        let rec = recover_coefficients(&s.clusters, &s.pencil, &s.reduced).unwrap();
        assert!(rec.unrecovered.is_empty());
        rec.model
    }

    fn assert_close(got: &ExpPolyModel, want: &ExpPolyModel, pole_tol: f64, coeff_tol: f64) {
        assert_eq!(got.len(), want.len(), "{got:?}");
        for (g, w) in got.modes().iter().zip(want.modes()) {
            assert!((g.lambda() - w.lambda()).norm() <= pole_tol, "{} vs {}", g.lambda(), w.lambda());
            assert_eq!(g.multiplicity(), w.multiplicity());
            let scale = w.coeffs.as_slice().iter().map(|a| a.norm()).fold(0.0, f64::max);
            for (a, b) in g.coeffs.as_slice().iter().zip(w.coeffs.as_slice()) {
                assert!((a - b).norm() <= coeff_tol * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn normalized_pairing_is_one() {
        let m = ExpPolyModel::single(c(0.3, 1.0), vec![r(1.0), c(0.5, -1.0)]).unwrap();
        let s = solve(&m, &trace_of(&m, 0.0, 101));
        let n = normalize_level0(&s.clusters[0], &s.pencil).unwrap();
        for (f, g) in n.chain.iter().zip(&n.adjoint_chain) {
            assert!((pairing(&s.pencil, f, g) - r(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_pair_is_degenerate() {
        let m = ExpPolyModel::single(r(2.0), vec![r(3.0)]).unwrap();
        let s = solve(&m, &trace_of(&m, 0.0, 41));
        let mut cl = s.clusters[0].clone();
        let f = &cl.chain[0];
        let cf = s.pencil.rw() * f;
        // weighted-orthogonal complement of C^T f
        let w = s.pencil.grid().weights();
        let mut g = DVector::from_element(f.len(), r(1.0));
        let proj = weighted_dot(g.as_slice(), cf.as_slice(), w) / weighted_dot(cf.as_slice(), cf.as_slice(), w);
        g -= &cf * proj;
        cl.adjoint_chain[0] = g;
        assert!(matches!(
            normalize_level0(&cl, &s.pencil),
            Err(Error::DegeneratePairing { index: 0, .. })
        ));
        let rec = recover_coefficients(&[cl], &s.pencil, &s.reduced).unwrap();
        assert_eq!(rec.unrecovered.len(), 1);
        assert_eq!(rec.unrecovered[0].coefficient, 1);
    }

    #[test]
    fn growing_exponential_amplitude() {
        let m = ExpPolyModel::single(r(2.0), vec![r(3.0)]).unwrap();
        let s = solve(&m, &trace_of(&m, 0.0, 41));
        let n = normalize_level0(&s.clusters[0], &s.pencil).unwrap();
        let p = project_b_d(&n, &s.pencil, &s.reduced, 0).unwrap();
        assert!((p.coefficient() - r(3.0)).norm() < 3e-8);
        assert_close(&recover(&m, 0.0, 41), &m, 1e-10, 1e-8);
    }

    #[test]
    fn constant_kernel_product_is_one() {
        let m = ExpPolyModel::single(r(0.0), vec![r(1.0)]).unwrap();
        let s = solve(&m, &trace_of(&m, 0.0, 41));
        let n = normalize_level0(&s.clusters[0], &s.pencil).unwrap();
        let p = project_b_d(&n, &s.pencil, &s.reduced, 0).unwrap();
        assert!((p.b[0] * p.d[0] - r(1.0)).norm() < 1e-10);
    }

    #[test]
    fn level_at_multiplicity_is_empty() {
        let m = ExpPolyModel::single(r(1.0), vec![r(1.0), r(2.0)]).unwrap();
        let s = solve(&m, &trace_of(&m, 0.0, 101));
        let n = normalize_level0(&s.clusters[0], &s.pencil).unwrap();
        assert!(project_b_d(&n, &s.pencil, &s.reduced, 2).unwrap().is_empty());
        assert_eq!(project_b_d(&n, &s.pencil, &s.reduced, 1).unwrap().b.len(), 2);
    }

    #[test]
    fn double_pole_coefficients() {
        let m = ExpPolyModel::single(r(1.0), vec![r(1.0), r(2.0)]).unwrap();
        assert_close(&recover(&m, 0.0, 201), &m, 1e-6, 1e-6);
    }

    #[test]
    fn two_simple_poles() {
        let m = ExpPolyModel::new(vec![
            Mode::new(r(-1.0), vec![r(1.0)]).unwrap(),
            Mode::new(r(3.0), vec![r(4.0)]).unwrap(),
        ])
        .unwrap();
        assert_close(&recover(&m, 0.0, 201), &m, 1e-8, 1e-8);
    }

    #[test]
    fn complex_triple_pole_with_offset_origin() {
        let m = ExpPolyModel::new(vec![
            Mode::new(c(-0.5, 1.0), vec![c(1.0, -0.5), c(0.5, 0.5), c(-1.0, 2.0)]).unwrap(),
            Mode::new(c(0.4, -3.0), vec![c(0.0, 1.5)]).unwrap(),
        ])
        .unwrap();
        assert_close(&recover(&m, 0.75, 201), &m, 1e-4, 1e-3);
    }

    #[test]
    fn trace_scaling_scales_coefficients() {
        let m = ExpPolyModel::new(vec![
            Mode::new(c(0.2, 1.5), vec![r(1.0), c(-0.5, 1.0)]).unwrap(),
            Mode::new(r(-1.0), vec![r(2.0)]).unwrap(),
        ])
        .unwrap();
        let k = c(2.0, -3.0);
        let base = recover(&m, 0.0, 201);
        let scaled = recover(&m.scaled(k), 0.0, 201);
        assert_close(&scaled, &base.scaled(k), 1e-10, 1e-9);
    }

    #[test]
    fn lsq_exact_fits() {
        let m = ExpPolyModel::single(r(-1.0), vec![r(2.0)]).unwrap();
        let got = recover_amplitudes_lsq(&m.poles(), &trace_of(&m, 0.0, 51)).unwrap();
        assert_close(&got, &m, 0.0, 1e-12);
        let m = ExpPolyModel::single(r(1.0), vec![r(1.0), r(2.0)]).unwrap();
        let got = recover_amplitudes_lsq(&m.poles(), &trace_of(&m, 0.0, 101)).unwrap();
        assert_close(&got, &m, 0.0, 1e-10);
    }

    #[test]
    fn lsq_duplicate_pole_rejected() {
        let m = ExpPolyModel::single(r(-1.0), vec![r(2.0)]).unwrap();
        let poles = [Pole::simple(r(-1.0)), Pole::simple(r(-1.0))];
        let err = recover_amplitudes_lsq(&poles, &trace_of(&m, 0.0, 51)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn lsq_nearly_dependent_columns_rejected() {
        let m = ExpPolyModel::single(r(-1.0), vec![r(2.0)]).unwrap();
        let poles: Vec<Pole> = (0..4).map(|k| Pole::simple(r(-1.0 + 1e-5 * k as f64))).collect();
        let err = recover_amplitudes_lsq(&poles, &trace_of(&m, 0.0, 51)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
    }

    fn arb_scale() -> impl Strategy<Value = Complex64> {
        (0.1f64..10.0, -3.2f64..3.2).prop_map(|(m, a)| Complex64::from_polar(m, a))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn products_invariant_under_chain_rescaling(
            fs in proptest::collection::vec(arb_scale(), 2),
            gs in proptest::collection::vec(arb_scale(), 2),
        ) {
            let m = ExpPolyModel::single(c(0.3, 2.0), vec![c(1.0, 1.0), c(-2.0, 0.5)]).unwrap();
            let s = solve(&m, &trace_of(&m, 0.0, 101));
            let base = &s.clusters[0];
            let mut cl = base.clone();
            for (v, k) in cl.chain.iter_mut().zip(&fs) { *v *= *k; }
            for (v, k) in cl.adjoint_chain.iter_mut().zip(&gs) { *v *= *k; }
            let a = normalize_level0(base, &s.pencil).unwrap();
            let b = normalize_level0(&cl, &s.pencil).unwrap();
            for level in 0..2 {
                let pa = project_b_d(&a, &s.pencil, &s.reduced, level).unwrap();
                let pb = project_b_d(&b, &s.pencil, &s.reduced, level).unwrap();
                for i in level..2 {
                    let x = pa.b[i] * pa.d[i - level];
                    let y = pb.b[i] * pb.d[i - level];
                    prop_assert!((x - y).norm() <= 1e-10 * x.norm().max(1e-300));
                }
            }
        }
    }
}
