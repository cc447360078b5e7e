//! Generalized eigenproblems of the kernel pencil.
//!
//! The forward problem is `(Ṙ·W) f = λ (R·W) f` and the adjoint problem is the
//! same with both matrices conjugated elementwise. `R·W` is numerically of low
//! rank for exponential-polynomial kernels, so the pencil is reduced to the
//! retained singular subspace before the eigensolve:
//!
//! ```text
//! R·W ≈ U Σ Vᴴ,   M = Σ⁻¹ Uᴴ (Ṙ·W) V,   f = V c
//! ```
//!
//! Eigenvalues of `M` are clustered; a cluster of `m` eigenvalues is taken as
//! a Jordan block of size `m` and a chain `(Ṙ·W − λR·W) f^i = R·W f^{i-1}` is
//! built from its best eigenvector.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use crate::discretization::{weighted_dot, ControlVector, KernelPencil};
use crate::error::{Error, Result};
use crate::model::{pole_order, POLE_MERGE_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilConfig {
    /// Singular values of `R·W` below `rank_tol·σ_max` are discarded.
    pub rank_tol: f64,
    /// Eigenvalues closer than `cluster_tol·(1 + |λ|)` form one cluster. A
    /// group of `m` eigenvalues is also accepted up to diameter
    /// `cluster_tol^{1/m}·(1 + |λ|)`, the splitting radius of a perturbed
    /// Jordan block.
    pub cluster_tol: f64,
    /// Relative pencil residual above which an eigenpair is spurious.
    pub residual_tol: f64,
    pub max_chain: usize,
    /// A retained rank above this fraction of the grid means the kernel has
    /// no usable low-rank structure; every candidate is then spurious.
    pub max_rank_fraction: f64,
}

impl Default for PencilConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-8,
            cluster_tol: POLE_MERGE_TOL,
            residual_tol: 1e-6,
            max_chain: 8,
            max_rank_fraction: 0.5,
        }
    }
}

impl PencilConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(positive(self.rank_tol) && self.rank_tol < 1.0) {
            return Err(Error::InvalidGrid(format!("rank_tol must lie in (0, 1), got {}", self.rank_tol)));
        }
        if !(positive(self.cluster_tol) && self.cluster_tol < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "cluster_tol must lie in (0, 1), got {}",
                self.cluster_tol
            )));
        }
        if !positive(self.residual_tol) {
            return Err(Error::InvalidGrid(format!(
                "residual_tol must be positive, got {}",
                self.residual_tol
            )));
        }
        if self.max_chain == 0 {
            return Err(Error::InvalidGrid("max_chain must be at least 1".into()));
        }
        if !(self.max_rank_fraction > 0.0 && self.max_rank_fraction <= 1.0) {
            return Err(Error::InvalidGrid("max_rank_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Merge radius for a group of `size` eigenvalues around `center`.
    pub fn merge_radius(&self, center: Complex64, size: usize) -> f64 {
        let size = size.max(1) as f64;
        self.cluster_tol.powf(1.0 / size) * (1.0 + center.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    RankSaturated { rank: usize, nodes: usize },
    Spurious { lambda: Complex64, residual: f64 },
    ChainTruncated { lambda: Complex64, requested: usize, built: usize },
    OneSided { lambda: Complex64 },
    MultiplicityMismatch { lambda: Complex64, forward: usize, adjoint: usize },
    SingularGram { lambda: Complex64 },
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::RankSaturated { rank, nodes } => {
                write!(f, "kernel rank {rank} saturates the {nodes}-node grid")
            }
            Diagnostic::Spurious { lambda, residual } => {
                write!(f, "spurious eigenvalue {lambda} (residual {residual:e})")
            }
            Diagnostic::ChainTruncated { lambda, requested, built } => {
                write!(f, "chain at {lambda} truncated from {requested} to {built}")
            }
            Diagnostic::OneSided { lambda } => write!(f, "defect: one-sided eigenvalue {lambda}"),
            Diagnostic::MultiplicityMismatch { lambda, forward, adjoint } => write!(
                f,
                "multiplicity disagreement at {lambda}: forward {forward}, adjoint {adjoint}"
            ),
            Diagnostic::SingularGram { lambda } => {
                write!(f, "chain pairing matrix singular at {lambda}")
            }
        }
    }
}

/// One recovered eigenvalue with its root vectors.
///
/// `chain[i]` satisfies `(Ṙ·W − λR·W) f^{i+1} = R·W f^i`. `adjoint_chain` is
/// ordered so that its last entry is the adjoint eigenvector and
/// `adjoint_chain[i]` pairs with `chain[i]`.
#[derive(Debug, Clone)]
pub struct JordanCluster {
    pub lambda: Complex64,
    pub multiplicity: usize,
    pub chain: Vec<ControlVector>,
    pub adjoint_chain: Vec<ControlVector>,
    pub residuals: Vec<f64>,
    pub adjoint_residuals: Vec<f64>,
}

/// Truncated-SVD reduction of one pencil `(D, R)`.
#[derive(Debug, Clone)]
pub struct ReducedPencil {
    d: DMatrix<Complex64>,
    r: DMatrix<Complex64>,
    u: DMatrix<Complex64>,
    sigma: Vec<f64>,
    v: DMatrix<Complex64>,
    operator: DMatrix<Complex64>,
    singular_values: Vec<f64>,
    d_norm: f64,
    r_norm: f64,
}

impl ReducedPencil {
    pub fn new(d: DMatrix<Complex64>, r: DMatrix<Complex64>, rank_tol: f64) -> Result<Self> {
        let svd = SVD::try_new(r.clone(), true, true, crate::SVD_EPS, 0)
            .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
        let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        let sigma_max = singular_values.first().copied().unwrap_or(0.0);
        if !(sigma_max > 0.0) || !sigma_max.is_finite() {
            return Err(Error::KernelZero);
        }
        let rank = singular_values.iter().take_while(|&&s| s > rank_tol * sigma_max).count();
        let u_full = svd.u.expect("requested");
        let v_t = svd.v_t.expect("requested");
        let u = u_full.columns(0, rank).into_owned();
        let v = v_t.rows(0, rank).adjoint();
        let sigma = singular_values[..rank].to_vec();
        let mut operator = u.adjoint() * &d * &v;
        for (i, mut row) in operator.row_iter_mut().enumerate() {
            row /= Complex64::new(sigma[i], 0.0);
        }
        let d_norm = d.norm();
        let r_norm = r.norm();
        Ok(Self { d, r, u, sigma, v, operator, singular_values, d_norm, r_norm })
    }

    pub fn forward(pencil: &KernelPencil, rank_tol: f64) -> Result<Self> {
        Self::new(pencil.r_dot_w().clone(), pencil.rw().clone(), rank_tol)
    }

    pub fn adjoint(pencil: &KernelPencil, rank_tol: f64) -> Result<Self> {
        Self::new(pencil.r_dot_w().map(|x| x.conj()), pencil.rw().map(|x| x.conj()), rank_tol)
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn nodes(&self) -> usize {
        self.r.nrows()
    }

    /// All singular values of `R·W`, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// The reduced operator `M`.
    pub fn operator(&self) -> &DMatrix<Complex64> {
        &self.operator
    }

    pub fn lift(&self, c: &DVector<Complex64>) -> ControlVector {
        &self.v * c
    }

    pub fn restrict(&self, f: &ControlVector) -> DVector<Complex64> {
        self.v.adjoint() * f
    }

    /// Pencil surrogate of `(∂ − λ)`: `V Σ⁻¹ Uᴴ (D − λR) f`, so that a chain
    /// vector `f^i` maps to `f^{i-1}`.
    pub fn shift(&self, f: &ControlVector, lambda: Complex64) -> ControlVector {
        let g = &self.d * f - (&self.r * f) * lambda;
        let mut c = self.u.adjoint() * g;
        for (ci, &s) in c.iter_mut().zip(&self.sigma) {
            *ci /= s;
        }
        &self.v * c
    }

    /// `‖(D − λR) f‖ / ((‖D‖ + |λ|‖R‖) ‖f‖)`, with the denominator floored at
    /// `ε‖R‖‖f‖` so that `D = 0, λ = 0` (a constant kernel) scores zero.
    pub fn eigen_residual(&self, lambda: Complex64, f: &ControlVector) -> f64 {
        let res = &self.d * f - (&self.r * f) * lambda;
        let scale = (self.d_norm + lambda.norm() * self.r_norm).max(f64::EPSILON * self.r_norm) * f.norm();
        if scale == 0.0 {
            return f64::INFINITY;
        }
        res.norm() / scale
    }

    /// `‖(D − λR) f − R g‖ / ((‖D‖ + |λ|‖R‖) ‖f‖ + ‖R‖ ‖g‖)` for a chain step
    /// from `g = f^{i-1}` to `f = f^i`.
    pub fn chain_residual(&self, lambda: Complex64, f: &ControlVector, prev: &ControlVector) -> f64 {
        let res = &self.d * f - (&self.r * f) * lambda - &self.r * prev;
        let scale = (self.d_norm + lambda.norm() * self.r_norm) * f.norm() + self.r_norm * prev.norm();
        if scale == 0.0 {
            return f64::INFINITY;
        }
        res.norm() / scale
    }

    fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let rho = self.rank();
        if rho == 0 {
            return Ok(Vec::new());
        }
        let schur = Schur::try_new(self.operator.clone(), f64::EPSILON, 10_000 * rho.max(10))
            .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
        let (_, t) = schur.unpack();
        let mut values: Vec<Complex64> = (0..rho).map(|i| t[(i, i)]).collect();
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue".into()));
        }
        values.sort_by(|a, b| pole_order(*a, *b));
        Ok(values)
    }
}

/// Right singular vector of `M − μI` with the smallest singular value.
fn null_vector(m: &DMatrix<Complex64>, mu: Complex64) -> Result<DVector<Complex64>> {
    let n = m.nrows();
    let shifted = m - DMatrix::<Complex64>::identity(n, n) * mu;
    let svd = SVD::try_new(shifted, false, true, crate::SVD_EPS, 0)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let v_t = svd.v_t.expect("requested");
    Ok(v_t.row(n - 1).adjoint())
}

/// Pseudo-inverse of `M − λI` with its smallest singular direction dropped.
fn chain_solver(m: &DMatrix<Complex64>, lambda: Complex64) -> Result<DMatrix<Complex64>> {
    let n = m.nrows();
    let shifted = m - DMatrix::<Complex64>::identity(n, n) * lambda;
    let svd = SVD::try_new(shifted, true, true, crate::SVD_EPS, 0)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut pinv = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n.saturating_sub(1) {
        let s = svd.singular_values[k];
        if s <= 0.0 {
            continue;
        }
        pinv += (v_t.row(k).adjoint() * u.column(k).adjoint()) / Complex64::new(s, 0.0);
    }
    Ok(pinv)
}

/// Groups sorted eigenvalues; returns member indices per group.
pub fn cluster_eigenvalues(values: &[Complex64], cfg: &PencilConfig) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (0..values.len()).map(|i| vec![i]).collect();
    let centroid =
        |g: &[usize]| g.iter().map(|&i| values[i]).sum::<Complex64>() / g.len() as f64;
    let diameter = |g: &[usize]| {
        let mut d: f64 = 0.0;
        for (k, &i) in g.iter().enumerate() {
            for &j in &g[k + 1..] {
                d = d.max((values[i] - values[j]).norm());
            }
        }
        d
    };
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let dist = (centroid(&groups[a]) - centroid(&groups[b])).norm();
                if best.is_none_or(|(d, _, _)| dist < d) {
                    let mut merged = groups[a].clone();
                    merged.extend(&groups[b]);
                    let radius = cfg.merge_radius(centroid(&merged), merged.len());
                    let direct = dist <= cfg.cluster_tol * (1.0 + centroid(&merged).norm());
                    if direct || diameter(&merged) <= radius {
                        best = Some((dist, a, b));
                    }
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let moved = groups.remove(b);
        groups[a].extend(moved);
        groups[a].sort_unstable();
    }
    groups.sort_by(|a, b| pole_order(centroid(a), centroid(b)));
    groups
}

/// Output of one pencil solve.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub clusters: Vec<JordanCluster>,
    pub eigenvalues: Vec<Complex64>,
    pub reduced: ReducedPencil,
    pub diagnostics: Vec<Diagnostic>,
}

struct RawCluster {
    lambda: Complex64,
    chain: Vec<ControlVector>,
    residuals: Vec<f64>,
}

fn solve_reduced(reduced: &ReducedPencil, cfg: &PencilConfig) -> Result<(Vec<RawCluster>, Vec<Complex64>, Vec<Diagnostic>)> {
    let mut diagnostics = Vec::new();
    let n = reduced.nodes();
    let rho = reduced.rank();
    if rho == 0 {
        return Err(Error::KernelZero);
    }
    let eigenvalues = reduced.eigenvalues()?;
    if rho as f64 > cfg.max_rank_fraction * n as f64 {
        diagnostics.push(Diagnostic::RankSaturated { rank: rho, nodes: n });
        return Ok((Vec::new(), eigenvalues, diagnostics));
    }
    let m = reduced.operator();
    let mut clusters = Vec::new();
    for group in cluster_eigenvalues(&eigenvalues, cfg) {
        let lambda = group.iter().map(|&i| eigenvalues[i]).sum::<Complex64>() / group.len() as f64;
        let mut best: Option<(f64, DVector<Complex64>)> = None;
        let candidates = group.iter().map(|&i| eigenvalues[i]).chain(std::iter::once(lambda));
        for mu in candidates {
            let c = null_vector(m, mu)?;
            let res = reduced.eigen_residual(lambda, &reduced.lift(&c));
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                best = Some((res, c));
            }
        }
        let (seed_res, seed) = best.expect("group is non-empty");
        if !(seed_res <= cfg.residual_tol) {
            diagnostics.push(Diagnostic::Spurious { lambda, residual: seed_res });
            continue;
        }
        let requested = group.len().min(cfg.max_chain);
        let mut coords = vec![seed];
        let mut chain = vec![reduced.lift(&coords[0])];
        let mut residuals = vec![seed_res];
        if requested > 1 {
            let solver = chain_solver(m, lambda)?;
            while chain.len() < requested {
                let next = &solver * coords.last().expect("non-empty");
                let f = reduced.lift(&next);
                let prev = chain.last().expect("non-empty");
                let res = reduced.chain_residual(lambda, &f, prev);
                if !(res <= cfg.residual_tol) || !independent(&chain, &f, cfg.rank_tol) {
                    break;
                }
                coords.push(next);
                chain.push(f);
                residuals.push(res);
            }
        }
        if chain.len() < group.len() {
            diagnostics.push(Diagnostic::ChainTruncated {
                lambda,
                requested: group.len(),
                built: chain.len(),
            });
        }
        clusters.push(RawCluster { lambda, chain, residuals });
    }
    Ok((clusters, eigenvalues, diagnostics))
}

/// Smallest singular value of the column-normalized stack `[chain, f]`.
fn independent(chain: &[ControlVector], f: &ControlVector, tol: f64) -> bool {
    let cols: Vec<ControlVector> = chain
        .iter()
        .chain(std::iter::once(f))
        .map(|v| {
            let nrm = v.norm();
            if nrm > 0.0 {
                v / Complex64::new(nrm, 0.0)
            } else {
                v.clone()
            }
        })
        .collect();
    let stack = DMatrix::from_columns(&cols);
    let sv = stack.singular_values();
    sv.iter().copied().fold(f64::INFINITY, f64::min) > tol
}

/// Forward problem `(Ṙ·W) f = λ (R·W) f`.
pub fn solve_forward(pencil: &KernelPencil, cfg: &PencilConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let reduced = ReducedPencil::forward(pencil, cfg.rank_tol)?;
    let (raw, eigenvalues, diagnostics) = solve_reduced(&reduced, cfg)?;
    let clusters = raw
        .into_iter()
        .map(|c| JordanCluster {
            lambda: c.lambda,
            multiplicity: c.chain.len(),
            chain: c.chain,
            adjoint_chain: Vec::new(),
            residuals: c.residuals,
            adjoint_residuals: Vec::new(),
        })
        .collect();
    Ok(Spectrum { clusters, eigenvalues, reduced, diagnostics })
}

/// Adjoint problem on the conjugated pencil. Eigenvalues come out as `λ̄`;
/// each adjoint chain is reversed so the eigenvector is last.
pub fn solve_adjoint(pencil: &KernelPencil, cfg: &PencilConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let reduced = ReducedPencil::adjoint(pencil, cfg.rank_tol)?;
    let (raw, eigenvalues, diagnostics) = solve_reduced(&reduced, cfg)?;
    let clusters = raw
        .into_iter()
        .map(|c| {
            let mut chain = c.chain;
            let mut residuals = c.residuals;
            chain.reverse();
            residuals.reverse();
            JordanCluster {
                lambda: c.lambda,
                multiplicity: chain.len(),
                chain: Vec::new(),
                adjoint_chain: chain,
                residuals: Vec::new(),
                adjoint_residuals: residuals,
            }
        })
        .collect();
    Ok(Spectrum { clusters, eigenvalues, reduced, diagnostics })
}

#[derive(Debug, Clone)]
pub struct Matching {
    pub clusters: Vec<JordanCluster>,
    pub diagnostics: Vec<Diagnostic>,
}

/// `⟨C^T f, g⟩` under the trapezoid form.
pub fn pairing(pencil: &KernelPencil, f: &ControlVector, g: &ControlVector) -> Complex64 {
    let cf = pencil.rw() * f;
    weighted_dot(cf.as_slice(), g.as_slice(), pencil.grid().weights())
}

/// Pairs each forward cluster at `λ` with the adjoint cluster at `λ̄`.
///
/// The adjoint chain of a matched cluster is recombined within itself so that
/// `⟨C^T f^j, g^i⟩ = 0` for `i ≠ j`; the diagonal pairings are left as found.
pub fn match_clusters(
    forward: &[JordanCluster],
    adjoint: &[JordanCluster],
    pencil: &KernelPencil,
    cfg: &PencilConfig,
) -> Matching {
    let mut used = vec![false; adjoint.len()];
    let mut clusters = Vec::new();
    let mut diagnostics = Vec::new();
    for fc in forward {
        let mut best: Option<(f64, usize)> = None;
        for (k, ac) in adjoint.iter().enumerate() {
            if used[k] {
                continue;
            }
            let dist = (fc.lambda - ac.lambda.conj()).norm();
            let size = fc.multiplicity.max(ac.multiplicity);
            if dist <= cfg.merge_radius(fc.lambda, size).max(cfg.cluster_tol * (1.0 + fc.lambda.norm()))
                && best.is_none_or(|(d, _)| dist < d)
            {
                best = Some((dist, k));
            }
        }
        let Some((_, k)) = best else {
            diagnostics.push(Diagnostic::OneSided { lambda: fc.lambda });
            continue;
        };
        used[k] = true;
        let ac = &adjoint[k];
        let m = fc.multiplicity.min(ac.multiplicity);
        if fc.multiplicity != ac.multiplicity {
            diagnostics.push(Diagnostic::MultiplicityMismatch {
                lambda: fc.lambda,
                forward: fc.multiplicity,
                adjoint: ac.multiplicity,
            });
        }
        let chain = fc.chain[..m].to_vec();
        let skip = ac.multiplicity - m;
        let adjoint_chain = ac.adjoint_chain[skip..].to_vec();
        let adjoint_chain = match biorthogonalize(pencil, &chain, &adjoint_chain) {
            Some(g) => g,
            None => {
                diagnostics.push(Diagnostic::SingularGram { lambda: fc.lambda });
                adjoint_chain
            }
        };
        clusters.push(JordanCluster {
            lambda: fc.lambda,
            multiplicity: m,
            chain,
            adjoint_chain,
            residuals: fc.residuals[..m].to_vec(),
            adjoint_residuals: ac.adjoint_residuals[skip..].to_vec(),
        });
    }
    for (k, ac) in adjoint.iter().enumerate() {
        if !used[k] {
            diagnostics.push(Diagnostic::OneSided { lambda: ac.lambda.conj() });
        }
    }
    Matching { clusters, diagnostics }
}

fn biorthogonalize(
    pencil: &KernelPencil,
    chain: &[ControlVector],
    adjoint: &[ControlVector],
) -> Option<Vec<ControlVector>> {
    let m = chain.len();
    if m == 1 {
        return Some(adjoint.to_vec());
    }
    // gram[(i, j)] = ⟨C^T f^j, g^i⟩
    let gram = DMatrix::from_fn(m, m, |i, j| pairing(pencil, &chain[j], &adjoint[i]));
    let inv = gram.clone().try_inverse()?;
    let diag = DMatrix::from_diagonal(&gram.diagonal());
    // ⟨C^T f, Σ_k x_ik g^k⟩ = Σ_k conj(x_ik) gram[(k, j)]; choose conj(X) = diag · gram⁻¹
    let mix = (diag * inv).map(|x| x.conj());
    if mix.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return None;
    }
    Some(
        (0..m)
            .map(|i| {
                let mut g = DVector::zeros(adjoint[0].len());
                for (k, gk) in adjoint.iter().enumerate() {
                    g += gk * mix[(i, k)];
                }
                g
            })
            .collect(),
    )
}
