//! End-to-end estimation of a single trace.

use num_complex::Complex64;

use crate::discretization::{build_pencil, DerivativeMode};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::model::{ExpPolyModel, SignalTrace};
use crate::oracle::reconstruction_residual;
use crate::pencil::{match_clusters, solve_adjoint, solve_forward, Diagnostic, PencilConfig};
use crate::recovery::{recover_amplitudes_lsq, recover_coefficients, Unrecovered};

#[derive(Debug, Clone, Default)]
pub enum Derivative {
    /// Kernel derivative sampled from a known model.
    Analytic(ExpPolyModel),
    #[default]
    FiniteDifference,
}

impl Derivative {
    pub fn mode(&self) -> DerivativeMode<'_> {
        match self {
            Derivative::Analytic(m) => DerivativeMode::Analytic(m),
            Derivative::FiniteDifference => DerivativeMode::FiniteDifference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecoveryPath {
    #[default]
    Spectral,
    Lsq,
    Both,
}

#[derive(Debug, Clone, Default)]
pub struct EstimateOptions {
    pub pencil: PencilConfig,
    pub derivative: Derivative,
    pub recovery: RecoveryPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSummary {
    pub lambda: Complex64,
    pub multiplicity: usize,
    /// Largest forward chain residual.
    pub residual: f64,
    /// Largest adjoint chain residual.
    pub adjoint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    /// Spectral-path model, or the least-squares model for [`RecoveryPath::Lsq`].
    pub model: ExpPolyModel,
    /// Least-squares model on the recovered poles, for [`RecoveryPath::Both`].
    pub lsq: Option<ExpPolyModel>,
    pub clusters: Vec<ClusterSummary>,
    /// Reconstruction residual of `model` on the input trace.
    pub residual: f64,
    pub unrecovered: Vec<Unrecovered>,
    pub diagnostics: Vec<Diagnostic>,
    /// Retained rank of `R·W`.
    pub rank: usize,
}

pub fn estimate(trace: &SignalTrace, opts: &EstimateOptions) -> Result<Estimate> {
    let cfg = &opts.pencil;
    let pencil = build_pencil(trace, opts.derivative.mode())?;
    let forward = solve_forward(&pencil, cfg)?;
    let adjoint = solve_adjoint(&pencil, cfg)?;
    let matched = match_clusters(&forward.clusters, &adjoint.clusters, &pencil, cfg);
    let mut diagnostics = forward.diagnostics.clone();
    diagnostics.extend(adjoint.diagnostics.iter().cloned());
    diagnostics.extend(matched.diagnostics);
    if matched.clusters.is_empty() {
        return Err(Error::NoClusters);
    }
    let clusters = matched
        .clusters
        .iter()
        .map(|c| ClusterSummary {
            lambda: c.lambda,
            multiplicity: c.multiplicity,
            residual: c.residuals.iter().copied().fold(0.0, f64::max),
            adjoint_residual: c.adjoint_residuals.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    let spectral = match opts.recovery {
        RecoveryPath::Lsq => None,
        _ => Some(recover_coefficients(&matched.clusters, &pencil, &forward.reduced)?),
    };
    let poles = match &spectral {
        Some(p) => p.model.poles(),
        None => matched
            .clusters
            .iter()
            .map(|c| crate::model::Pole { lambda: c.lambda, multiplicity: c.multiplicity })
            .collect(),
    };
    let lsq = match opts.recovery {
        RecoveryPath::Spectral => None,
        _ => Some(recover_amplitudes_lsq(&poles, trace)?),
    };
    let (model, lsq, unrecovered) = match (spectral, lsq) {
        (Some(p), lsq) => (p.model, lsq, p.unrecovered),
        (None, Some(l)) => (l, None, Vec::new()),
        (None, None) => unreachable!("at least one recovery path runs"),
    };
    let residual = reconstruction_residual(&model, trace);
    Ok(Estimate {
        model,
        lsq,
        clusters,
        residual,
        unrecovered,
        diagnostics,
        rank: forward.reduced.rank(),
    })
}

/// Independent estimates of many traces, in input order.
pub fn estimate_batch(
    traces: &[SignalTrace],
    opts: &EstimateOptions,
    exec: Execution,
) -> Vec<Result<Estimate>> {
    map_slice(traces, exec, |t| estimate(t, opts))
}
