//! Two-channel boundary responses `{v(0,t), v(1,t)}` with a shared pole set.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{pole_order, ExpPolyModel, Mode, Pole, SignalTrace};
use crate::oracle::reconstruction_residual;
use crate::pencil::PencilConfig;
use crate::pipeline::{estimate, Derivative, Estimate, EstimateOptions, RecoveryPath};
use crate::recovery::recover_amplitudes_lsq;

/// Largest `Re λ · t` accepted when evaluating a model.
pub const GROWTH_LIMIT: f64 = 700.0;

/// Default relative amplitude below which a channel is treated as silent.
pub const GENERIC_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoChannelResponse {
    channel0: SignalTrace,
    channel1: SignalTrace,
}

impl TwoChannelResponse {
    pub fn new(channel0: SignalTrace, channel1: SignalTrace) -> Result<Self> {
        if !channel0.same_grid(&channel1) {
            return Err(Error::GridMismatch("channels are sampled on different grids".into()));
        }
        Ok(Self { channel0, channel1 })
    }

    pub fn channel0(&self) -> &SignalTrace {
        &self.channel0
    }

    pub fn channel1(&self) -> &SignalTrace {
        &self.channel1
    }

    pub fn channel(&self, k: usize) -> &SignalTrace {
        if k == 0 {
            &self.channel0
        } else {
            &self.channel1
        }
    }
}

/// Two exponential-polynomial channels over one pole set.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoChannelModel {
    channel0: ExpPolyModel,
    channel1: ExpPolyModel,
}

impl TwoChannelModel {
    /// Both channels must list the same poles with the same multiplicities.
    pub fn new(channel0: ExpPolyModel, channel1: ExpPolyModel) -> Result<Self> {
        if channel0.poles() != channel1.poles() {
            return Err(Error::InvalidModel("channels do not share one pole set".into()));
        }
        Ok(Self { channel0, channel1 })
    }

    /// Builds both channels from per-pole coefficient lists.
    pub fn from_coeffs(
        poles: &[Pole],
        coeffs0: Vec<Vec<Complex64>>,
        coeffs1: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if coeffs0.len() != poles.len() || coeffs1.len() != poles.len() {
            return Err(Error::Shape { expected: poles.len(), actual: coeffs0.len().min(coeffs1.len()) });
        }
        let build = |coeffs: Vec<Vec<Complex64>>| -> Result<ExpPolyModel> {
            let modes = poles
                .iter()
                .zip(coeffs)
                .map(|(p, c)| {
                    if c.len() != p.multiplicity {
                        return Err(Error::InvalidModel(format!(
                            "pole {} has multiplicity {} but {} coefficients",
                            p.lambda,
                            p.multiplicity,
                            c.len()
                        )));
                    }
                    Mode::new(p.lambda, c)
                })
                .collect::<Result<Vec<_>>>()?;
            ExpPolyModel::new(modes)
        };
        Self::new(build(coeffs0)?, build(coeffs1)?)
    }

    pub fn poles(&self) -> Vec<Pole> {
        self.channel0.poles()
    }

    pub fn channel0(&self) -> &ExpPolyModel {
        &self.channel0
    }

    pub fn channel1(&self) -> &ExpPolyModel {
        &self.channel1
    }

    pub fn channel(&self, k: usize) -> &ExpPolyModel {
        if k == 0 {
            &self.channel0
        } else {
            &self.channel1
        }
    }

    /// Copy with every coefficient of the mode at `lambda` set to zero in both
    /// channels.
    pub fn without_mode(&self, lambda: Complex64) -> Self {
        let zero = |m: &ExpPolyModel| {
            let modes = m
                .modes()
                .iter()
                .map(|md| {
                    if md.lambda() == lambda {
                        Mode::new(md.lambda(), vec![Complex64::new(0.0, 0.0); md.multiplicity()])
                            .expect("same shape")
                    } else {
                        md.clone()
                    }
                })
                .collect();
            ExpPolyModel::new(modes).expect("same poles")
        };
        Self { channel0: zero(&self.channel0), channel1: zero(&self.channel1) }
    }

    pub fn synthesize(&self, t0: f64, step: f64, n: usize) -> Result<TwoChannelResponse> {
        TwoChannelResponse::new(
            self.channel0.synthesize(t0, step, n)?,
            self.channel1.synthesize(t0, step, n)?,
        )
    }
}

#[derive(Debug, Clone)]
pub struct TwoChannelOptions {
    pub pencil: PencilConfig,
    /// Known model supplying an analytic kernel derivative for the channel the
    /// poles are estimated from; finite differences otherwise.
    pub analytic: Option<TwoChannelModel>,
    pub threshold: f64,
}

impl Default for TwoChannelOptions {
    fn default() -> Self {
        Self { pencil: PencilConfig::default(), analytic: None, threshold: GENERIC_THRESHOLD }
    }
}

#[derive(Debug, Clone)]
pub struct TwoChannelEstimate {
    pub model: TwoChannelModel,
    /// Channel whose pencil supplied the poles.
    pub pole_channel: usize,
    pub estimate: Estimate,
    /// Reconstruction residual per channel.
    pub residuals: [f64; 2],
}

/// Poles from channel 0 (channel 1 if channel 0 is identically zero),
/// amplitudes for both channels by least squares on the shared poles.
pub fn estimate_two_channel(
    resp: &TwoChannelResponse,
    opts: &TwoChannelOptions,
) -> Result<TwoChannelEstimate> {
    let pole_channel = if resp.channel0.norm() > 0.0 { 0 } else { 1 };
    let derivative = match &opts.analytic {
        Some(m) => Derivative::Analytic(m.channel(pole_channel).clone()),
        None => Derivative::FiniteDifference,
    };
    let est_opts = EstimateOptions { pencil: opts.pencil, derivative, recovery: RecoveryPath::Spectral };
    let est = estimate(resp.channel(pole_channel), &est_opts)?;
    let poles = est.model.poles();
    let fit = |k: usize| -> Result<ExpPolyModel> {
        let tr = resp.channel(k);
        if tr.norm() == 0.0 {
            let modes = poles
                .iter()
                .map(|p| Mode::new(p.lambda, vec![Complex64::new(0.0, 0.0); p.multiplicity]))
                .collect::<Result<Vec<_>>>()?;
            return ExpPolyModel::new(modes);
        }
        Ok(silence_small(&recover_amplitudes_lsq(&poles, tr)?, opts.threshold))
    };
    let channel0 = fit(0)?;
    let channel1 = fit(1)?;
    let residuals = [
        reconstruction_residual(&channel0, &resp.channel0),
        reconstruction_residual(&channel1, &resp.channel1),
    ];
    Ok(TwoChannelEstimate {
        model: TwoChannelModel::new(channel0, channel1)?,
        pole_channel,
        estimate: est,
        residuals,
    })
}

fn silence_small(model: &ExpPolyModel, threshold: f64) -> ExpPolyModel {
    let largest = largest_coeff(std::slice::from_ref(model));
    let modes = model
        .modes()
        .iter()
        .map(|m| {
            let peak = m.coeffs.as_slice().iter().map(|a| a.norm()).fold(0.0, f64::max);
            if peak <= threshold * largest {
                Mode::new(m.lambda(), vec![Complex64::new(0.0, 0.0); m.multiplicity()]).expect("same shape")
            } else {
                m.clone()
            }
        })
        .collect();
    ExpPolyModel::new(modes).expect("same poles")
}

fn largest_coeff(models: &[ExpPolyModel]) -> f64 {
    models
        .iter()
        .flat_map(|m| m.modes().iter().flat_map(|md| md.coeffs.as_slice().iter().map(|a| a.norm())))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericityReport {
    pub generic: bool,
    /// Poles whose leading coefficient is negligible in both channels.
    pub failing: Vec<Complex64>,
}

/// True iff every mode has, in some channel, a leading coefficient `a^L`
/// above `threshold` times the largest coefficient modulus of the model.
pub fn is_generic(model: &TwoChannelModel, threshold: f64) -> GenericityReport {
    let largest = largest_coeff(&[model.channel0.clone(), model.channel1.clone()]);
    let mut failing = Vec::new();
    for (m0, m1) in model.channel0.modes().iter().zip(model.channel1.modes()) {
        let lead = |m: &Mode| m.coeffs.as_slice().last().map(|a| a.norm()).unwrap_or(0.0);
        if !(lead(m0) > threshold * largest || lead(m1) > threshold * largest) {
            failing.push(m0.lambda());
        }
    }
    failing.sort_by(|a, b| pole_order(*a, *b));
    GenericityReport { generic: failing.is_empty(), failing }
}

fn extension_grid(t_from: f64, t_to: f64, h: f64) -> Result<usize> {
    if !(t_from.is_finite() && t_to.is_finite() && t_to > t_from) {
        return Err(Error::InvalidGrid(format!("need finite t_from < t_to, got {t_from}, {t_to}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidGrid(format!("step must be positive, got {h}")));
    }
    let steps = ((t_to - t_from) / h * (1.0 + 1e-12)).floor() as usize;
    Ok(steps + 1)
}

fn check_growth(model: &ExpPolyModel, t_from: f64, t_to: f64) -> Result<()> {
    for m in model.modes() {
        let re = m.lambda().re;
        let worst = (re * t_from).max(re * t_to);
        if worst > GROWTH_LIMIT {
            return Err(Error::Range(format!(
                "pole {} grows to e^{worst:.1} on [{t_from}, {t_to}]",
                m.lambda()
            )));
        }
    }
    Ok(())
}

/// One channel of [`extend_response`].
pub fn extend_model(model: &ExpPolyModel, t_from: f64, t_to: f64, h: f64) -> Result<SignalTrace> {
    let n = extension_grid(t_from, t_to, h)?;
    check_growth(model, t_from, t_to)?;
    model.synthesize(t_from, h, n)
}

/// Evaluates both channels on `t_from, t_from + h, …` up to `t_to`.
pub fn extend_response(
    model: &TwoChannelModel,
    t_from: f64,
    t_to: f64,
    h: f64,
) -> Result<TwoChannelResponse> {
    TwoChannelResponse::new(
        extend_model(&model.channel0, t_from, t_to, h)?,
        extend_model(&model.channel1, t_from, t_to, h)?,
    )
}
