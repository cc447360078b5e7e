//! Model files (JSON) and trace files (CSV).
//!
//! A model file is `{"modes": [{"pole": [re, im], "multiplicity": L,
//! "coeffs": [[re, im], ...], "channel": "v0"}]}`; `channel` is present only in
//! two-channel files. A trace file has the header `t,re,im`, or
//! `channel,t,re,im` with rows tagged `v0`/`v1` for two channels.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuation::{TwoChannelModel, TwoChannelResponse};
use crate::error::{Error, Result};
use crate::model::{ExpPolyModel, Mode, Pole, SignalTrace};

/// Relative tolerance on sample-time spacing, as a fraction of the time span.
pub const UNIFORM_TOL: f64 = 1e-12;

const TRACE_HEADER: &str = "t,re,im";
const TWO_CHANNEL_HEADER: &str = "channel,t,re,im";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum ChannelTag {
    #[serde(rename = "v0")]
    V0,
    #[serde(rename = "v1")]
    V1,
}

impl ChannelTag {
    fn index(self) -> usize {
        match self {
            ChannelTag::V0 => 0,
            ChannelTag::V1 => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ChannelTag::V0 => "v0",
            ChannelTag::V1 => "v1",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeRecord {
    pole: [f64; 2],
    multiplicity: usize,
    coeffs: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel: Option<ChannelTag>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    modes: Vec<ModeRecord>,
}

/// Contents of a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelDocument {
    Single(ExpPolyModel),
    TwoChannel(TwoChannelModel),
}

/// Contents of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceDocument {
    Single(SignalTrace),
    TwoChannel(TwoChannelResponse),
}

fn cx(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

fn pair(c: Complex64) -> [f64; 2] {
    [c.re, c.im]
}

fn record_mode(rec: &ModeRecord, index: usize) -> Result<Mode> {
    if rec.coeffs.len() != rec.multiplicity {
        return Err(Error::Schema(format!(
            "mode {index}: multiplicity {} but {} coefficients",
            rec.multiplicity,
            rec.coeffs.len()
        )));
    }
    Mode::new(cx(rec.pole), rec.coeffs.iter().copied().map(cx).collect())
}

pub fn parse_model_document(text: &str) -> Result<ModelDocument> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let tagged = file.modes.iter().filter(|m| m.channel.is_some()).count();
    if tagged == 0 {
        let modes = file.modes.iter().enumerate().map(|(i, r)| record_mode(r, i)).collect::<Result<_>>()?;
        return Ok(ModelDocument::Single(ExpPolyModel::new(modes)?));
    }
    if tagged != file.modes.len() {
        return Err(Error::Schema("either every mode or no mode carries a channel tag".into()));
    }
    // union of poles; a mode absent from one channel gets zero coefficients there
    let mut poles: Vec<Pole> = Vec::new();
    let mut coeffs: [Vec<Option<Vec<Complex64>>>; 2] = [Vec::new(), Vec::new()];
    for (i, rec) in file.modes.iter().enumerate() {
        let mode = record_mode(rec, i)?;
        let ch = rec.channel.expect("all tagged").index();
        let slot = match poles.iter().position(|p| p.lambda == mode.lambda()) {
            Some(k) => {
                if poles[k].multiplicity != mode.multiplicity() {
                    return Err(Error::Schema(format!(
                        "pole {} has different multiplicities in the two channels",
                        mode.lambda()
                    )));
                }
                k
            }
            None => {
                poles.push(mode.pole);
                coeffs[0].push(None);
                coeffs[1].push(None);
                poles.len() - 1
            }
        };
        if coeffs[ch][slot].is_some() {
            return Err(Error::Schema(format!(
                "pole {} listed twice for channel {}",
                mode.lambda(),
                rec.channel.expect("all tagged").name()
            )));
        }
        coeffs[ch][slot] = Some(mode.coeffs.as_slice().to_vec());
    }
    let [c0, c1] = coeffs;
    let fill = |cs: Vec<Option<Vec<Complex64>>>| -> Vec<Vec<Complex64>> {
        cs.into_iter()
            .zip(&poles)
            .map(|(c, p)| c.unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); p.multiplicity]))
            .collect()
    };
    let (f0, f1) = (fill(c0), fill(c1));
    Ok(ModelDocument::TwoChannel(TwoChannelModel::from_coeffs(&poles, f0, f1)?))
}

pub fn parse_model(text: &str) -> Result<ExpPolyModel> {
    match parse_model_document(text)? {
        ModelDocument::Single(m) => Ok(m),
        ModelDocument::TwoChannel(_) => {
            Err(Error::Schema("expected a single-channel model, found channel tags".into()))
        }
    }
}

pub fn parse_two_channel_model(text: &str) -> Result<TwoChannelModel> {
    match parse_model_document(text)? {
        ModelDocument::TwoChannel(m) => Ok(m),
        ModelDocument::Single(_) => {
            Err(Error::Schema("expected a two-channel model with v0/v1 tags".into()))
        }
    }
}

fn records(model: &ExpPolyModel, channel: Option<ChannelTag>) -> Vec<ModeRecord> {
    model
        .modes()
        .iter()
        .map(|m| ModeRecord {
            pole: pair(m.lambda()),
            multiplicity: m.multiplicity(),
            coeffs: m.coeffs.as_slice().iter().copied().map(pair).collect(),
            channel,
        })
        .collect()
}

fn to_json(file: &ModelFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("model records serialize");
    s.push('\n');
    s
}

pub fn format_model(model: &ExpPolyModel) -> String {
    to_json(&ModelFile { modes: records(model, None) })
}

pub fn format_two_channel_model(model: &TwoChannelModel) -> String {
    let mut modes = records(model.channel0(), Some(ChannelTag::V0));
    modes.extend(records(model.channel1(), Some(ChannelTag::V1)));
    to_json(&ModelFile { modes })
}

fn num(buf: &mut ryu::Buffer, x: f64) -> String {
    buf.format(x).to_owned()
}

fn push_rows(out: &mut String, tag: Option<&str>, trace: &SignalTrace) {
    let mut buf = ryu::Buffer::new();
    for (t, v) in trace.times().zip(trace.values()) {
        if let Some(tag) = tag {
            out.push_str(tag);
            out.push(',');
        }
        let _ = writeln!(out, "{},{},{}", num(&mut buf, t), num(&mut buf, v.re), num(&mut buf, v.im));
    }
}

pub fn format_trace(trace: &SignalTrace) -> String {
    let mut out = String::with_capacity(48 * trace.len());
    out.push_str(TRACE_HEADER);
    out.push('\n');
    push_rows(&mut out, None, trace);
    out
}

pub fn format_two_channel_trace(resp: &TwoChannelResponse) -> String {
    let mut out = String::new();
    out.push_str(TWO_CHANNEL_HEADER);
    out.push('\n');
    push_rows(&mut out, Some("v0"), resp.channel0());
    push_rows(&mut out, Some("v1"), resp.channel1());
    out
}

fn parse_float(field: &str, line: usize, what: &str) -> Result<f64> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("{what}: cannot parse '{}'", field.trim()) })?;
    if !x.is_finite() {
        return Err(Error::Parse { line, message: format!("{what}: non-finite value") });
    }
    Ok(x)
}

/// Builds a trace after checking that `times` are strictly increasing and
/// uniformly spaced.
pub fn trace_from_samples(times: &[f64], values: Vec<Complex64>) -> Result<SignalTrace> {
    if times.len() != values.len() {
        return Err(Error::Shape { expected: times.len(), actual: values.len() });
    }
    if times.len() < 2 {
        return Err(Error::InvalidGrid(format!("at least 3 samples required, got {}", times.len())));
    }
    if let Some(j) = (1..times.len()).find(|&j| times[j] <= times[j - 1]) {
        return Err(Error::NonMonotone { index: j });
    }
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let step = span / (times.len() - 1) as f64;
    for (j, &t) in times.iter().enumerate() {
        let deviation = (t - (t0 + j as f64 * step)).abs();
        if deviation > UNIFORM_TOL * span {
            return Err(Error::NonUniform { index: j, deviation });
        }
    }
    SignalTrace::new(t0, step, values)
}

pub fn parse_trace_document(text: &str) -> Result<TraceDocument> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty trace file".into() })?;
    let header: String = header.split(',').map(str::trim).collect::<Vec<_>>().join(",");
    let two = match header.as_str() {
        TRACE_HEADER => false,
        TWO_CHANNEL_HEADER => true,
        _ => {
            return Err(Error::Parse {
                line: hline,
                message: format!("expected header '{TRACE_HEADER}' or '{TWO_CHANNEL_HEADER}'"),
            })
        }
    };
    let width = if two { 4 } else { 3 };
    let mut times: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut values: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse { line, message: format!("expected {width} fields, got {}", fields.len()) });
        }
        let (ch, rest) = if two {
            let ch = match fields[0].trim() {
                "v0" => 0,
                "v1" => 1,
                other => return Err(Error::Parse { line, message: format!("unknown channel tag '{other}'") }),
            };
            (ch, &fields[1..])
        } else {
            (0, &fields[..])
        };
        times[ch].push(parse_float(rest[0], line, "t")?);
        values[ch].push(Complex64::new(parse_float(rest[1], line, "re")?, parse_float(rest[2], line, "im")?));
    }
    let [t0, t1] = times;
    let [v0, v1] = values;
    let first = trace_from_samples(&t0, v0)?;
    if !two {
        return Ok(TraceDocument::Single(first));
    }
    let second = trace_from_samples(&t1, v1)?;
    Ok(TraceDocument::TwoChannel(TwoChannelResponse::new(first, second)?))
}

pub fn parse_trace(text: &str) -> Result<SignalTrace> {
    match parse_trace_document(text)? {
        TraceDocument::Single(t) => Ok(t),
        TraceDocument::TwoChannel(_) => Err(Error::Schema("expected a single-channel trace".into())),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
}

pub fn read_model_document(path: &Path) -> Result<ModelDocument> {
    parse_model_document(&read_text(path)?)
}

pub fn read_model(path: &Path) -> Result<ExpPolyModel> {
    parse_model(&read_text(path)?)
}

pub fn read_two_channel_model(path: &Path) -> Result<TwoChannelModel> {
    parse_two_channel_model(&read_text(path)?)
}

pub fn write_model(path: &Path, model: &ExpPolyModel) -> Result<()> {
    write_text(path, &format_model(model))
}

pub fn write_two_channel_model(path: &Path, model: &TwoChannelModel) -> Result<()> {
    write_text(path, &format_two_channel_model(model))
}

pub fn read_trace_document(path: &Path) -> Result<TraceDocument> {
    parse_trace_document(&read_text(path)?)
}

pub fn read_trace(path: &Path) -> Result<SignalTrace> {
    parse_trace(&read_text(path)?)
}

pub fn write_trace(path: &Path, trace: &SignalTrace) -> Result<()> {
    write_text(path, &format_trace(trace))
}

pub fn write_two_channel_trace(path: &Path, resp: &TwoChannelResponse) -> Result<()> {
    write_text(path, &format_two_channel_trace(resp))
}
