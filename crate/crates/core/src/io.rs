//! File formats: trajectory CSV, system configuration JSON, and the JSON
//! artifacts exchanged between pipeline stages.
//!
//! Matrices are stored row-major as `{"rows", "cols", "data"}`. Floats are
//! written in shortest round-trip form and parsed with correct rounding, so
//! every artifact reloads bit-exactly.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::balance::{BalancedRealization, ReducedModel};
use crate::dictionary::{
    Dictionary, DictionarySpec, InputDictionary, InputDictionarySpec, Selector, SelectorKind,
};
use crate::dynsys::{DiscreteSystem, InputSignal, OscillatorParams, SystemKind, Trajectory};
use crate::edmd::KoopmanModel;
use crate::gramians::{Gramian, GramianKind, Horizon};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPayload {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixPayload {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixPayload {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }
}

impl MatrixPayload {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::InvalidArgument(format!(
                "matrix payload has {} values for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a JSON document, reporting parse errors with line numbers.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: format!("{e}"),
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Trajectory CSV

fn fmt_f64(v: f64) -> String {
    // 17 significant digits round-trip every finite double
    format!("{v:.16e}")
}

/// Header `t,x1..xn,u1..um,y1..yp`, one row per time step. The final row has
/// no input, so its `u` fields are empty.
pub fn trajectory_to_csv(tr: &Trajectory) -> String {
    let (n, m, p) = (tr.state_dim(), tr.input_dim(), tr.output_dim());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend((1..=p).map(|i| format!("y{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for t in 0..=tr.horizon() {
        let mut row = vec![t.to_string()];
        row.extend(tr.states()[t].iter().map(|v| fmt_f64(*v)));
        match tr.inputs().get(t) {
            Some(u) => row.extend(u.iter().map(|v| fmt_f64(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.extend(tr.outputs()[t].iter().map(|v| fmt_f64(*v)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    fs::write(path, trajectory_to_csv(tr)).map_err(|e| io_err(path, e))
}

pub fn parse_trajectory_csv(text: &str, origin: &str) -> Result<Trajectory> {
    let fmt_err = |line: u64, message: String| Error::Format {
        path: origin.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| fmt_err(1, e.to_string()))?
        .clone();
    let count = |prefix: char| {
        header
            .iter()
            .filter(|h| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok())
            .count()
    };
    let (n, m, p) = (count('x'), count('u'), count('y'));
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain((1..=m).map(|i| format!("u{i}")))
        .chain((1..=p).map(|i| format!("y{i}")))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>()
        || n == 0
    {
        return Err(fmt_err(
            1,
            format!("expected header {}", expected.join(",")),
        ));
    }
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            fmt_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    let last = rows.len().saturating_sub(1);
    for (k, (line, rec)) in rows.iter().enumerate() {
        let t: usize = rec[0]
            .parse()
            .map_err(|_| fmt_err(*line, format!("bad time index '{}'", &rec[0])))?;
        if t != k {
            return Err(fmt_err(*line, format!("expected t = {k}, found {t}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| fmt_err(*line, format!("bad number '{s}'")))
        };
        let x = (1..=n).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?;
        states.push(DVector::from_vec(x));
        if k < last {
            let u = (1..=m)
                .map(|i| num(&rec[n + i]))
                .collect::<Result<Vec<_>>>()?;
            inputs.push(DVector::from_vec(u));
        } else if (1..=m).any(|i| !rec[n + i].trim().is_empty()) {
            return Err(fmt_err(*line, "final row must not carry an input".into()));
        }
        let y = (1..=p)
            .map(|i| num(&rec[n + m + i]))
            .collect::<Result<Vec<_>>>()?;
        outputs.push(DVector::from_vec(y));
    }
    if states.len() < 2 {
        return Err(fmt_err(1, "trajectory needs at least two rows".into()));
    }
    if m == 0 {
        inputs = vec![DVector::zeros(0); states.len() - 1];
    }
    Trajectory::from_parts(states, inputs, outputs)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_trajectory_csv(&text, &path.display().to_string())
}

// ---------------------------------------------------------------------------
// System configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputConfig {
    Zero,
    SinRamp {
        #[serde(default = "default_mu")]
        mu: f64,
    },
    Samples {
        values: Vec<Vec<f64>>,
    },
}

fn default_mu() -> f64 {
    0.01
}

impl InputConfig {
    pub fn to_signal(&self) -> InputSignal {
        match self {
            InputConfig::Zero => InputSignal::Zero,
            InputConfig::SinRamp { mu } => InputSignal::SinRamp { mu: *mu },
            InputConfig::Samples { values } => InputSignal::Samples(
                values
                    .iter()
                    .map(|v| DVector::from_vec(v.clone()))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    pub c: Vec<Vec<f64>>,
}

/// `{"system", "params", "x0", "horizon", "input"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub params: serde_json::Value,
    pub x0: Vec<f64>,
    pub horizon: usize,
    #[serde(default = "default_input")]
    pub input: InputConfig,
}

fn default_input() -> InputConfig {
    InputConfig::Zero
}

fn nested_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidArgument(format!("ragged matrix '{what}'")));
    }
    Ok(DMatrix::from_row_iterator(
        r,
        c,
        rows.iter().flatten().copied(),
    ))
}

impl SystemConfig {
    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_vec(self.x0.clone())
    }

    pub fn build_system(&self) -> Result<DiscreteSystem> {
        let params = if self.params.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            self.params.clone()
        };
        let bad = |e: serde_json::Error| Error::InvalidArgument(format!("params: {e}"));
        match self.system {
            SystemKind::Example1 => Ok(DiscreteSystem::example1(
                serde_json::from_value::<OscillatorParams>(params).map_err(bad)?,
            )),
            SystemKind::Example3 => Ok(DiscreteSystem::example3(
                serde_json::from_value::<OscillatorParams>(params).map_err(bad)?,
            )),
            SystemKind::Linear => {
                let lp: LinearParams = serde_json::from_value(params).map_err(bad)?;
                let a = nested_to_matrix(&lp.a, "a")?;
                let b = match &lp.b {
                    Some(b) => nested_to_matrix(b, "b")?,
                    None => DMatrix::zeros(a.nrows(), 0),
                };
                let c = nested_to_matrix(&lp.c, "c")?;
                DiscreteSystem::linear(&a, &b, &c)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Stage artifacts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub seed: u64,
    pub state_dim: usize,
    pub lifted_dim: usize,
    pub input_lifted_dim: usize,
    pub dictionary: DictionarySpec,
    pub input_dictionary: Option<InputDictionarySpec>,
    pub k_x: MatrixPayload,
    pub k_u: Option<MatrixPayload>,
    pub w_h: MatrixPayload,
    pub w_h_kind: SelectorKind,
    pub p_x: MatrixPayload,
    pub zeta: f64,
    pub fit_residual: f64,
}

impl ModelFile {
    pub fn from_model(model: &KoopmanModel, seed: u64) -> Result<Self> {
        let dictionary =
            model.dictionary().spec().cloned().ok_or_else(|| {
                Error::InvalidArgument("dictionary has no serializable spec".into())
            })?;
        Ok(ModelFile {
            seed,
            state_dim: model.dictionary().state_dim(),
            lifted_dim: model.lifted_dim(),
            input_lifted_dim: model.k_u().map_or(0, |k| k.ncols()),
            dictionary,
            input_dictionary: model.input_dictionary().map(|d| d.spec()),
            k_x: model.k_x().into(),
            k_u: model.k_u().map(Into::into),
            w_h: model.w_h().matrix().into(),
            w_h_kind: model.w_h().kind(),
            p_x: model.p_x().matrix().into(),
            zeta: model.zeta(),
            fit_residual: model.fit_residual(),
        })
    }

    pub fn to_model(&self) -> Result<KoopmanModel> {
        let dict = Dictionary::from_spec(&self.dictionary)?;
        if dict.lifted_dim() != self.lifted_dim || dict.state_dim() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "model file lifted dimension",
                expected: dict.lifted_dim(),
                found: self.lifted_dim,
            });
        }
        let idict = self
            .input_dictionary
            .as_ref()
            .map(InputDictionary::from_spec)
            .transpose()?;
        let k_u = self
            .k_u
            .as_ref()
            .map(MatrixPayload::to_matrix)
            .transpose()?;
        if k_u.as_ref().map_or(0, |k| k.ncols()) != self.input_lifted_dim {
            return Err(Error::DimensionMismatch {
                context: "model file input lifted dimension",
                expected: self.input_lifted_dim,
                found: k_u.as_ref().map_or(0, |k| k.ncols()),
            });
        }
        let w_h = Selector::new(self.w_h.to_matrix()?, self.w_h_kind)?;
        let model =
            KoopmanModel::from_operators(dict, idict, self.k_x.to_matrix()?, k_u, w_h, self.zeta)?
                .with_fit_residual(self.fit_residual);
        if model.p_x().matrix() != &self.p_x.to_matrix()? {
            return Err(Error::InvalidArgument(
                "P_x does not match the dictionary".into(),
            ));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDescriptor {
    /// `"state"` for `P_x`, absent for a general matrix.
    pub name: Option<String>,
    pub matrix: MatrixPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianFile {
    pub seed: u64,
    pub kind: GramianKind,
    pub horizon: Horizon,
    pub projection: Option<ProjectionDescriptor>,
    pub normalized: bool,
    pub matrix: MatrixPayload,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl GramianFile {
    pub fn from_gramian(g: &Gramian, projection_name: Option<&str>, seed: u64) -> Self {
        let psd = g.psd_check();
        GramianFile {
            seed,
            kind: g.kind(),
            horizon: g.horizon(),
            projection: g.projection().map(|p| ProjectionDescriptor {
                name: projection_name.map(str::to_string),
                matrix: p.into(),
            }),
            normalized: g.is_normalized(),
            matrix: g.matrix().into(),
            lambda_min: psd.lambda_min,
            lambda_max: psd.lambda_max,
        }
    }

    pub fn to_gramian(&self) -> Result<Gramian> {
        Gramian::new(
            self.matrix.to_matrix()?,
            self.kind,
            self.horizon,
            self.projection
                .as_ref()
                .map(|p| p.matrix.to_matrix())
                .transpose()?,
            self.normalized,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedFile {
    pub seed: u64,
    pub hsv: Vec<f64>,
    pub t: MatrixPayload,
    pub t_inv: MatrixPayload,
    pub a_eta: MatrixPayload,
    pub b_eta: Option<MatrixPayload>,
    pub c_eta: MatrixPayload,
    pub regularization_used: f64,
    pub truncated: usize,
}

impl BalancedFile {
    pub fn from_balanced(b: &BalancedRealization, seed: u64) -> Self {
        BalancedFile {
            seed,
            hsv: b.hsv.iter().copied().collect(),
            t: (&b.t).into(),
            t_inv: (&b.t_inv).into(),
            a_eta: (&b.a_eta).into(),
            b_eta: b.b_eta.as_ref().map(Into::into),
            c_eta: (&b.c_eta).into(),
            regularization_used: b.regularization_used,
            truncated: b.truncated,
        }
    }

    pub fn to_balanced(&self) -> Result<BalancedRealization> {
        let bal = BalancedRealization {
            t: self.t.to_matrix()?,
            t_inv: self.t_inv.to_matrix()?,
            hsv: DVector::from_vec(self.hsv.clone()),
            a_eta: self.a_eta.to_matrix()?,
            b_eta: self
                .b_eta
                .as_ref()
                .map(MatrixPayload::to_matrix)
                .transpose()?,
            c_eta: self.c_eta.to_matrix()?,
            regularization_used: self.regularization_used,
            truncated: self.truncated,
        };
        let k = bal.a_eta.nrows();
        if bal.t.nrows() != k
            || bal.t_inv.ncols() != k
            || bal.c_eta.ncols() != k
            || bal.hsv.len() < k
        {
            return Err(Error::DimensionMismatch {
                context: "balanced realization blocks",
                expected: k,
                found: bal.t.nrows(),
            });
        }
        Ok(bal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedFile {
    pub seed: u64,
    pub order: usize,
    pub a_r: MatrixPayload,
    pub b_r: Option<MatrixPayload>,
    pub c_r: MatrixPayload,
    pub lift_in: MatrixPayload,
    pub bound_upper: f64,
    pub bound_lower: f64,
    pub advisory_only: bool,
}

impl ReducedFile {
    pub fn from_reduced(r: &ReducedModel, seed: u64) -> Self {
        ReducedFile {
            seed,
            order: r.order,
            a_r: (&r.a_r).into(),
            b_r: r.b_r.as_ref().map(Into::into),
            c_r: (&r.c_r).into(),
            lift_in: (&r.lift_in).into(),
            bound_upper: r.bound_upper,
            bound_lower: r.bound_lower,
            advisory_only: r.advisory_only,
        }
    }

    pub fn to_reduced(&self) -> Result<ReducedModel> {
        Ok(ReducedModel {
            order: self.order,
            a_r: self.a_r.to_matrix()?,
            b_r: self
                .b_r
                .as_ref()
                .map(MatrixPayload::to_matrix)
                .transpose()?,
            c_r: self.c_r.to_matrix()?,
            lift_in: self.lift_in.to_matrix()?,
            bound_upper: self.bound_upper,
            bound_lower: self.bound_lower,
            advisory_only: self.advisory_only,
        })
    }
}
