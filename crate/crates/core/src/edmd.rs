//! Snapshot assembly and regularized EDMD regression, with and without input.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, InputDictionary, Selector};
use crate::dynsys::{InputSignal, Trajectory};
use crate::exec::Exec;
use crate::linalg::{all_finite, ridge_right_solve};
use crate::{Error, Result};

/// Relative singular-value cutoff of the unregularized pseudoinverse.
pub const PINV_REL_TOL: f64 = 1e-10;

/// Lifted consecutive-state pairs, column `j` of `psi_future` being the
/// successor of column `j` of `psi_past`.
#[derive(Debug, Clone)]
pub struct SnapshotPair {
    pub psi_past: DMatrix<f64>,
    pub psi_future: DMatrix<f64>,
    pub psi_u_past: Option<DMatrix<f64>>,
    dictionary: Dictionary,
    input_dictionary: Option<InputDictionary>,
}

impl SnapshotPair {
    pub fn len(&self) -> usize {
        self.psi_past.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }
}

/// Lifts every trajectory and concatenates pairs in trajectory order, then
/// time order. Trajectories are lifted independently on `exec`.
pub fn build_snapshots(
    trajs: &[Trajectory],
    dict: &Dictionary,
    idict: Option<&InputDictionary>,
    exec: Exec,
) -> Result<SnapshotPair> {
    if trajs.is_empty() {
        return Err(Error::EmptyData("no trajectories"));
    }
    for tr in trajs {
        if tr.state_dim() != dict.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "trajectory state vs dictionary",
                expected: dict.state_dim(),
                found: tr.state_dim(),
            });
        }
        if tr.states().len() < 2 {
            return Err(Error::EmptyData("trajectory with fewer than two states"));
        }
        if let Some(id) = idict {
            if tr.input_dim() != id.input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "trajectory input vs input dictionary",
                    expected: id.input_dim(),
                    found: tr.input_dim(),
                });
            }
        }
    }
    let blocks = exec.try_map(trajs, |tr| -> Result<_> {
        let lifted = dict.lift_columns(tr.states(), Exec::Sequential)?;
        let t = tr.horizon();
        let past = lifted.columns(0, t).clone_owned();
        let future = lifted.columns(1, t).clone_owned();
        let u = idict.map(|id| id.lift_columns(tr.inputs())).transpose()?;
        Ok((past, future, u))
    })?;
    let total: usize = blocks.iter().map(|b| b.0.ncols()).sum();
    let n_l = dict.lifted_dim();
    let mut psi_past = DMatrix::zeros(n_l, total);
    let mut psi_future = DMatrix::zeros(n_l, total);
    let mut psi_u = idict.map(|id| DMatrix::zeros(id.lifted_dim(), total));
    let mut col = 0;
    for (p, f, u) in blocks {
        let w = p.ncols();
        psi_past.columns_mut(col, w).copy_from(&p);
        psi_future.columns_mut(col, w).copy_from(&f);
        if let (Some(dst), Some(src)) = (psi_u.as_mut(), u) {
            dst.columns_mut(col, w).copy_from(&src);
        }
        col += w;
    }
    Ok(SnapshotPair {
        psi_past,
        psi_future,
        psi_u_past: psi_u,
        dictionary: dict.clone(),
        input_dictionary: idict.copied(),
    })
}

/// Learned lifted linear model `ψ⁺ = K_x ψ + K_u ψ_u`, `y = W_h ψ`, `x = P_x ψ`.
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    dictionary: Dictionary,
    input_dictionary: Option<InputDictionary>,
    k_x: DMatrix<f64>,
    k_u: Option<DMatrix<f64>>,
    w_h: Selector,
    p_x: Selector,
    zeta: f64,
    fit_residual: f64,
}

impl KoopmanModel {
    /// Assembles a model from known operators. `P_x` comes from the dictionary.
    pub fn from_operators(
        dictionary: Dictionary,
        input_dictionary: Option<InputDictionary>,
        k_x: DMatrix<f64>,
        k_u: Option<DMatrix<f64>>,
        w_h: Selector,
        zeta: f64,
    ) -> Result<Self> {
        let n_l = dictionary.lifted_dim();
        if k_x.nrows() != n_l || k_x.ncols() != n_l {
            return Err(Error::DimensionMismatch {
                context: "K_x side vs lifted dimension",
                expected: n_l,
                found: if k_x.nrows() != n_l {
                    k_x.nrows()
                } else {
                    k_x.ncols()
                },
            });
        }
        if let Some(ku) = &k_u {
            if ku.nrows() != n_l {
                return Err(Error::DimensionMismatch {
                    context: "K_u rows",
                    expected: n_l,
                    found: ku.nrows(),
                });
            }
            if let Some(id) = &input_dictionary {
                if ku.ncols() != id.lifted_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "K_u columns vs input lifted dimension",
                        expected: id.lifted_dim(),
                        found: ku.ncols(),
                    });
                }
            }
            if !all_finite(ku) {
                return Err(Error::NonFinite("K_u"));
            }
        }
        if w_h.matrix().ncols() != n_l {
            return Err(Error::DimensionMismatch {
                context: "W_h columns",
                expected: n_l,
                found: w_h.matrix().ncols(),
            });
        }
        if !all_finite(&k_x) {
            return Err(Error::NonFinite("K_x"));
        }
        let p_x = dictionary.state_selector();
        Ok(KoopmanModel {
            dictionary,
            input_dictionary,
            k_x,
            k_u,
            w_h,
            p_x,
            zeta,
            fit_residual: 0.0,
        })
    }

    pub fn with_fit_residual(mut self, r: f64) -> Self {
        self.fit_residual = r;
        self
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn input_dictionary(&self) -> Option<&InputDictionary> {
        self.input_dictionary.as_ref()
    }

    pub fn k_x(&self) -> &DMatrix<f64> {
        &self.k_x
    }

    pub fn k_u(&self) -> Option<&DMatrix<f64>> {
        self.k_u.as_ref()
    }

    pub fn w_h(&self) -> &Selector {
        &self.w_h
    }

    pub fn p_x(&self) -> &Selector {
        &self.p_x
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }

    pub fn lifted_dim(&self) -> usize {
        self.k_x.nrows()
    }

    /// `ψ_u(u)`; without an input dictionary the input is used as is.
    pub fn lift_input(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let k_u = self.k_u.as_ref().ok_or(Error::MissingInputOperator)?;
        match &self.input_dictionary {
            Some(id) => id.eval(u),
            None if u.len() == k_u.ncols() => Ok(u.clone()),
            None => Err(Error::DimensionMismatch {
                context: "raw lifted input",
                expected: k_u.ncols(),
                found: u.len(),
            }),
        }
    }

    /// `K_x ψ + K_u ψ_u` (the input term only when `psi_u` is given).
    pub fn advance(&self, psi: &DVector<f64>, psi_u: Option<&DVector<f64>>) -> DVector<f64> {
        let mut next = &self.k_x * psi;
        if let (Some(k_u), Some(v)) = (&self.k_u, psi_u) {
            next += k_u * v;
        }
        next
    }
}

/// Autonomous fit `K = argmin ‖Ψ_f − KΨ_p‖_F² + ζ‖K‖_F²`.
pub fn fit_koopman(snaps: &SnapshotPair, zeta: f64) -> Result<KoopmanModel> {
    if snaps.is_empty() {
        return Err(Error::EmptyData("no snapshot pairs"));
    }
    let k = ridge_right_solve(&snaps.psi_future, &snaps.psi_past, zeta, PINV_REL_TOL)?;
    let residual = (&snaps.psi_future - &k * &snaps.psi_past).norm();
    let wh = snaps.dictionary.output_selector();
    Ok(
        KoopmanModel::from_operators(snaps.dictionary.clone(), None, k, None, wh, zeta)?
            .with_fit_residual(residual),
    )
}

/// Stacked fit `Ψ_f ≈ [K_x K_u] [Ψ_p; Ψ_u]` with the same regularized solver.
pub fn fit_koopman_with_input(snaps: &SnapshotPair, zeta: f64) -> Result<KoopmanModel> {
    if snaps.is_empty() {
        return Err(Error::EmptyData("no snapshot pairs"));
    }
    let (psi_u, idict) = match (&snaps.psi_u_past, &snaps.input_dictionary) {
        (Some(u), Some(id)) if u.nrows() > 0 => (u, *id),
        _ => {
            return Err(Error::InvalidArgument(
                "snapshot pair has no lifted inputs".into(),
            ))
        }
    };
    let n_l = snaps.psi_past.nrows();
    let m_l = psi_u.nrows();
    let mut z = DMatrix::zeros(n_l + m_l, snaps.len());
    z.rows_mut(0, n_l).copy_from(&snaps.psi_past);
    z.rows_mut(n_l, m_l).copy_from(psi_u);
    let g = ridge_right_solve(&snaps.psi_future, &z, zeta, PINV_REL_TOL)?;
    let residual = (&snaps.psi_future - &g * &z).norm();
    let k_x = g.columns(0, n_l).clone_owned();
    let k_u = g.columns(n_l, m_l).clone_owned();
    let wh = snaps.dictionary.output_selector();
    Ok(KoopmanModel::from_operators(
        snaps.dictionary.clone(),
        Some(idict),
        k_x,
        Some(k_u),
        wh,
        zeta,
    )?
    .with_fit_residual(residual))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// Lift the true state at each step and advance once, using the input
    /// when the model has one.
    OneStep,
    /// Free run from the lifted initial state.
    MultiStep,
    /// One-step with the input term; requires `K_u`.
    WithControl,
    /// One-step with the input term dropped.
    OpenLoopIgnoringInput,
}

/// Which read-out of the lifted state is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channels {
    /// `P_x ψ̂`
    States,
    /// `W_h ψ̂`
    Outputs,
}

/// Predicted states and outputs for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Prediction {
    pub fn channel(&self, ch: Channels) -> &[DVector<f64>] {
        match ch {
            Channels::States => &self.states,
            Channels::Outputs => &self.outputs,
        }
    }
}

/// Free run `ψ̂_{t+1} = K_x ψ̂_t + K_u ψ_u(u_t)` from `ψ(x0)`.
pub fn predict_free_run(
    model: &KoopmanModel,
    x0: &DVector<f64>,
    input: &InputSignal,
    horizon: usize,
    use_input: bool,
) -> Result<Prediction> {
    if horizon < 1 {
        return Err(Error::InvalidArgument(
            "prediction horizon must be at least 1".into(),
        ));
    }
    let m = model.input_dictionary.map_or_else(
        || model.k_u.as_ref().map_or(0, |k| k.ncols()),
        |id| id.input_dim(),
    );
    let mut psi = model.dictionary.eval(x0)?;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        states.push(model.p_x.apply(&psi));
        outputs.push(model.w_h.apply(&psi));
        if t == horizon {
            break;
        }
        let psi_u = if use_input && model.k_u.is_some() {
            Some(model.lift_input(&input.at(t, m)?)?)
        } else {
            None
        };
        psi = model.advance(&psi, psi_u.as_ref());
    }
    Ok(Prediction { states, outputs })
}

/// One-step predictions from the true states of `truth`.
pub fn predict_one_step(
    model: &KoopmanModel,
    truth: &Trajectory,
    use_input: bool,
) -> Result<Prediction> {
    let horizon = truth.horizon();
    if horizon < 1 {
        return Err(Error::InvalidArgument(
            "prediction horizon must be at least 1".into(),
        ));
    }
    let psi0 = model.dictionary.eval(&truth.states()[0])?;
    let mut states = vec![model.p_x.apply(&psi0)];
    let mut outputs = vec![model.w_h.apply(&psi0)];
    for t in 0..horizon {
        let psi = model.dictionary.eval(&truth.states()[t])?;
        let psi_u = if use_input && model.k_u.is_some() {
            Some(model.lift_input(&truth.inputs()[t])?)
        } else {
            None
        };
        let next = model.advance(&psi, psi_u.as_ref());
        states.push(model.p_x.apply(&next));
        outputs.push(model.w_h.apply(&next));
    }
    Ok(Prediction { states, outputs })
}

/// Predicts along `truth` (its initial state and inputs) in the given mode.
pub fn predict(
    model: &KoopmanModel,
    truth: &Trajectory,
    mode: PredictionMode,
) -> Result<Prediction> {
    match mode {
        PredictionMode::OneStep => predict_one_step(model, truth, true),
        PredictionMode::WithControl => {
            if model.k_u.is_none() {
                return Err(Error::MissingInputOperator);
            }
            predict_one_step(model, truth, true)
        }
        PredictionMode::OpenLoopIgnoringInput => predict_one_step(model, truth, false),
        PredictionMode::MultiStep => {
            let samples = InputSignal::Samples(truth.inputs().to_vec());
            predict_free_run(model, &truth.states()[0], &samples, truth.horizon(), true)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub per_channel_errors: Vec<f64>,
    /// `ε`, the sum of the per-channel errors.
    pub total_error: f64,
    pub horizon: usize,
    pub mode: PredictionMode,
    pub channels: Channels,
}

/// Per channel, the 2-norm over time of `predicted − truth`.
pub fn channel_errors(predicted: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<Vec<f64>> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "prediction length vs truth length",
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let p = truth.first().map_or(0, |v| v.len());
    let mut sq = vec![0.0; p];
    for (a, b) in predicted.iter().zip(truth) {
        if a.len() != p || b.len() != p {
            return Err(Error::DimensionMismatch {
                context: "channel count",
                expected: p,
                found: a.len().max(b.len()),
            });
        }
        for (k, s) in sq.iter_mut().enumerate() {
            let d = a[k] - b[k];
            *s += d * d;
        }
    }
    Ok(sq.into_iter().map(f64::sqrt).collect())
}

pub fn prediction_error(
    model: &KoopmanModel,
    truth: &Trajectory,
    mode: PredictionMode,
    channels: Channels,
) -> Result<PredictionReport> {
    let pred = predict(model, truth, mode)?;
    let reference = match channels {
        Channels::States => truth.states(),
        Channels::Outputs => truth.outputs(),
    };
    let per_channel_errors = channel_errors(pred.channel(channels), reference)?;
    Ok(PredictionReport {
        total_error: per_channel_errors.iter().sum(),
        per_channel_errors,
        horizon: truth.horizon(),
        mode,
        channels,
    })
}
