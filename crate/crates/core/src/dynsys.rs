//! Discrete-time polynomial systems `x_{t+1} = F(x_t) + B u_t`, `y_t = h(x_t)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::gramians::{stein_solve, Horizon, SteinSide};
use crate::linalg::{spectral_radius, symmetrize};
use crate::poly::{Monomial, Polynomial};
use crate::{Error, Result};

/// Default divergence cap on `max |x_i|`.
pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e12;

/// Coefficients of the two-state oscillator used in the worked examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillatorParams {
    pub delta1: f64,
    pub delta2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        OscillatorParams {
            delta1: 0.75,
            delta2: 0.9,
            alpha: 0.02,
            beta: 0.12,
            gamma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    /// Unforced oscillator.
    Example1,
    /// Oscillator with `u₁` added to the first channel.
    Example3,
    Linear,
}

#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    kind: SystemKind,
    step_poly: Vec<Polynomial>,
    input_gain: DMatrix<f64>,
    output_poly: Vec<Polynomial>,
    params: BTreeMap<String, f64>,
}

impl DiscreteSystem {
    fn oscillator(kind: SystemKind, p: OscillatorParams, input_dim: usize) -> Self {
        let m = |e: [u32; 2]| Monomial(e.to_vec());
        let step_poly = vec![
            Polynomial::new(vec![
                (p.delta1, m([1, 0])),
                (p.alpha, m([2, 0])),
                (-1.0, m([0, 2])),
            ]),
            Polynomial::new(vec![
                (p.delta2, m([0, 1])),
                (p.beta, m([1, 0])),
                (p.gamma, m([0, 2])),
            ]),
        ];
        let output_poly = vec![
            Polynomial::new(vec![(1.0, m([2, 0]))]),
            Polynomial::new(vec![(1.0, m([0, 2]))]),
        ];
        let mut input_gain = DMatrix::zeros(2, input_dim);
        if input_dim > 0 {
            input_gain[(0, 0)] = 1.0;
        }
        let params = BTreeMap::from([
            ("alpha".to_string(), p.alpha),
            ("beta".to_string(), p.beta),
            ("delta1".to_string(), p.delta1),
            ("delta2".to_string(), p.delta2),
            ("gamma".to_string(), p.gamma),
        ]);
        DiscreteSystem {
            kind,
            step_poly,
            input_gain,
            output_poly,
            params,
        }
    }

    /// `x₁' = δ₁x₁ + αx₁² − x₂²`, `x₂' = δ₂x₂ + βx₁ + γx₂²`, `y = (x₁², x₂²)`.
    pub fn example1(p: OscillatorParams) -> Self {
        Self::oscillator(SystemKind::Example1, p, 0)
    }

    /// [`example1`](Self::example1) with a scalar input added to `x₁'`.
    pub fn example3(p: OscillatorParams) -> Self {
        Self::oscillator(SystemKind::Example3, p, 1)
    }

    /// `x' = A x + B u`, `y = C x`. Pass a `n×0` matrix for `B` when unforced.
    pub fn linear(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "linear system A columns",
                expected: n,
                found: a.ncols(),
            });
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "linear system B rows",
                expected: n,
                found: b.nrows(),
            });
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "linear system C columns",
                expected: n,
                found: c.ncols(),
            });
        }
        let linear_rows = |m: &DMatrix<f64>| -> Vec<Polynomial> {
            m.row_iter()
                .map(|row| {
                    Polynomial::new(
                        row.iter()
                            .enumerate()
                            .map(|(j, v)| (*v, Monomial::coordinate(n, j)))
                            .collect(),
                    )
                })
                .collect()
        };
        Ok(DiscreteSystem {
            kind: SystemKind::Linear,
            step_poly: linear_rows(a),
            input_gain: b.clone(),
            output_poly: linear_rows(c),
            params: BTreeMap::new(),
        })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.step_poly.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_gain.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.output_poly.len()
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// The same system with its input channels removed.
    pub fn autonomous(&self) -> DiscreteSystem {
        DiscreteSystem {
            input_gain: DMatrix::zeros(self.state_dim(), 0),
            ..self.clone()
        }
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "state",
                expected: self.state_dim(),
                found: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }

    /// `F(x, 0)` without input handling; assumes `x` has been validated.
    pub(crate) fn drift(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.state_dim(), self.step_poly.iter().map(|p| p.eval(x)))
    }

    /// `h(x)`; assumes `x` has the right dimension.
    pub(crate) fn output_raw(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.output_dim(),
            self.output_poly.iter().map(|p| p.eval(x)),
        )
    }

    /// One step `F(x, u)`. `u` must be empty iff the system has no input.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input",
                expected: self.input_dim(),
                found: u.len(),
            });
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("input"));
        }
        let mut next = self.drift(x.as_slice());
        if self.input_dim() > 0 {
            next += &self.input_gain * u;
        }
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("step result"));
        }
        Ok(next)
    }

    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        let y = self.output_raw(x.as_slice());
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("output"));
        }
        Ok(y)
    }

    /// Simulates `horizon` steps from `x0`.
    pub fn simulate(
        &self,
        x0: &DVector<f64>,
        input: &InputSignal,
        horizon: usize,
        cap: f64,
    ) -> Result<Trajectory> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        self.check_state(x0)?;
        let mut states = Vec::with_capacity(horizon + 1);
        let mut inputs = Vec::with_capacity(horizon);
        let mut outputs = Vec::with_capacity(horizon + 1);
        states.push(x0.clone());
        outputs.push(self.output(x0)?);
        for t in 0..horizon {
            let u = input.at(t, self.input_dim())?;
            let next = match self.step(&states[t], &u) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Divergence {
                        step: t + 1,
                        magnitude: f64::INFINITY,
                        cap,
                    })
                }
                Err(e) => return Err(e),
            };
            let magnitude = next.amax();
            if magnitude > cap {
                return Err(Error::Divergence {
                    step: t + 1,
                    magnitude,
                    cap,
                });
            }
            outputs.push(self.output(&next)?);
            states.push(next);
            inputs.push(u);
        }
        Ok(Trajectory {
            states,
            inputs,
            outputs,
        })
    }

    /// Simulates one trajectory per initial condition, in input order.
    pub fn simulate_batch(
        &self,
        x0s: &[DVector<f64>],
        input: &InputSignal,
        horizon: usize,
        cap: f64,
        exec: Exec,
    ) -> Vec<Result<Trajectory>> {
        exec.map(x0s, |x0| self.simulate(x0, input, horizon, cap))
    }

    /// Analytic Jacobians of `F` and `h` at `x0`.
    pub fn linearize(&self, x0: &DVector<f64>) -> Result<LinearizedSystem> {
        self.check_state(x0)?;
        let n = self.state_dim();
        let jac = |polys: &[Polynomial]| {
            DMatrix::from_fn(polys.len(), n, |i, j| {
                polys[i].derivative(j).eval(x0.as_slice())
            })
        };
        let a = jac(&self.step_poly);
        let c = jac(&self.output_poly);
        if !(crate::linalg::all_finite(&a) && crate::linalg::all_finite(&c)) {
            return Err(Error::NonFinite("jacobian"));
        }
        Ok(LinearizedSystem {
            a,
            c,
            x0: x0.clone(),
        })
    }

    /// Central finite-difference Jacobians with relative step `1e-6`.
    pub fn linearize_fd(&self, x0: &DVector<f64>) -> Result<LinearizedSystem> {
        self.check_state(x0)?;
        let n = self.state_dim();
        let mut a = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(self.output_dim(), n);
        for j in 0..n {
            let h = 1e-6 * x0[j].abs().max(1.0);
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] += h;
            xm[j] -= h;
            let df = (self.drift(xp.as_slice()) - self.drift(xm.as_slice())) / (2.0 * h);
            let dh = (self.output_raw(xp.as_slice()) - self.output_raw(xm.as_slice())) / (2.0 * h);
            a.set_column(j, &df);
            c.set_column(j, &dh);
        }
        Ok(LinearizedSystem {
            a,
            c,
            x0: x0.clone(),
        })
    }
}

/// Exogenous input `u_t` for `t = 0, 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal {
    Zero,
    /// `u₁[t] = sin(t) + μ t`, remaining channels zero.
    SinRamp {
        mu: f64,
    },
    Samples(Vec<DVector<f64>>),
}

impl InputSignal {
    pub fn at(&self, t: usize, m: usize) -> Result<DVector<f64>> {
        match self {
            InputSignal::Zero => Ok(DVector::zeros(m)),
            InputSignal::SinRamp { mu } => {
                let mut u = DVector::zeros(m);
                if m > 0 {
                    let tf = t as f64;
                    u[0] = tf.sin() + mu * tf;
                }
                Ok(u)
            }
            InputSignal::Samples(samples) => {
                let u = samples.get(t).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "input samples end at t = {}, requested t = {t}",
                        samples.len()
                    ))
                })?;
                if u.len() != m {
                    return Err(Error::DimensionMismatch {
                        context: "input sample",
                        expected: m,
                        found: u.len(),
                    });
                }
                Ok(u.clone())
            }
        }
    }
}

/// States `x_0..x_T`, inputs `u_0..u_{T−1}`, outputs `y_0..y_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
    outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Assembles a trajectory from stored columns (e.g. read back from CSV),
    /// checking lengths and dimensions only.
    pub fn from_parts(
        states: Vec<DVector<f64>>,
        inputs: Vec<DVector<f64>>,
        outputs: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyData("trajectory has no states"));
        }
        let t = states.len() - 1;
        if outputs.len() != states.len() {
            return Err(Error::DimensionMismatch {
                context: "trajectory output count",
                expected: states.len(),
                found: outputs.len(),
            });
        }
        if inputs.len() != t && !inputs.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "trajectory input count",
                expected: t,
                found: inputs.len(),
            });
        }
        let inputs = if inputs.is_empty() {
            vec![DVector::zeros(0); t]
        } else {
            inputs
        };
        let dims_ok = |v: &[DVector<f64>]| v.windows(2).all(|w| w[0].len() == w[1].len());
        if !(dims_ok(&states) && dims_ok(&inputs) && dims_ok(&outputs)) {
            return Err(Error::InvalidArgument(
                "trajectory vectors have inconsistent dimensions".into(),
            ));
        }
        Ok(Trajectory {
            states,
            inputs,
            outputs,
        })
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    /// Number of steps `T` (one fewer than the number of states).
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |u| u.len())
    }

    pub fn output_dim(&self) -> usize {
        self.outputs[0].len()
    }
}

/// Jacobian pair `(A, C)` of a system at an expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x0: DVector<f64>,
}

/// `Σ_{t=0..T} (Aᵗ)ᵀ Cᵀ C Aᵗ`, or the Stein solution for an infinite horizon.
pub fn linear_observability_gramian(
    lin: &LinearizedSystem,
    horizon: Horizon,
) -> Result<DMatrix<f64>> {
    let q = lin.c.transpose() * &lin.c;
    match horizon {
        Horizon::Finite(t_max) => {
            let n = lin.a.nrows();
            let mut power = DMatrix::<f64>::identity(n, n);
            let mut sum = DMatrix::zeros(n, n);
            for _ in 0..=t_max {
                sum += power.transpose() * &q * &power;
                power = &lin.a * power;
            }
            Ok(symmetrize(&sum))
        }
        Horizon::Infinite => {
            let rho = spectral_radius(&lin.a);
            if rho >= 1.0 - 1e-9 {
                return Err(Error::Unstable { rho });
            }
            stein_solve(&lin.a, &q, SteinSide::Left)
        }
    }
}
