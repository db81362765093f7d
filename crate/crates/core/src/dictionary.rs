//! Observable dictionaries `ψ(x)` and input dictionaries `ψ_u(u)`.
//!
//! Every state dictionary is state-inclusive: its first `n` entries are the
//! coordinate functions `x₁, …, x_n` in order, so the state projector `P_x`
//! is always a row selection of the leading block.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynsys::{DiscreteSystem, OscillatorParams};
use crate::exec::Exec;
use crate::poly::Monomial;
use crate::{Error, Result};

pub const DEFAULT_MAX_ENTRIES: usize = 2000;

/// Symbolic descriptor of one dictionary entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Monomial(Monomial),
    /// Output component `component` of `h ∘ f^depth`.
    ComposedOutput {
        depth: u32,
        component: usize,
    },
    Constant,
}

/// Serializable description from which a [`Dictionary`] is rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictionarySpec {
    Example1 {
        #[serde(default)]
        params: OscillatorParams,
    },
    Monomial {
        n: usize,
        max_degree: u32,
        #[serde(default)]
        include_constant: bool,
        /// Monomials whose values form the output `h(x)`; defaults to the state.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outputs: Option<Vec<Monomial>>,
    },
    Identity {
        n: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    entries: Vec<Observable>,
    state_dim: usize,
    outputs: Vec<Observable>,
    /// Autonomous map used by composed-output entries.
    system: Option<DiscreteSystem>,
    spec: Option<DictionarySpec>,
}

impl Dictionary {
    /// Builds a dictionary, enforcing state inclusivity and uniqueness.
    pub fn new(
        entries: Vec<Observable>,
        state_dim: usize,
        outputs: Vec<Observable>,
        system: Option<DiscreteSystem>,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument(
                "state dimension must be positive".into(),
            ));
        }
        if entries.len() < state_dim {
            return Err(Error::InvalidArgument(
                "dictionary must contain the state coordinates".into(),
            ));
        }
        for (i, e) in entries.iter().take(state_dim).enumerate() {
            if *e != Observable::Monomial(Monomial::coordinate(state_dim, i)) {
                return Err(Error::InvalidArgument(format!(
                    "entry {i} must be the coordinate x{}",
                    i + 1
                )));
            }
        }
        let mut seen = HashSet::new();
        for e in &entries {
            match e {
                Observable::Monomial(m) if m.dim() != state_dim => {
                    return Err(Error::DimensionMismatch {
                        context: "monomial exponent vector",
                        expected: state_dim,
                        found: m.dim(),
                    })
                }
                Observable::Monomial(m) if m.degree() == 0 => {
                    return Err(Error::InvalidArgument(
                        "use Observable::Constant for the constant entry".into(),
                    ))
                }
                Observable::ComposedOutput { component, .. } => {
                    let sys = system.as_ref().ok_or_else(|| {
                        Error::InvalidArgument("composed-output entries need a system".into())
                    })?;
                    if sys.state_dim() != state_dim {
                        return Err(Error::DimensionMismatch {
                            context: "dictionary system state",
                            expected: state_dim,
                            found: sys.state_dim(),
                        });
                    }
                    if *component >= sys.output_dim() {
                        return Err(Error::InvalidArgument(format!(
                            "output component {component} out of range"
                        )));
                    }
                }
                _ => {}
            }
            if !seen.insert(e.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate dictionary entry {e:?}"
                )));
            }
        }
        for o in &outputs {
            if !seen.contains(o) {
                return Err(Error::InvalidArgument(format!(
                    "output observable {o:?} is not a dictionary entry"
                )));
            }
        }
        Ok(Dictionary {
            entries,
            state_dim,
            outputs,
            system: system.map(|s| s.autonomous()),
            spec: None,
        })
    }

    pub fn from_spec(spec: &DictionarySpec) -> Result<Self> {
        let mut dict = match spec {
            DictionarySpec::Example1 { params } => example1_dictionary(*params)?.0,
            DictionarySpec::Monomial {
                n,
                max_degree,
                include_constant,
                outputs,
            } => {
                let mut d =
                    monomial_dictionary(*n, *max_degree, *include_constant, DEFAULT_MAX_ENTRIES)?;
                if let Some(outs) = outputs {
                    let outs = outs.iter().cloned().map(Observable::Monomial).collect();
                    d = Dictionary::new(d.entries, d.state_dim, outs, None)?;
                }
                d
            }
            DictionarySpec::Identity { n } => {
                monomial_dictionary(*n, 1, false, DEFAULT_MAX_ENTRIES)?
            }
        };
        dict.spec = Some(spec.clone());
        Ok(dict)
    }

    /// The spec this dictionary was built from, if any.
    pub fn spec(&self) -> Option<&DictionarySpec> {
        self.spec.as_ref()
    }

    pub fn entries(&self) -> &[Observable] {
        &self.entries
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn lifted_dim(&self) -> usize {
        self.entries.len()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn index_of(&self, obs: &Observable) -> Option<usize> {
        self.entries.iter().position(|e| e == obs)
    }

    /// `ψ(x)` in dictionary order.
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "dictionary state",
                expected: self.state_dim,
                found: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dictionary argument"));
        }
        let max_depth = self
            .entries
            .iter()
            .filter_map(|e| match e {
                Observable::ComposedOutput { depth, .. } => Some(*depth as usize),
                _ => None,
            })
            .max();
        // f⁰(x), f¹(x), … up to the deepest composition
        let mut iterates = vec![x.clone()];
        if let (Some(depth), Some(sys)) = (max_depth, self.system.as_ref()) {
            for k in 0..depth {
                let next = sys.drift(iterates[k].as_slice());
                iterates.push(next);
            }
        }
        let out = DVector::from_iterator(
            self.entries.len(),
            self.entries.iter().map(|e| match e {
                Observable::Monomial(m) => m.eval(x.as_slice()),
                Observable::Constant => 1.0,
                Observable::ComposedOutput { depth, component } => {
                    let sys = self.system.as_ref().expect("validated on construction");
                    sys.output_raw(iterates[*depth as usize].as_slice())[*component]
                }
            }),
        );
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dictionary value"));
        }
        Ok(out)
    }

    /// Lifts each state into one column of an `n_L × N` matrix.
    pub fn lift_columns(&self, states: &[DVector<f64>], exec: Exec) -> Result<DMatrix<f64>> {
        let cols = exec.try_map(states, |x| self.eval(x))?;
        Ok(if cols.is_empty() {
            DMatrix::zeros(self.lifted_dim(), 0)
        } else {
            DMatrix::from_columns(&cols)
        })
    }

    /// `P_x`: selects the coordinate entries.
    pub fn state_selector(&self) -> Selector {
        Selector::rows(
            &(0..self.state_dim).collect::<Vec<_>>(),
            self.lifted_dim(),
            SelectorKind::StateProjector,
        )
    }

    /// `W_h`: selects the entries that equal the output components.
    pub fn output_selector(&self) -> Selector {
        if self.outputs.is_empty() {
            let mut s = self.state_selector();
            s.kind = SelectorKind::OutputSelector;
            return s;
        }
        let idx: Vec<usize> = self
            .outputs
            .iter()
            .map(|o| self.index_of(o).expect("validated on construction"))
            .collect();
        Selector::rows(&idx, self.lifted_dim(), SelectorKind::OutputSelector)
    }
}

/// The 12-entry dictionary of the oscillator example, with `W_h` and `P_x`.
///
/// Order: `x₁, x₂, x₁², x₂², x₁x₂², x₁²x₂, x₁²x₂², (h∘f)₁, (h∘f)₂, (h∘f∘f)₁,
/// (h∘f∘f)₂, 1`.
pub fn example1_dictionary(params: OscillatorParams) -> Result<(Dictionary, Selector, Selector)> {
    let m = |e: [u32; 2]| Observable::Monomial(Monomial(e.to_vec()));
    let entries = vec![
        m([1, 0]),
        m([0, 1]),
        m([2, 0]),
        m([0, 2]),
        m([1, 2]),
        m([2, 1]),
        m([2, 2]),
        Observable::ComposedOutput {
            depth: 1,
            component: 0,
        },
        Observable::ComposedOutput {
            depth: 1,
            component: 1,
        },
        Observable::ComposedOutput {
            depth: 2,
            component: 0,
        },
        Observable::ComposedOutput {
            depth: 2,
            component: 1,
        },
        Observable::Constant,
    ];
    let outputs = vec![m([2, 0]), m([0, 2])];
    let mut dict = Dictionary::new(entries, 2, outputs, Some(DiscreteSystem::example1(params)))?;
    dict.spec = Some(DictionarySpec::Example1 { params });
    let wh = dict.output_selector();
    let px = dict.state_selector();
    Ok((dict, wh, px))
}

/// All monomials of total degree `1..=max_degree`, graded-lexicographic,
/// with the constant appended last when requested.
pub fn monomial_dictionary(
    n: usize,
    max_degree: u32,
    include_constant: bool,
    limit: usize,
) -> Result<Dictionary> {
    if max_degree < 1 {
        return Err(Error::InvalidArgument(
            "max_degree must be at least 1".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "state dimension must be positive".into(),
        ));
    }
    // C(n + d, d) − 1 nonconstant monomials
    let mut count: u128 = 1;
    for k in 1..=max_degree as u128 {
        count = count.saturating_mul(n as u128 + k) / k;
    }
    let entries_total = (count - 1).saturating_add(include_constant as u128);
    if entries_total > limit as u128 {
        return Err(Error::TooLarge {
            entries: usize::try_from(entries_total).unwrap_or(usize::MAX),
            limit,
        });
    }
    let mut entries: Vec<Observable> = (1..=max_degree)
        .flat_map(|d| Monomial::of_degree(n, d))
        .map(Observable::Monomial)
        .collect();
    if include_constant {
        entries.push(Observable::Constant);
    }
    let mut dict = Dictionary::new(entries, n, Vec::new(), None)?;
    dict.spec = Some(DictionarySpec::Monomial {
        n,
        max_degree,
        include_constant,
        outputs: None,
    });
    Ok(dict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputDictionaryKind {
    Identity,
    /// `(u, sin u)` channel-wise: `u₁…u_m, sin u₁…sin u_m`.
    SinAugmented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDictionarySpec {
    pub kind: InputDictionaryKind,
    #[serde(default = "one")]
    pub m: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputDictionary {
    spec: InputDictionarySpec,
}

impl InputDictionary {
    pub fn new(kind: InputDictionaryKind, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument(
                "input dictionary needs at least one input channel".into(),
            ));
        }
        Ok(InputDictionary {
            spec: InputDictionarySpec { kind, m: input_dim },
        })
    }

    pub fn from_spec(spec: &InputDictionarySpec) -> Result<Self> {
        Self::new(spec.kind, spec.m)
    }

    pub fn spec(&self) -> InputDictionarySpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.m
    }

    pub fn lifted_dim(&self) -> usize {
        match self.spec.kind {
            InputDictionaryKind::Identity => self.spec.m,
            InputDictionaryKind::SinAugmented => 2 * self.spec.m,
        }
    }

    pub fn eval(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.spec.m {
            return Err(Error::DimensionMismatch {
                context: "input dictionary argument",
                expected: self.spec.m,
                found: u.len(),
            });
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("input dictionary argument"));
        }
        Ok(match self.spec.kind {
            InputDictionaryKind::Identity => u.clone(),
            InputDictionaryKind::SinAugmented => DVector::from_iterator(
                self.lifted_dim(),
                u.iter().copied().chain(u.iter().map(|v| v.sin())),
            ),
        })
    }

    pub fn lift_columns(&self, inputs: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let cols = inputs
            .iter()
            .map(|u| self.eval(u))
            .collect::<Result<Vec<_>>>()?;
        Ok(if cols.is_empty() {
            DMatrix::zeros(self.lifted_dim(), 0)
        } else {
            DMatrix::from_columns(&cols)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    OutputSelector,
    StateProjector,
    General,
}

/// A `v × n_L` selection or projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Selector {
    matrix: DMatrix<f64>,
    kind: SelectorKind,
}

impl Selector {
    /// Rows `e_{idx[k]}ᵀ`.
    pub fn rows(idx: &[usize], lifted_dim: usize, kind: SelectorKind) -> Self {
        let mut matrix = DMatrix::zeros(idx.len(), lifted_dim);
        for (r, &c) in idx.iter().enumerate() {
            matrix[(r, c)] = 1.0;
        }
        Selector { matrix, kind }
    }

    /// Wraps an arbitrary matrix. Selector kinds other than
    /// [`SelectorKind::General`] must have canonical-basis rows.
    pub fn new(matrix: DMatrix<f64>, kind: SelectorKind) -> Result<Self> {
        if kind != SelectorKind::General {
            let canonical = matrix.row_iter().all(|row| {
                row.iter().filter(|v| **v == 1.0).count() == 1
                    && row.iter().filter(|v| **v != 0.0).count() == 1
            });
            if !canonical {
                return Err(Error::InvalidArgument(
                    "selector rows must be canonical basis vectors".into(),
                ));
            }
        }
        if !crate::linalg::all_finite(&matrix) {
            return Err(Error::NonFinite("selector"));
        }
        Ok(Selector { matrix, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> SelectorKind {
        self.kind
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}
