//! Lifted Koopman observability and controllability gramians.
//!
//! Finite horizons accumulate the defining sums directly; infinite horizons
//! solve the corresponding Stein equation by doubling.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::edmd::KoopmanModel;
use crate::linalg::{max_abs, spectral_radius, sym_eigen_desc, symmetrize};
use crate::{Error, Result};

/// Stability margin required for infinite-horizon sums.
pub const STABILITY_MARGIN: f64 = 1e-9;

const STEIN_TOL: f64 = 1e-12;
const STEIN_MAX_ITER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Sum over `t = 0..=T`.
    Finite(usize),
    Infinite,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(t) => write!(f, "{t}"),
            Horizon::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" => Ok(Horizon::Infinite),
            other => other.parse::<usize>().map(Horizon::Finite).map_err(|_| {
                Error::InvalidArgument(format!("horizon must be an integer or 'inf', got '{s}'"))
            }),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(t) => s.serialize_u64(*t as u64),
            Horizon::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Horizon::Finite(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianKind {
    Observability,
    Controllability,
}

/// Symmetric gramian with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gramian {
    matrix: DMatrix<f64>,
    kind: GramianKind,
    horizon: Horizon,
    projection: Option<DMatrix<f64>>,
    normalized: bool,
}

impl Gramian {
    /// Symmetrizes `matrix` on construction.
    pub fn new(
        matrix: DMatrix<f64>,
        kind: GramianKind,
        horizon: Horizon,
        projection: Option<DMatrix<f64>>,
        normalized: bool,
    ) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "gramian must be square",
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if !crate::linalg::all_finite(&matrix) {
            return Err(Error::NonFinite("gramian"));
        }
        Ok(Gramian {
            matrix: symmetrize(&matrix),
            kind,
            horizon,
            projection,
            normalized,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> GramianKind {
        self.kind
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn projection(&self) -> Option<&DMatrix<f64>> {
        self.projection.as_ref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Divides by the largest absolute entry. A zero gramian stays zero.
    pub fn normalized(&self) -> Gramian {
        let scale = max_abs(&self.matrix);
        let matrix = if scale > 0.0 {
            &self.matrix / scale
        } else {
            self.matrix.clone()
        };
        Gramian {
            matrix,
            normalized: true,
            ..self.clone()
        }
    }

    pub fn psd_check(&self) -> PsdReport {
        psd_check(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub is_psd: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// PSD iff `λ_min ≥ −1e-8·(1 + λ_max)`.
pub fn psd_check(m: &DMatrix<f64>) -> PsdReport {
    if m.nrows() == 0 {
        return PsdReport {
            is_psd: true,
            lambda_min: 0.0,
            lambda_max: 0.0,
        };
    }
    let (vals, _) = sym_eigen_desc(m);
    let lambda_max = vals[0];
    let lambda_min = vals[vals.len() - 1];
    PsdReport {
        is_psd: lambda_min >= -1e-8 * (1.0 + lambda_max),
        lambda_min,
        lambda_max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteinSide {
    /// `X = Mᵀ X M + Q`
    Left,
    /// `X = M X Mᵀ + Q`
    Right,
}

/// Solves the discrete Stein equation by doubling.
pub fn stein_solve(m: &DMatrix<f64>, q: &DMatrix<f64>, side: SteinSide) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "Stein operator must be square",
            expected: n,
            found: m.ncols(),
        });
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "Stein right-hand side",
            expected: n,
            found: q.nrows(),
        });
    }
    let rho = spectral_radius(m);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { rho });
    }
    let mut x = symmetrize(q);
    let mut mk = m.clone();
    for _ in 0..STEIN_MAX_ITER {
        let delta = match side {
            SteinSide::Left => mk.transpose() * &x * &mk,
            SteinSide::Right => &mk * &x * mk.transpose(),
        };
        x += &delta;
        if !crate::linalg::all_finite(&x) {
            break;
        }
        if max_abs(&delta) < STEIN_TOL {
            return Ok(symmetrize(&x));
        }
        mk = &mk * &mk;
    }
    Err(Error::SteinNonConvergence {
        iterations: STEIN_MAX_ITER,
        rho,
    })
}

fn check_stable(a: &DMatrix<f64>) -> Result<()> {
    let rho = spectral_radius(a);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { rho });
    }
    Ok(())
}

/// `Σ_{t=0..T} (Aᵗ)ᵀ CᵀC Aᵗ` accumulated as `M_{t+1} = M_t A` with `M_0 = C`.
pub fn observability_sum(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    horizon: Horizon,
) -> Result<DMatrix<f64>> {
    match horizon {
        Horizon::Finite(t_max) => {
            let mut mt = c.clone();
            let mut sum = DMatrix::zeros(a.nrows(), a.nrows());
            for t in 0..=t_max {
                sum += mt.transpose() * &mt;
                if t < t_max {
                    mt = &mt * a;
                }
            }
            Ok(symmetrize(&sum))
        }
        Horizon::Infinite => {
            check_stable(a)?;
            stein_solve(a, &(c.transpose() * c), SteinSide::Left)
        }
    }
}

/// `Σ_{j=0..T} Aʲ B Bᵀ (Aʲ)ᵀ` accumulated as `Φ_{j+1} = A Φ_j` with `Φ_0 = B`.
pub fn controllability_sum(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    horizon: Horizon,
) -> Result<DMatrix<f64>> {
    match horizon {
        Horizon::Finite(t_max) => {
            let mut phi = b.clone();
            let mut sum = DMatrix::zeros(a.nrows(), a.nrows());
            for j in 0..=t_max {
                sum += &phi * phi.transpose();
                if j < t_max {
                    phi = a * &phi;
                }
            }
            Ok(symmetrize(&sum))
        }
        Horizon::Infinite => {
            check_stable(a)?;
            stein_solve(a, &(b * b.transpose()), SteinSide::Right)
        }
    }
}

/// Lifted observability gramian `X_o^ψ` of `(K_x, W_h)`.
pub fn observability_gramian(model: &KoopmanModel, horizon: Horizon) -> Result<Gramian> {
    let m = observability_sum(model.k_x(), model.w_h().matrix(), horizon)?;
    Gramian::new(m, GramianKind::Observability, horizon, None, false)
}

/// Lifted controllability gramian `X_c^ψ` of `(K_x, K_u)`.
pub fn controllability_gramian(model: &KoopmanModel, horizon: Horizon) -> Result<Gramian> {
    let k_u = model.k_u().ok_or(Error::MissingInputOperator)?;
    let m = controllability_sum(model.k_x(), k_u, horizon)?;
    Gramian::new(m, GramianKind::Controllability, horizon, None, false)
}

/// `P X Pᵀ`. Projections compose: the recorded projection is `P` times any
/// earlier one.
pub fn project(g: &Gramian, p: &DMatrix<f64>) -> Result<Gramian> {
    if p.ncols() != g.dim() {
        return Err(Error::DimensionMismatch {
            context: "projection columns",
            expected: g.dim(),
            found: p.ncols(),
        });
    }
    let projection = match &g.projection {
        Some(prev) => p * prev,
        None => p.clone(),
    };
    Gramian::new(
        p * &g.matrix * p.transpose(),
        g.kind,
        g.horizon,
        Some(projection),
        g.normalized,
    )
}

/// `Φ` at a given step: `W_h K_xᵗ` or `K_xʲ K_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMapPower {
    pub matrix: DMatrix<f64>,
    pub step: usize,
}

/// `Φ_c = K_xʲ K_u`.
pub fn phi_c(model: &KoopmanModel, j: usize) -> Result<OutputMapPower> {
    let mut m = model.k_u().ok_or(Error::MissingInputOperator)?.clone();
    for _ in 0..j {
        m = model.k_x() * m;
    }
    Ok(OutputMapPower { matrix: m, step: j })
}

/// `Φ^y = W_h K_xᵗ`.
pub fn phi_y(model: &KoopmanModel, t: usize) -> OutputMapPower {
    let mut m = model.w_h().matrix().clone();
    for _ in 0..t {
        m *= model.k_x();
    }
    OutputMapPower { matrix: m, step: t }
}
