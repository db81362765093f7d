//! Balanced realization of the lifted model and balanced truncation.
//!
//! With `S = X_c^{1/2}` and `S X_o S = U Σ² Uᵀ`, the balancing pair is
//! `T⁻¹ = S U Σ^{-1/2}` and `T = Σ^{1/2} Uᵀ S⁻¹`, which makes both
//! `T X_c Tᵀ` and `T⁻ᵀ X_o T⁻¹` equal to `Σ`.

use nalgebra::{DMatrix, DVector};

use crate::dictionary::{Dictionary, InputDictionary};
use crate::dynsys::InputSignal;
use crate::edmd::KoopmanModel;
use crate::exec::Exec;
use crate::gramians::{psd_check, Gramian, GramianKind};
use crate::linalg::{fix_column_signs, max_abs, spectral_radius, sym_eigen_desc};
use crate::{Error, Result};

/// Condition number of `X_c` above which it is regularized.
pub const MAX_CONDITION: f64 = 1e12;
pub const DEFAULT_EPS_REG: f64 = 1e-10;
/// Hankel singular values below this fraction of `σ₁` leave the realization.
pub const HSV_REL_CUTOFF: f64 = 1e-14;

/// `Q Λ^{1/2} Qᵀ` with negative eigenvalues clipped to zero.
pub fn sqrt_psd(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let report = psd_check(x);
    if !report.is_psd {
        return Err(Error::NotPsd {
            lambda_min: report.lambda_min,
            lambda_max: report.lambda_max,
        });
    }
    let (vals, vecs) = sym_eigen_desc(x);
    let root = vals.map(|v| v.max(0.0).sqrt());
    Ok(&vecs * DMatrix::from_diagonal(&root) * vecs.transpose())
}

/// Square roots of the eigenvalues of `X_c X_o`, nonincreasing.
pub fn hankel_singular_values(xc: &DMatrix<f64>, xo: &DMatrix<f64>) -> Result<DVector<f64>> {
    if xc.shape() != xo.shape() || xc.nrows() != xc.ncols() {
        return Err(Error::DimensionMismatch {
            context: "gramian pair",
            expected: xc.nrows(),
            found: xo.nrows(),
        });
    }
    let s = sqrt_psd(xc)?;
    if !psd_check(xo).is_psd {
        let r = psd_check(xo);
        return Err(Error::NotPsd {
            lambda_min: r.lambda_min,
            lambda_max: r.lambda_max,
        });
    }
    let (vals, _) = sym_eigen_desc(&(&s * xo * &s));
    Ok(vals.map(|v| v.max(0.0).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BalanceOptions {
    /// Overrides [`DEFAULT_EPS_REG`].
    pub eps_reg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedRealization {
    /// `k × n_L`, `k` the number of retained Hankel singular values.
    pub t: DMatrix<f64>,
    /// `n_L × k`.
    pub t_inv: DMatrix<f64>,
    /// All `n_L` Hankel singular values, nonincreasing.
    pub hsv: DVector<f64>,
    pub a_eta: DMatrix<f64>,
    pub b_eta: Option<DMatrix<f64>>,
    pub c_eta: DMatrix<f64>,
    pub regularization_used: f64,
    /// Number of trailing Hankel singular values below the cutoff.
    pub truncated: usize,
}

impl BalancedRealization {
    pub fn order(&self) -> usize {
        self.a_eta.nrows()
    }

    /// `X_c` as balanced, including any regularization.
    pub fn regularized_xc(&self, xc: &DMatrix<f64>) -> DMatrix<f64> {
        regularize(xc, self.regularization_used)
    }
}

fn regularize(xc: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    if eps == 0.0 {
        return xc.clone();
    }
    let n = xc.nrows();
    xc + DMatrix::identity(n, n) * (eps * xc.trace() / n as f64)
}

/// Balances the lifted model `(K_x, K_u, W_h)` given its gramian pair.
pub fn balance(
    model: &KoopmanModel,
    xc: &Gramian,
    xo: &Gramian,
    opts: BalanceOptions,
) -> Result<BalancedRealization> {
    if xc.kind() != GramianKind::Controllability || xo.kind() != GramianKind::Observability {
        return Err(Error::InvalidArgument(
            "balance expects a controllability and an observability gramian".into(),
        ));
    }
    if xc.projection().is_some()
        || xo.projection().is_some()
        || xc.is_normalized()
        || xo.is_normalized()
    {
        return Err(Error::InvalidArgument(
            "balance needs lifted, unprojected, unnormalized gramians".into(),
        ));
    }
    balance_matrices(
        model.k_x(),
        model.k_u(),
        model.w_h().matrix(),
        xc.matrix(),
        xo.matrix(),
        opts,
    )
}

/// [`balance`] on raw matrices.
pub fn balance_matrices(
    a: &DMatrix<f64>,
    b: Option<&DMatrix<f64>>,
    c: &DMatrix<f64>,
    xc: &DMatrix<f64>,
    xo: &DMatrix<f64>,
    opts: BalanceOptions,
) -> Result<BalancedRealization> {
    let n = a.nrows();
    for (ctx, m) in [("X_c", xc), ("X_o", xo)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: ctx,
                expected: n,
                found: m.nrows(),
            });
        }
    }
    for m in [xc, xo] {
        let r = psd_check(m);
        if !r.is_psd {
            return Err(Error::NotPsd {
                lambda_min: r.lambda_min,
                lambda_max: r.lambda_max,
            });
        }
    }
    if max_abs(xc) == 0.0 || max_abs(xc) < f64::MIN_POSITIVE {
        return Err(Error::ZeroGramian);
    }

    let (cvals, _) = sym_eigen_desc(xc);
    let cond = if cvals[n - 1] > 0.0 {
        cvals[0] / cvals[n - 1]
    } else {
        f64::INFINITY
    };
    let eps = if cond > MAX_CONDITION {
        opts.eps_reg.unwrap_or(DEFAULT_EPS_REG)
    } else {
        0.0
    };
    let xc_reg = regularize(xc, eps);
    let (vals, vecs) = sym_eigen_desc(&xc_reg);
    if vals[n - 1] <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "X_c is singular (condition {cond:e}); use a positive eps_reg"
        )));
    }
    let s = &vecs * DMatrix::from_diagonal(&vals.map(f64::sqrt)) * vecs.transpose();
    let s_inv = &vecs * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt())) * vecs.transpose();

    let (sig2, mut u) = sym_eigen_desc(&(&s * xo * &s));
    fix_column_signs(&mut u);
    let hsv = sig2.map(|v| v.max(0.0).sqrt());
    let sigma1 = hsv[0];
    if sigma1 == 0.0 {
        return Err(Error::InvalidArgument(
            "all Hankel singular values are zero".into(),
        ));
    }
    let k = hsv
        .iter()
        .take_while(|&&v| v >= HSV_REL_CUTOFF * sigma1)
        .count();
    let uk = u.columns(0, k);
    let sk = hsv.rows(0, k);
    let t_inv = &s * uk * DMatrix::from_diagonal(&sk.map(|v| 1.0 / v.sqrt()));
    let t = DMatrix::from_diagonal(&sk.map(f64::sqrt)) * uk.transpose() * &s_inv;

    let a_eta = &t * a * &t_inv;
    let b_eta = b.map(|b| &t * b);
    let c_eta = c * &t_inv;
    Ok(BalancedRealization {
        t,
        t_inv,
        hsv,
        a_eta,
        b_eta,
        c_eta,
        regularization_used: eps,
        truncated: n - k,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub order: usize,
    pub a_r: DMatrix<f64>,
    pub b_r: Option<DMatrix<f64>>,
    pub c_r: DMatrix<f64>,
    /// First `r` rows of `T`; maps `ψ(x₀)` to `η₀`.
    pub lift_in: DMatrix<f64>,
    pub bound_upper: f64,
    pub bound_lower: f64,
    /// Set when the balanced model is not stable, so the bound is not guaranteed.
    pub advisory_only: bool,
}

/// Leading `r` balanced coordinates with the `[σ_{r+1}, 2 Σ_{i>r} σ_i]` bounds.
pub fn truncate(bal: &BalancedRealization, r: usize) -> Result<ReducedModel> {
    let k = bal.order();
    if r < 1 || r > k {
        return Err(Error::InvalidArgument(format!(
            "reduced order must be in 1..={k}, got {r}"
        )));
    }
    let tail = bal.hsv.rows(r, bal.hsv.len() - r);
    let bound_upper = 2.0 * tail.sum();
    let bound_lower = if r < bal.hsv.len() { bal.hsv[r] } else { 0.0 };
    Ok(ReducedModel {
        order: r,
        a_r: bal.a_eta.view((0, 0), (r, r)).clone_owned(),
        b_r: bal.b_eta.as_ref().map(|b| b.rows(0, r).clone_owned()),
        c_r: bal.c_eta.columns(0, r).clone_owned(),
        lift_in: bal.t.rows(0, r).clone_owned(),
        bound_upper,
        bound_lower,
        advisory_only: spectral_radius(&bal.a_eta) >= 1.0,
    })
}

impl ReducedModel {
    /// `η_{t+1} = A_r η_t + B_r v_t`, `y_t = C_r η_t` for `t = 0..=horizon`,
    /// with `v_t` already lifted (`None` entries are zero input).
    pub fn simulate_lifted(
        &self,
        eta0: &DVector<f64>,
        lifted_inputs: &[DVector<f64>],
        horizon: usize,
    ) -> Result<Vec<DVector<f64>>> {
        if horizon < 1 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if eta0.len() != self.order {
            return Err(Error::DimensionMismatch {
                context: "reduced initial state",
                expected: self.order,
                found: eta0.len(),
            });
        }
        let mut eta = eta0.clone();
        let mut out = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            out.push(&self.c_r * &eta);
            if t == horizon {
                break;
            }
            let mut next = &self.a_r * &eta;
            if let (Some(b), Some(v)) = (&self.b_r, lifted_inputs.get(t)) {
                if v.len() != b.ncols() {
                    return Err(Error::DimensionMismatch {
                        context: "reduced lifted input",
                        expected: b.ncols(),
                        found: v.len(),
                    });
                }
                next += b * v;
            }
            eta = next;
        }
        Ok(out)
    }
}

/// Reduced-model outputs from `η₀ = lift_in · ψ(x₀)` under `input`.
pub fn simulate_reduced(
    rm: &ReducedModel,
    x0: &DVector<f64>,
    dict: &Dictionary,
    idict: Option<&InputDictionary>,
    input: &InputSignal,
    horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let psi0 = dict.eval(x0)?;
    if psi0.len() != rm.lift_in.ncols() {
        return Err(Error::DimensionMismatch {
            context: "dictionary vs reduced model lift",
            expected: rm.lift_in.ncols(),
            found: psi0.len(),
        });
    }
    let eta0 = &rm.lift_in * psi0;
    let lifted: Vec<DVector<f64>> = match (idict, &rm.b_r) {
        (Some(id), Some(_)) => (0..horizon)
            .map(|t| id.eval(&input.at(t, id.input_dim())?))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    rm.simulate_lifted(&eta0, &lifted, horizon)
}

/// Peak output error `max_t ‖y_t − y_{r,t}‖₂` between the full balanced
/// realization and its order-`r` truncation, both started at rest, for each
/// lifted input sequence.
pub fn reduction_error_sweep(
    bal: &BalancedRealization,
    r: usize,
    input_sequences: &[Vec<DVector<f64>>],
    exec: Exec,
) -> Result<Vec<f64>> {
    let full = truncate(bal, bal.order())?;
    let reduced = truncate(bal, r)?;
    exec.try_map(input_sequences, |inputs| -> Result<f64> {
        let horizon = inputs.len().max(1);
        let y_full = full.simulate_lifted(&DVector::zeros(full.order), inputs, horizon)?;
        let y_red = reduced.simulate_lifted(&DVector::zeros(r), inputs, horizon)?;
        Ok(y_full
            .iter()
            .zip(&y_red)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    })
}
