//! Multivariate monomials and polynomials in the state.

use serde::{Deserialize, Serialize};

/// Exponent vector `(e₁, …, e_n)` for `x₁^e₁ ⋯ x_n^e_n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn constant(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .fold(1.0, |acc, (e, xi)| acc * xi.powi(*e as i32))
    }

    /// `∂/∂x_i` as `(coefficient, monomial)`; `None` when the derivative is zero.
    pub fn derivative(&self, i: usize) -> Option<(f64, Monomial)> {
        let e = self.0[i];
        if e == 0 {
            return None;
        }
        let mut d = self.0.clone();
        d[i] -= 1;
        Some((e as f64, Monomial(d)))
    }

    /// All exponent vectors of total degree exactly `d` in graded-lexicographic
    /// order (`x₁` powers first).
    pub fn of_degree(n: usize, d: u32) -> Vec<Monomial> {
        fn rec(n: usize, i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
            if i == n - 1 {
                cur[i] = left;
                out.push(Monomial(cur.clone()));
                return;
            }
            for e in (0..=left).rev() {
                cur[i] = e;
                rec(n, i + 1, left - e, cur, out);
            }
            cur[i] = 0;
        }
        let mut out = Vec::new();
        if n > 0 {
            rec(n, 0, d, &mut vec![0; n], &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub mono: Monomial,
}

/// Sparse polynomial `Σ cₖ mₖ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, Monomial)>) -> Self {
        Polynomial {
            terms: terms
                .into_iter()
                .filter(|(c, _)| *c != 0.0)
                .map(|(coef, mono)| Term { coef, mono })
                .collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coef * t.mono.eval(x)).sum()
    }

    /// Exact partial derivative w.r.t. `x_i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .filter_map(|t| {
                    t.mono.derivative(i).map(|(c, mono)| Term {
                        coef: c * t.coef,
                        mono,
                    })
                })
                .collect(),
        }
    }
}
