//! Exponential-integrator basis functions and the UniPC coefficient systems.
//!
//! `varphi_k(h) = int_0^1 exp((1-r) h) r^(k-1)/(k-1)! dr` drives the noise-prediction
//! updates and `psi_k(h) = int_0^1 exp((r-1) h) r^(k-1)/(k-1)! dr` the data-prediction
//! ones. Both satisfy upward recursions that cancel catastrophically for small `h`,
//! so below [`SERIES_THRESHOLD`] they are summed from their Taylor series instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::Prediction;
use crate::scalar::{factorial, Scalar};

/// Step sizes below this use the Taylor series, above it the recursion.
pub const SERIES_THRESHOLD: f64 = 2.0;
/// Largest basis index `k` accepted by [`varphi`] and [`psi`].
pub const MAX_BASIS_INDEX: usize = 12;
/// Largest system size accepted by [`solve_weights`].
pub const MAX_ORDER: usize = 9;
/// Largest order accepted by [`VaryingCoefficientMatrix::new`].
pub const MAX_VARYING_ORDER: usize = 5;

const MAX_SERIES_TERMS: usize = 400;

fn check_basis_args<T: Scalar>(k: usize, h: T) -> Result<()> {
    if k > MAX_BASIS_INDEX {
        return Err(Error::Range(format!(
            "basis index {k} exceeds {MAX_BASIS_INDEX}"
        )));
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::arg(format!(
            "step h must be positive and finite, got {h}"
        )));
    }
    Ok(())
}

// sum_{j>=0} (sign h)^j / (j+k)!
fn series<T: Scalar>(k: usize, x: T) -> T {
    let mut term = T::one() / factorial::<T>(k);
    let mut sum = term;
    for j in 0..MAX_SERIES_TERMS {
        term = term * x / T::lit((j + k + 1) as f64);
        sum = sum + term;
        if term.abs() <= T::epsilon() * sum.abs() * T::lit(0.25) {
            break;
        }
    }
    sum
}

/// `varphi_k(h)` by its Taylor series `sum_j h^j / (j+k)!`.
pub fn varphi_series<T: Scalar>(k: usize, h: T) -> T {
    series(k, h)
}

/// `varphi_k(h)` by the recursion `varphi_{n+1} = (varphi_n - 1/n!) / h`, `varphi_0 = e^h`.
pub fn varphi_recursion<T: Scalar>(k: usize, h: T) -> T {
    let mut v = h.exp();
    for n in 0..k {
        v = (v - T::one() / factorial::<T>(n)) / h;
    }
    v
}

/// `psi_k(h)` by its Taylor series `sum_j (-h)^j / (j+k)!`.
pub fn psi_series<T: Scalar>(k: usize, h: T) -> T {
    series(k, -h)
}

/// `psi_k(h)` by the recursion `psi_{n+1} = (1/n! - psi_n) / h`, `psi_0 = e^-h`.
pub fn psi_recursion<T: Scalar>(k: usize, h: T) -> T {
    let mut v = (-h).exp();
    for n in 0..k {
        v = (T::one() / factorial::<T>(n) - v) / h;
    }
    v
}

pub fn varphi<T: Scalar>(k: usize, h: T) -> Result<T> {
    check_basis_args(k, h)?;
    Ok(if k == 0 {
        h.exp()
    } else if h < T::lit(SERIES_THRESHOLD) {
        varphi_series(k, h)
    } else {
        varphi_recursion(k, h)
    })
}

pub fn psi<T: Scalar>(k: usize, h: T) -> Result<T> {
    check_basis_args(k, h)?;
    Ok(if k == 0 {
        (-h).exp()
    } else if h < T::lit(SERIES_THRESHOLD) {
        psi_series(k, h)
    } else {
        psi_recursion(k, h)
    })
}

/// The basis matching a parameterization: `varphi` for noise, `psi` for data.
pub fn basis<T: Scalar>(prediction: Prediction, k: usize, h: T) -> Result<T> {
    match prediction {
        Prediction::Noise => varphi(k, h),
        Prediction::Data => psi(k, h),
    }
}

fn check_order(p: usize, max: usize) -> Result<()> {
    if p == 0 || p > max {
        return Err(Error::Range(format!("order {p} outside 1..={max}")));
    }
    Ok(())
}

fn stacked<T: Scalar>(prediction: Prediction, p: usize, h: T) -> Result<Vec<T>> {
    check_order(p, MAX_ORDER)?;
    (1..=p)
        .map(|n| Ok(h.powi(n as i32) * factorial::<T>(n) * basis(prediction, n + 1, h)?))
        .collect()
}

/// `(phi_1(h), ..., phi_p(h))` with `phi_n(h) = h^n n! varphi_{n+1}(h)`.
pub fn phi_vector<T: Scalar>(p: usize, h: T) -> Result<Vec<T>> {
    stacked(Prediction::Noise, p, h)
}

/// `(g_1(h), ..., g_p(h))` with `g_n(h) = h^n n! psi_{n+1}(h)`.
pub fn g_vector<T: Scalar>(p: usize, h: T) -> Result<Vec<T>> {
    stacked(Prediction::Data, p, h)
}

/// Normalizer `B(h)` dividing the coefficient solve; any nonzero `O(h)` choice works.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BhVariant {
    /// `B(h) = h`
    B1,
    /// `B(h) = e^h - 1`
    #[default]
    B2,
}

impl BhVariant {
    pub fn eval<T: Scalar>(self, h: T) -> T {
        match self {
            BhVariant::B1 => h,
            BhVariant::B2 => h.exp_m1(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BhVariant::B1 => "b1",
            BhVariant::B2 => "b2",
        }
    }
}

/// A solved UniPC weight system `R_p(h) w B(h) = phi_p(h)` (or `g_p(h)` for data).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSystem<T> {
    h: T,
    r: Vec<T>,
    bh: BhVariant,
    prediction: Prediction,
    weights: Vec<T>,
}

fn check_nodes<T: Scalar>(r: &[T]) -> Result<()> {
    for (i, &ri) in r.iter().enumerate() {
        if ri == T::zero() || !ri.is_finite() {
            return Err(Error::Singular(format!(
                "r[{i}] = {ri} must be nonzero and finite"
            )));
        }
        if r[..i].contains(&ri) {
            return Err(Error::Singular(format!("duplicate node r[{i}] = {ri}")));
        }
    }
    Ok(())
}

/// Solves for the weights multiplying `D_m / r_m`.
///
/// `R_p(h) = diag(1, h, ..., h^(p-1)) V(r)` with `V` the plain Vandermonde matrix in `r`,
/// so the system actually solved is `V(r) w = (phi_n(h) / (h^(n-1) B(h)))_n`. The right
/// hand side is formed as `h n! varphi_{n+1}(h) / B(h)` without dividing by powers of `h`.
/// Node order does not matter; nodes must be distinct and nonzero.
pub fn solve_weights<T: Scalar>(
    h: T,
    r: &[T],
    bh: BhVariant,
    prediction: Prediction,
) -> Result<CoefficientSystem<T>> {
    let p = r.len();
    check_order(p, MAX_ORDER)?;
    check_nodes(r)?;
    let b = bh.eval(h);
    if b == T::zero() {
        return Err(Error::arg("B(h) vanished"));
    }
    let vander: Matrix<T> = (0..p)
        .map(|k| r.iter().map(|&rm| rm.powi(k as i32)).collect())
        .collect();
    let rhs = (0..p)
        .map(|k| Ok(h * factorial::<T>(k + 1) * basis(prediction, k + 2, h)? / b))
        .collect::<Result<Vec<T>>>()?;
    let weights = linalg::solve(&vander, &rhs)?;
    Ok(CoefficientSystem {
        h,
        r: r.to_vec(),
        bh,
        prediction,
        weights,
    })
}

impl<T: Scalar> CoefficientSystem<T> {
    /// A system with caller-chosen weights, e.g. the fixed `a_1 = 1/2`.
    pub fn with_weights(
        h: T,
        r: &[T],
        bh: BhVariant,
        prediction: Prediction,
        weights: Vec<T>,
    ) -> Result<Self> {
        check_order(r.len(), MAX_ORDER)?;
        check_nodes(r)?;
        if weights.len() != r.len() {
            return Err(Error::arg("weights and nodes differ in length"));
        }
        Ok(Self {
            h,
            r: r.to_vec(),
            bh,
            prediction,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.r.len()
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn nodes(&self) -> &[T] {
        &self.r
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bh(&self) -> BhVariant {
        self.bh
    }

    pub fn prediction(&self) -> Prediction {
        self.prediction
    }

    /// `|R_p(h) w B(h) - phi_p(h)|_1` in the unfactored form.
    pub fn residual_l1(&self) -> Result<T> {
        let p = self.order();
        let b = self.bh.eval(self.h);
        let target = stacked(self.prediction, p, self.h)?;
        Ok((0..p).fold(T::zero(), |acc, k| {
            let row = self
                .r
                .iter()
                .zip(&self.weights)
                .fold(T::zero(), |s, (&rm, &w)| {
                    s + (rm * self.h).powi(k as i32) * w
                });
            acc + (row * b - target[k]).abs()
        }))
    }
}

/// `A_p = C_p^-1` for the varying-coefficient variant, with `C_p[n][m] = r_m^n / (n+1)!`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaryingCoefficientMatrix<T> {
    r: Vec<T>,
    c: Matrix<T>,
    a: Matrix<T>,
}

impl<T: Scalar> VaryingCoefficientMatrix<T> {
    pub fn new(r: &[T]) -> Result<Self> {
        let p = r.len();
        check_order(p, MAX_VARYING_ORDER)?;
        check_nodes(r)?;
        let c: Matrix<T> = (0..p)
            .map(|n| {
                let fact = factorial::<T>(n + 1);
                r.iter().map(|&rm| rm.powi(n as i32) / fact).collect()
            })
            .collect();
        let a = linalg::invert(&c)?;
        Ok(Self {
            r: r.to_vec(),
            c,
            a,
        })
    }

    pub fn order(&self) -> usize {
        self.r.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.r
    }

    pub fn c(&self) -> &[Vec<T>] {
        &self.c
    }

    pub fn a(&self) -> &[Vec<T>] {
        &self.a
    }

    /// Largest entry of `|C_p A_p - I_p|`.
    pub fn identity_defect(&self) -> T {
        let prod = linalg::matmul(&self.c, &self.a);
        let mut worst = T::zero();
        for (i, row) in prod.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let want = if i == j { T::one() } else { T::zero() };
                worst = worst.max((v - want).abs());
            }
        }
        worst
    }

    /// Effective weights on `D_m / r_m`: `w_m = sum_n A[m][n] h basis_{n+1}(h)`.
    ///
    /// Column `n` of `C_p^-1` isolates the `n`-th derivative term, which the exact
    /// solution weights by `h^(n+1) basis_{n+1}(h)`.
    pub fn step_weights(&self, h: T, prediction: Prediction) -> Result<Vec<T>> {
        let p = self.order();
        let coef = (1..=p)
            .map(|n| Ok(h * basis(prediction, n + 1, h)?))
            .collect::<Result<Vec<T>>>()?;
        Ok((0..p)
            .map(|m| (0..p).fold(T::zero(), |acc, n| acc + self.a[m][n] * coef[n]))
            .collect())
    }
}
