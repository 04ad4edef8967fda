//! Model-evaluation contract and synthetic analytic models.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

/// Which quantity a model predicts: the noise `eps(x, t)` or the clean data `x0(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    #[default]
    Noise,
    Data,
}

impl Prediction {
    pub fn as_str(self) -> &'static str {
        match self {
            Prediction::Noise => "noise",
            Prediction::Data => "data",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Prediction::Noise => Prediction::Data,
            Prediction::Data => Prediction::Noise,
        }
    }
}

/// Dense state, one real per dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector<T>(Vec<T>);

impl<T: Scalar> StateVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lin_comb(&self, a: T, other: &Self, b: T) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        )
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: T, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (x, &y) in self.0.iter_mut().zip(&other.0) {
            *x = *x + c * y;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.lin_comb(T::one(), other, -T::one())
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn rms(&self) -> T {
        if self.0.is_empty() {
            return T::zero();
        }
        let ss = self.0.iter().fold(T::zero(), |acc, &v| acc + v * v);
        (ss / T::lit(self.0.len() as f64)).sqrt()
    }
}

impl<T> From<Vec<T>> for StateVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

impl<T> std::ops::Index<usize> for StateVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// A deterministic, reentrant evaluator of `eps(x, t)` or `x0(x, t)`.
pub trait Model<T: Scalar>: Send + Sync {
    fn prediction(&self) -> Prediction;

    fn eval(&self, x: &StateVector<T>, t: T) -> Result<StateVector<T>>;
}

impl<T: Scalar, M: Model<T> + ?Sized> Model<T> for &M {
    fn prediction(&self) -> Prediction {
        (**self).prediction()
    }

    fn eval(&self, x: &StateVector<T>, t: T) -> Result<StateVector<T>> {
        (**self).eval(x, t)
    }
}

impl<T: Scalar, M: Model<T> + ?Sized> Model<T> for Box<M> {
    fn prediction(&self) -> Prediction {
        (**self).prediction()
    }

    fn eval(&self, x: &StateVector<T>, t: T) -> Result<StateVector<T>> {
        (**self).eval(x, t)
    }
}

/// Counts every evaluation of the wrapped model; safe to share across threads.
#[derive(Debug)]
pub struct Counted<M> {
    inner: M,
    count: AtomicUsize,
}

impl<M> Counted<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn eval_count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<T: Scalar, M: Model<T>> Model<T> for Counted<M> {
    fn prediction(&self) -> Prediction {
        self.inner.prediction()
    }

    fn eval(&self, x: &StateVector<T>, t: T) -> Result<StateVector<T>> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.eval(x, t)
    }
}

/// Re-expresses a model in the other parameterization via `x = alpha x0 + sigma eps`.
/// Each call costs exactly one call of the wrapped model.
#[derive(Debug, Clone)]
pub struct Converted<M, T> {
    inner: M,
    schedule: NoiseSchedule<T>,
}

/// Wraps `model` so it predicts the opposite quantity.
pub fn convert_parameterization<T: Scalar, M: Model<T>>(
    model: M,
    schedule: &NoiseSchedule<T>,
) -> Converted<M, T> {
    Converted {
        inner: model,
        schedule: *schedule,
    }
}

impl<M, T> Converted<M, T> {
    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<T: Scalar, M: Model<T>> Model<T> for Converted<M, T> {
    fn prediction(&self) -> Prediction {
        self.inner.prediction().flipped()
    }

    fn eval(&self, x: &StateVector<T>, t: T) -> Result<StateVector<T>> {
        let out = self.inner.eval(x, t)?;
        let v = self.schedule.alpha_sigma_lambda(t)?;
        let (num, den) = match self.inner.prediction() {
            // x0 = (x - sigma eps) / alpha
            Prediction::Noise => (v.sigma, v.alpha),
            // eps = (x - alpha x0) / sigma
            Prediction::Data => (v.alpha, v.sigma),
        };
        let inv = T::one() / den;
        Ok(x.lin_comb(inv, &out, -num * inv))
    }
}

/// Synthetic noise-prediction models with known behaviour.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticFamily<T> {
    /// `eps_j(lambda) = sum_k coeffs[j][k] lambda^k`, independent of `x`.
    XFreePoly { coeffs: Vec<Vec<T>> },
    /// `eps_j(x, t) = gains[j] * x_j`.
    LinearInX { gains: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel<T> {
    family: SyntheticFamily<T>,
    schedule: NoiseSchedule<T>,
}

impl<T: Scalar> SyntheticModel<T> {
    pub fn new(family: SyntheticFamily<T>, schedule: NoiseSchedule<T>) -> Result<Self> {
        let dim = match &family {
            SyntheticFamily::XFreePoly { coeffs } => {
                if coeffs.iter().any(Vec::is_empty) {
                    return Err(Error::arg("x-free-poly needs at least one coefficient"));
                }
                coeffs.len()
            }
            SyntheticFamily::LinearInX { gains } => gains.len(),
        };
        if dim == 0 {
            return Err(Error::arg("synthetic model needs dim >= 1"));
        }
        Ok(Self { family, schedule })
    }

    /// Same polynomial in every dimension.
    pub fn x_free_poly(coeffs: &[T], dim: usize, schedule: NoiseSchedule<T>) -> Result<Self> {
        Self::new(
            SyntheticFamily::XFreePoly {
                coeffs: vec![coeffs.to_vec(); dim],
            },
            schedule,
        )
    }

    /// Same gain in every dimension.
    pub fn linear_in_x(gain: T, dim: usize, schedule: NoiseSchedule<T>) -> Result<Self> {
        Self::new(
            SyntheticFamily::LinearInX {
                gains: vec![gain; dim],
            },
            schedule,
        )
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            SyntheticFamily::XFreePoly { coeffs } => coeffs.len(),
            SyntheticFamily::LinearInX { gains } => gains.len(),
        }
    }

    pub fn family(&self) -> &SyntheticFamily<T> {
        &self.family
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.schedule
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self.family, SyntheticFamily::XFreePoly { .. })
    }

    /// Exact `x_t` from `x_s` (`t < s`) for the x-free family:
    /// `x_t = (alpha_t/alpha_s) x_s - alpha_t int_{lambda_s}^{lambda_t} e^-l eps(l) dl`,
    /// with `int l^k e^-l dl = -e^-l sum_{j<=k} (k!/j!) l^j`.
    pub fn exact_solution_xfree(&self, x_s: &StateVector<T>, s: T, t: T) -> Result<StateVector<T>> {
        let SyntheticFamily::XFreePoly { coeffs } = &self.family else {
            return Err(Error::arg(
                "closed-form solution needs the x-free-poly family",
            ));
        };
        if x_s.dim() != coeffs.len() {
            return Err(Error::arg(format!(
                "state has dim {} but model has dim {}",
                x_s.dim(),
                coeffs.len()
            )));
        }
        if t > s {
            return Err(Error::arg(
                "exact solution runs backward in time: need t <= s",
            ));
        }
        let vs = self.schedule.alpha_sigma_lambda(s)?;
        let vt = self.schedule.alpha_sigma_lambda(t)?;
        let ratio = (self.schedule.log_alpha(t)? - self.schedule.log_alpha(s)?).exp();
        let out = x_s
            .iter()
            .zip(coeffs)
            .map(|(&x, c)| {
                let integral = antiderivative(c, vt.lambda) - antiderivative(c, vs.lambda);
                ratio * x - vt.alpha * integral
            })
            .collect();
        Ok(StateVector(out))
    }
}

// Antiderivative of sum_k c_k l^k e^-l.
fn antiderivative<T: Scalar>(c: &[T], l: T) -> T {
    let mut total = T::zero();
    for (k, &ck) in c.iter().enumerate() {
        // sum_{j<=k} k!/j! l^j, Horner from the top: ((l + k) l + k(k-1)) ...
        let mut acc = T::one();
        for j in (0..k).rev() {
            acc = acc * l + T::lit((j + 1..=k).map(|v| v as f64).product());
        }
        total = total + ck * acc;
    }
    -(-l).exp() * total
}

impl<T: Scalar> Model<T> for SyntheticModel<T> {
    fn prediction(&self) -> Prediction {
        Prediction::Noise
    }

    fn eval(&self, x: &StateVector<T>, t: T) -> Result<StateVector<T>> {
        if x.dim() != self.dim() {
            return Err(Error::arg(format!(
                "state has dim {} but model has dim {}",
                x.dim(),
                self.dim()
            )));
        }
        Ok(match &self.family {
            SyntheticFamily::XFreePoly { coeffs } => {
                let l = self.schedule.lambda(t)?;
                StateVector(
                    coeffs
                        .iter()
                        .map(|c| c.iter().rev().fold(T::zero(), |acc, &ck| acc * l + ck))
                        .collect(),
                )
            }
            SyntheticFamily::LinearInX { gains } => {
                StateVector(x.iter().zip(gains).map(|(&xi, &g)| g * xi).collect())
            }
        })
    }
}

/// Either one value shared by every dimension or one per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDim<V> {
    Shared(V),
    Each(Vec<V>),
}

impl<V: Clone> PerDim<V> {
    fn expand(&self, dim: usize) -> Result<Vec<V>> {
        match self {
            PerDim::Shared(v) => Ok(vec![v.clone(); dim]),
            PerDim::Each(vs) if vs.len() == dim => Ok(vs.clone()),
            PerDim::Each(vs) => Err(Error::Config(format!(
                "{} per-dimension entries for dim {dim}",
                vs.len()
            ))),
        }
    }
}

/// JSON form of a synthetic model, e.g.
/// `{"family": "x-free-poly", "coeffs": [0.3, -1.2, 0.5], "dim": 4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    XFreePoly {
        coeffs: PerDim<Vec<f64>>,
        dim: usize,
    },
    LinearInX {
        kappa: PerDim<f64>,
        dim: usize,
    },
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::XFreePoly { dim, .. } | ModelSpec::LinearInX { dim, .. } => *dim,
        }
    }

    pub fn build<T: Scalar>(&self, schedule: NoiseSchedule<T>) -> Result<SyntheticModel<T>> {
        let family = match self {
            ModelSpec::XFreePoly { coeffs, dim } => SyntheticFamily::XFreePoly {
                coeffs: coeffs
                    .expand(*dim)?
                    .into_iter()
                    .map(|c| c.into_iter().map(T::lit).collect())
                    .collect(),
            },
            ModelSpec::LinearInX { kappa, dim } => SyntheticFamily::LinearInX {
                gains: kappa.expand(*dim)?.into_iter().map(T::lit).collect(),
            },
        };
        SyntheticModel::new(family, schedule)
    }
}

/// Dynamic thresholding parameters for data-prediction outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholding {
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_ratio() -> f64 {
    0.995
}

fn default_floor() -> f64 {
    1.0
}

impl Default for Thresholding {
    fn default() -> Self {
        Self {
            ratio: default_ratio(),
            floor: default_floor(),
        }
    }
}

impl Thresholding {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.5 && self.ratio <= 1.0) {
            return Err(Error::arg(format!(
                "threshold ratio {} outside (0.5, 1]",
                self.ratio
            )));
        }
        if !(self.floor >= 1.0) {
            return Err(Error::arg(format!(
                "threshold floor {} below 1",
                self.floor
            )));
        }
        Ok(())
    }

    pub fn apply<T: Scalar>(&self, x0: &StateVector<T>) -> Result<StateVector<T>> {
        dynamic_threshold(x0, T::lit(self.ratio), T::lit(self.floor))
    }
}

/// Clips to `[-s, s]` and divides by `s`, where `s` is the larger of `floor` and the
/// nearest-rank `ratio`-quantile of `|x0|`.
pub fn dynamic_threshold<T: Scalar>(
    x0: &StateVector<T>,
    ratio: T,
    floor: T,
) -> Result<StateVector<T>> {
    if x0.dim() == 0 {
        return Err(Error::arg("cannot threshold an empty vector"));
    }
    if !(ratio > T::lit(0.5) && ratio <= T::one()) || !(floor >= T::one()) {
        return Err(Error::arg(
            "threshold needs ratio in (0.5, 1] and floor >= 1",
        ));
    }
    let mut mags: Vec<T> = x0.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = mags.len();
    let rank = (ratio * T::lit(n as f64))
        .ceil()
        .to_usize()
        .unwrap_or(n)
        .clamp(1, n);
    let s = mags[rank - 1].max(floor);
    Ok(x0.map(|v| v.max(-s).min(s) / s))
}
