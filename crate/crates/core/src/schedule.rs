//! Variance-preserving noise schedules and discretization grids.
//!
//! A schedule maps time `t` to `(alpha_t, sigma_t)` with `alpha^2 + sigma^2 = 1`
//! and to the half log-SNR `lambda_t = log(alpha_t / sigma_t)`, which is strictly
//! decreasing in `t`. Solvers step in `lambda`, so the inverse map `t(lambda)` and
//! grid construction live here too.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Schedule family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind<T> {
    /// Linear `beta(t) = beta_min + (beta_max - beta_min) t`.
    VpLinear { beta_min: T, beta_max: T },
    /// Cosine schedule with offset `s`.
    VpCosine { s: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule<T> {
    kind: ScheduleKind<T>,
    t_start: T,
    t_end: T,
}

/// Evaluated schedule quantities at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleValues<T> {
    pub alpha: T,
    pub sigma: T,
    pub lambda: T,
}

impl<T: Scalar> NoiseSchedule<T> {
    pub fn new(kind: ScheduleKind<T>, t_start: T, t_end: T) -> Result<Self> {
        if !(t_end > T::zero() && t_start > t_end) {
            return Err(Error::arg(format!(
                "need 0 < t_end < t_start, got t_end={t_end}, t_start={t_start}"
            )));
        }
        match kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                if !(beta_min > T::zero() && beta_max > beta_min) {
                    return Err(Error::arg("vp-linear needs 0 < beta_min < beta_max"));
                }
            }
            ScheduleKind::VpCosine { s } => {
                if !(s >= T::zero()) {
                    return Err(Error::arg("vp-cosine needs s >= 0"));
                }
                if !(t_start < T::one()) {
                    return Err(Error::arg(
                        "vp-cosine needs t_start < 1 (alpha vanishes at t = 1)",
                    ));
                }
            }
        }
        Ok(Self {
            kind,
            t_start,
            t_end,
        })
    }

    /// VP-linear with `beta_min = 0.1`, `beta_max = 20` on `[1e-3, 1]`.
    pub fn vp_linear_default() -> Self {
        Self {
            kind: ScheduleKind::VpLinear {
                beta_min: T::lit(0.1),
                beta_max: T::lit(20.0),
            },
            t_start: T::one(),
            t_end: T::lit(1e-3),
        }
    }

    /// VP-cosine with `s = 0.008` on `[1e-3, 0.9946]`.
    pub fn vp_cosine_default() -> Self {
        Self {
            kind: ScheduleKind::VpCosine { s: T::lit(0.008) },
            t_start: T::lit(0.9946),
            t_end: T::lit(1e-3),
        }
    }

    pub fn kind(&self) -> ScheduleKind<T> {
        self.kind
    }

    pub fn t_start(&self) -> T {
        self.t_start
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    fn check_time(&self, t: T) -> Result<()> {
        if t >= self.t_end && t <= self.t_start {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "t",
                value: t.to_f64_lossy(),
                lo: self.t_end.to_f64_lossy(),
                hi: self.t_start.to_f64_lossy(),
            })
        }
    }

    // log alpha_t without range checks.
    fn log_alpha_raw(&self, t: T) -> T {
        let half = T::lit(0.5);
        match self.kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                -T::lit(0.25) * t * t * (beta_max - beta_min) - half * t * beta_min
            }
            ScheduleKind::VpCosine { s } => {
                let w = T::FRAC_PI_2() / (T::one() + s);
                ((t + s) * w).cos().ln() - (s * w).cos().ln()
            }
        }
    }

    // d log alpha_t / dt without range checks.
    fn dlog_alpha_raw(&self, t: T) -> T {
        let half = T::lit(0.5);
        match self.kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                -half * (beta_min + (beta_max - beta_min) * t)
            }
            ScheduleKind::VpCosine { s } => {
                let w = T::FRAC_PI_2() / (T::one() + s);
                -w * ((t + s) * w).tan()
            }
        }
    }

    fn values_raw(&self, t: T) -> ScheduleValues<T> {
        let log_alpha = self.log_alpha_raw(t);
        // sigma^2 = 1 - alpha^2 = -expm1(2 log alpha), accurate as t -> 0
        let sigma2 = -(log_alpha + log_alpha).exp_m1();
        let log_sigma = T::lit(0.5) * sigma2.ln();
        ScheduleValues {
            alpha: log_alpha.exp(),
            sigma: sigma2.sqrt(),
            lambda: log_alpha - log_sigma,
        }
    }

    /// `(alpha_t, sigma_t, lambda_t)` at `t` in `[t_end, t_start]`.
    pub fn alpha_sigma_lambda(&self, t: T) -> Result<ScheduleValues<T>> {
        self.check_time(t)?;
        Ok(self.values_raw(t))
    }

    pub fn log_alpha(&self, t: T) -> Result<T> {
        self.check_time(t)?;
        Ok(self.log_alpha_raw(t))
    }

    pub fn lambda(&self, t: T) -> Result<T> {
        Ok(self.alpha_sigma_lambda(t)?.lambda)
    }

    /// Half log-SNR at `t_start` (smallest) and `t_end` (largest).
    pub fn lambda_range(&self) -> (T, T) {
        (
            self.values_raw(self.t_start).lambda,
            self.values_raw(self.t_end).lambda,
        )
    }

    /// Drift `f(t) = d log alpha / dt` and squared diffusion
    /// `g^2(t) = d sigma^2/dt - 2 f(t) sigma^2`, from analytic derivatives.
    pub fn drift_diffusion(&self, t: T) -> Result<(T, T)> {
        self.check_time(t)?;
        let f = self.dlog_alpha_raw(t);
        let v = self.values_raw(t);
        let a2 = v.alpha * v.alpha;
        let s2 = v.sigma * v.sigma;
        let two = T::lit(2.0);
        // d sigma^2 / dt = -2 alpha^2 f under alpha^2 + sigma^2 = 1
        let dsigma2 = -two * a2 * f;
        Ok((f, dsigma2 - two * f * s2))
    }

    fn check_lambda(&self, lambda: T) -> Result<()> {
        let (lo, hi) = self.lambda_range();
        // allow a few ulps of slack at the ends for round-tripped grid values
        let slack = T::lit(64.0) * T::epsilon() * lo.abs().max(hi.abs()).max(T::one());
        if lambda >= lo - slack && lambda <= hi + slack {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "lambda",
                value: lambda.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            })
        }
    }

    /// Inverse of `lambda(t)`. VP-linear uses its closed-form quadratic root,
    /// other families bisect.
    pub fn t_of_lambda(&self, lambda: T) -> Result<T> {
        self.check_lambda(lambda)?;
        let (lo, hi) = self.lambda_range();
        if lambda == hi {
            return Ok(self.t_end);
        }
        if lambda == lo {
            return Ok(self.t_start);
        }
        let t = match self.kind {
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                // -2 log alpha = softplus(-2 lambda); solve the quadratic in t stably
                let two = T::lit(2.0);
                let softplus = softplus(-two * lambda);
                let d = beta_max - beta_min;
                let tmp = two * d * softplus;
                tmp / ((beta_min * beta_min + tmp).sqrt() + beta_min) / d
            }
            ScheduleKind::VpCosine { .. } => self.bisect_lambda(lambda),
        };
        Ok(t.max(self.t_end).min(self.t_start))
    }

    /// Safeguarded bisection for `t(lambda)`, usable for every family.
    pub fn t_of_lambda_bisect(&self, lambda: T) -> Result<T> {
        self.check_lambda(lambda)?;
        Ok(self.bisect_lambda(lambda))
    }

    fn bisect_lambda(&self, lambda: T) -> T {
        let tol = T::lit(1e-13).max(T::epsilon());
        // lambda is decreasing in t: lambda(lo_t) >= lambda >= lambda(hi_t)
        let (mut lo_t, mut hi_t) = (self.t_end, self.t_start);
        for _ in 0..200 {
            let mid = lo_t + (hi_t - lo_t) * T::lit(0.5);
            if mid <= lo_t || mid >= hi_t || hi_t - lo_t < tol {
                break;
            }
            if self.values_raw(mid).lambda > lambda {
                lo_t = mid;
            } else {
                hi_t = mid;
            }
        }
        // linear interpolation inside the final bracket
        let l_lo = self.values_raw(lo_t).lambda;
        let l_hi = self.values_raw(hi_t).lambda;
        if l_lo == l_hi {
            lo_t
        } else {
            lo_t + (hi_t - lo_t) * (l_lo - lambda) / (l_lo - l_hi)
        }
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// How grid points are spaced between `t_start` and `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipKind {
    #[default]
    UniformLambda,
    UniformTime,
    QuadraticTime,
}

/// Decreasing times `t_0 = t_start > ... > t_M = t_end` with their half log-SNRs.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    times: Vec<T>,
    lambdas: Vec<T>,
    skip: SkipKind,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(sched: &NoiseSchedule<T>, steps: usize, skip: SkipKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("time grid needs at least one step"));
        }
        let m = T::lit(steps as f64);
        let (t0, t1) = (sched.t_start(), sched.t_end());
        let (times, lambdas) = match skip {
            SkipKind::UniformLambda => {
                let (l0, l1) = sched.lambda_range();
                let lambdas: Vec<T> = (0..=steps)
                    .map(|i| match i {
                        0 => l0,
                        i if i == steps => l1,
                        i => l0 + (l1 - l0) * T::lit(i as f64) / m,
                    })
                    .collect();
                let times = lambdas
                    .iter()
                    .map(|&l| sched.t_of_lambda(l))
                    .collect::<Result<Vec<_>>>()?;
                (times, lambdas)
            }
            SkipKind::UniformTime | SkipKind::QuadraticTime => {
                let times: Vec<T> = (0..=steps)
                    .map(|i| {
                        let frac = T::lit(i as f64) / m;
                        match (i, skip) {
                            (0, _) => t0,
                            (i, _) if i == steps => t1,
                            (_, SkipKind::UniformTime) => t0 - (t0 - t1) * frac,
                            _ => {
                                let (a, b) = (t0.sqrt(), t1.sqrt());
                                let r = a - (a - b) * frac;
                                r * r
                            }
                        }
                    })
                    .collect();
                let lambdas = times
                    .iter()
                    .map(|&t| sched.lambda(t))
                    .collect::<Result<Vec<_>>>()?;
                (times, lambdas)
            }
        };
        let grid = Self {
            times,
            lambdas,
            skip,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        for w in self.times.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::arg("grid times must be strictly decreasing"));
            }
        }
        for w in self.lambdas.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::arg("grid lambdas must be strictly increasing"));
            }
        }
        Ok(())
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn skip(&self) -> SkipKind {
        self.skip
    }

    /// Step size `h_i = lambda_i - lambda_{i-1}` for `i` in `1..=M`.
    pub fn h(&self, i: usize) -> T {
        self.lambdas[i] - self.lambdas[i - 1]
    }
}

/// JSON form of a schedule, e.g.
/// `{"kind": "vp-linear", "beta_min": 0.1, "beta_max": 20.0, "t_start": 1.0, "t_end": 0.001}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    VpLinear {
        #[serde(default = "defaults::beta_min")]
        beta_min: f64,
        #[serde(default = "defaults::beta_max")]
        beta_max: f64,
        #[serde(default = "defaults::one")]
        t_start: f64,
        #[serde(default = "defaults::t_end")]
        t_end: f64,
    },
    VpCosine {
        #[serde(default = "defaults::cosine_s")]
        s: f64,
        #[serde(default = "defaults::cosine_t_start")]
        t_start: f64,
        #[serde(default = "defaults::t_end")]
        t_end: f64,
    },
}

mod defaults {
    pub fn beta_min() -> f64 {
        0.1
    }
    pub fn beta_max() -> f64 {
        20.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn t_end() -> f64 {
        1e-3
    }
    pub fn cosine_s() -> f64 {
        0.008
    }
    pub fn cosine_t_start() -> f64 {
        0.9946
    }
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::VpLinear {
            beta_min: defaults::beta_min(),
            beta_max: defaults::beta_max(),
            t_start: defaults::one(),
            t_end: defaults::t_end(),
        }
    }
}

impl ScheduleSpec {
    pub fn build<T: Scalar>(&self) -> Result<NoiseSchedule<T>> {
        match *self {
            ScheduleSpec::VpLinear {
                beta_min,
                beta_max,
                t_start,
                t_end,
            } => NoiseSchedule::new(
                ScheduleKind::VpLinear {
                    beta_min: T::lit(beta_min),
                    beta_max: T::lit(beta_max),
                },
                T::lit(t_start),
                T::lit(t_end),
            ),
            ScheduleSpec::VpCosine { s, t_start, t_end } => NoiseSchedule::new(
                ScheduleKind::VpCosine { s: T::lit(s) },
                T::lit(t_start),
                T::lit(t_end),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> NoiseSchedule<f64> {
        NoiseSchedule::vp_linear_default()
    }

    #[test]
    fn vp_linear_at_one() {
        // frozen from a 40-digit evaluation of the closed form
        let v = linear().alpha_sigma_lambda(1.0).unwrap();
        assert!((v.alpha.ln() + 5.025).abs() < 1e-14);
        assert!((v.alpha - 0.006_571_586_494_929_615).abs() < 1e-17);
        assert!((v.sigma - 0.999_978_406_892_338_7).abs() < 1e-15);
        assert!((v.lambda + 5.024_978_406_659_204).abs() < 1e-13);
    }

    #[test]
    fn vp_linear_near_t_end() {
        let v = linear().alpha_sigma_lambda(1e-3).unwrap();
        assert!((v.alpha - 1.0).abs() < 1e-3);
        assert!(v.sigma > 0.0 && v.sigma < 0.02);
        assert!(v.lambda > 4.0);
    }

    #[test]
    fn out_of_range_time_is_domain_error() {
        assert!(matches!(
            linear().alpha_sigma_lambda(1.5),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            linear().alpha_sigma_lambda(0.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn lambda_round_trip_and_boundary() {
        let s = linear();
        let l = s.lambda(0.5).unwrap();
        assert!((l + 1.227_567_734_410_787).abs() < 1e-13);
        assert!((s.t_of_lambda(l).unwrap() - 0.5).abs() < 1e-10);
        let (_, hi) = s.lambda_range();
        assert_eq!(s.t_of_lambda(hi).unwrap(), s.t_end());
        assert!(matches!(s.t_of_lambda(hi + 1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn bisection_matches_closed_form() {
        let s = linear();
        let l = s.lambda(0.25).unwrap();
        let closed = s.t_of_lambda(l).unwrap();
        let bis = s.t_of_lambda_bisect(l).unwrap();
        assert!((closed - bis).abs() < 1e-10);
        assert!((closed - 0.25).abs() < 1e-10);
    }

    #[test]
    fn drift_of_linear_schedule() {
        let (f, g2) = linear().drift_diffusion(1.0).unwrap();
        assert!((f + 10.0).abs() < 1e-12);
        assert!((g2 - 20.0).abs() < 1e-9);
        let (f, g2) = linear().drift_diffusion(1e-3).unwrap();
        assert!(f.is_finite() && g2.is_finite());
    }

    #[test]
    fn diffusion_matches_finite_difference() {
        for s in [linear(), NoiseSchedule::vp_cosine_default()] {
            let t = 0.5;
            let d = 1e-6;
            let sig2 = |t: f64| s.alpha_sigma_lambda(t).unwrap().sigma.powi(2);
            let (f, g2) = s.drift_diffusion(t).unwrap();
            let fd = (sig2(t + d) - sig2(t - d)) / (2.0 * d) - 2.0 * f * sig2(t);
            assert!(((g2 - fd) / g2).abs() < 1e-6, "{g2} vs {fd}");
        }
    }

    #[test]
    fn cosine_round_trip() {
        let s = NoiseSchedule::<f64>::vp_cosine_default();
        for t in [1e-3, 0.1, 0.5, 0.9, 0.99] {
            let l = s.lambda(t).unwrap();
            assert!((s.t_of_lambda(l).unwrap() - t).abs() < 1e-10);
        }
    }

    #[test]
    fn grids() {
        let s = linear();
        let g = TimeGrid::new(&s, 1, SkipKind::UniformLambda).unwrap();
        assert_eq!(g.times(), &[1.0, 1e-3]);

        let g = TimeGrid::new(&s, 10, SkipKind::UniformLambda).unwrap();
        let (l0, l1) = s.lambda_range();
        for i in 1..=10 {
            assert!((g.h(i) - (l1 - l0) / 10.0).abs() < 1e-10);
        }

        let g = TimeGrid::new(&s, 4, SkipKind::UniformTime).unwrap();
        for (i, t) in g.times().iter().enumerate() {
            assert!((t - (1.0 - i as f64 * 0.999 / 4.0)).abs() < 1e-15);
        }

        let g = TimeGrid::new(&s, 7, SkipKind::QuadraticTime).unwrap();
        assert_eq!(g.times()[0], 1.0);
        assert_eq!(g.times()[7], 1e-3);

        assert!(matches!(
            TimeGrid::new(&s, 0, SkipKind::UniformLambda),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn spec_json() {
        let spec: ScheduleSpec = serde_json::from_str(
            r#"{"kind": "vp-linear", "beta_min": 0.1, "beta_max": 20.0, "t_start": 1.0, "t_end": 0.001}"#,
        )
        .unwrap();
        assert_eq!(spec.build::<f64>().unwrap(), linear());
        let cos: ScheduleSpec = serde_json::from_str(r#"{"kind": "vp-cosine"}"#).unwrap();
        assert_eq!(
            cos.build::<f64>().unwrap(),
            NoiseSchedule::vp_cosine_default()
        );
        assert!(serde_json::from_str::<ScheduleSpec>(r#"{"kind": "ve"}"#).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let s = NoiseSchedule::<f32>::vp_linear_default();
        let l = s.lambda(0.5).unwrap();
        assert!((s.t_of_lambda(l).unwrap() - 0.5).abs() < 1e-5);
    }
}
