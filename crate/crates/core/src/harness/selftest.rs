use crate::coeffs::{psi, solve_weights, varphi, BhVariant};
use crate::model::{Prediction, StateVector, SyntheticModel};
use crate::schedule::NoiseSchedule;

use super::reference::{rk4_checked, RK4_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + h * i as f64)
        })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// `h^-k int_0^h e^(sign (h - s)) s^(k-1)/(k-1)! ds`.
fn basis_integral(k: usize, h: f64, sign: f64) -> f64 {
    let f = |s: f64| (sign * (h - s)).exp() * s.powi(k as i32 - 1) / factorial(k - 1);
    simpson(f, 0.0, h, 10_000) / h.powi(k as i32)
}

fn basis_check() -> Check {
    let mut worst = 0.0f64;
    for k in 1..=5 {
        for h in [0.1, 0.5, 1.0, 2.0] {
            let a = (varphi(k, h).unwrap_or(f64::NAN) - basis_integral(k, h, 1.0)).abs();
            let b = (psi(k, h).unwrap_or(f64::NAN) - basis_integral(k, h, -1.0)).abs();
            worst = worst.max(a).max(b);
            if a.is_nan() || b.is_nan() {
                worst = f64::NAN;
            }
        }
    }
    Check {
        name: "basis functions vs Simpson quadrature".into(),
        passed: worst < 1e-9,
        detail: format!("max abs deviation {worst:.3e}"),
    }
}

fn residual_check() -> Check {
    let mut worst = 0.0f64;
    let mut ok = true;
    for p in 1..=3 {
        let mut r: Vec<f64> = (1..p).map(|m| -(m as f64)).collect();
        r.push(1.0);
        for h in [0.05, 0.1, 0.25, 0.5] {
            for bh in [BhVariant::B1, BhVariant::B2] {
                for pred in [Prediction::Noise, Prediction::Data] {
                    match solve_weights(h, &r, bh, pred).and_then(|s| s.residual_l1()) {
                        Ok(res) => worst = worst.max(res),
                        Err(_) => ok = false,
                    }
                }
            }
        }
    }
    Check {
        name: "coefficient system residual".into(),
        passed: ok && worst < 1e-12,
        detail: format!("max l1 residual {worst:.3e}"),
    }
}

fn reference_check() -> Check {
    let s = NoiseSchedule::vp_linear_default();
    let outcome = SyntheticModel::x_free_poly(&[0.3, -1.2, 0.5], 2, s).and_then(|m| {
        let x = StateVector::new(vec![0.8, -1.1]);
        let exact = m.exact_solution_xfree(&x, s.t_start(), s.t_end())?;
        let rk = rk4_checked(&m, &s, &x, s.t_start(), s.t_end())?;
        Ok(rk.sub(&exact).max_abs() / exact.max_abs())
    });
    match outcome {
        Ok(rel) => Check {
            name: "closed-form vs Runge-Kutta reference".into(),
            passed: rel < RK4_TOLERANCE,
            detail: format!("relative deviation {rel:.3e}"),
        },
        Err(e) => Check {
            name: "closed-form vs Runge-Kutta reference".into(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Coefficient, quadrature and reference cross-checks.
pub fn selftest() -> Vec<Check> {
    vec![basis_check(), residual_check(), reference_check()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - x, 0.0, 2.0, 2);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn all_checks_pass() {
        for c in selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
