use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{convert_parameterization, Model, Prediction, StateVector, SyntheticModel};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

/// Step count of the fine Runge-Kutta reference; the self-check doubles it.
pub const RK4_STEPS: usize = 20_000;
/// Largest relative change allowed between the two Runge-Kutta resolutions.
pub const RK4_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    ClosedForm,
    FineRk4,
}

impl ReferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceMode::ClosedForm => "closed-form",
            ReferenceMode::FineRk4 => "fine-rk4",
        }
    }
}

/// Solution of the diffusion ODE from `(x_t, t_start)` to `t_end`.
pub fn reference_solution<T: Scalar>(
    model: &SyntheticModel<T>,
    x_t: &StateVector<T>,
    t_start: T,
    t_end: T,
    mode: ReferenceMode,
) -> Result<StateVector<T>> {
    match mode {
        ReferenceMode::ClosedForm => {
            if !model.has_closed_form() {
                return Err(Error::Reference(
                    "closed-form reference needs the x-free-poly family".into(),
                ));
            }
            model.exact_solution_xfree(x_t, t_start, t_end)
        }
        ReferenceMode::FineRk4 => rk4_checked(model, model.schedule(), x_t, t_start, t_end),
    }
}

/// Fine Runge-Kutta solution at [`RK4_STEPS`] steps, verified against twice as many.
pub fn rk4_checked<T: Scalar, M: Model<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    x_t: &StateVector<T>,
    t_start: T,
    t_end: T,
) -> Result<StateVector<T>> {
    let coarse = rk4_lambda(model, schedule, x_t, t_start, t_end, RK4_STEPS)?;
    let fine = rk4_lambda(model, schedule, x_t, t_start, t_end, 2 * RK4_STEPS)?;
    let scale = fine.max_abs().max(T::min_positive_value());
    let change = (coarse.sub(&fine).max_abs() / scale).to_f64_lossy();
    if !(change < RK4_TOLERANCE) {
        return Err(Error::Reference(format!(
            "Runge-Kutta self-check failed: doubling steps changed the result by {change:e} (relative)"
        )));
    }
    Ok(fine)
}

/// Classical Runge-Kutta on `dx/dlambda = sigma^2 x - sigma eps(x, t(lambda))` at
/// `steps` uniform steps in lambda.
pub fn rk4_lambda<T: Scalar, M: Model<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    x_t: &StateVector<T>,
    t_start: T,
    t_end: T,
    steps: usize,
) -> Result<StateVector<T>> {
    if steps == 0 {
        return Err(Error::arg("Runge-Kutta needs at least one step"));
    }
    if t_end > t_start {
        return Err(Error::arg(
            "reference runs backward in time: need t_end <= t_start",
        ));
    }
    let noise: Box<dyn Model<T> + '_> = match model.prediction() {
        Prediction::Noise => Box::new(model),
        Prediction::Data => Box::new(convert_parameterization(model, schedule)),
    };
    let rhs = |x: &StateVector<T>, lambda: T| -> Result<StateVector<T>> {
        let t = schedule.t_of_lambda(lambda)?;
        let sigma = schedule.alpha_sigma_lambda(t)?.sigma;
        let eps = noise.eval(x, t)?;
        Ok(x.lin_comb(sigma * sigma, &eps, -sigma))
    };
    let l0 = schedule.lambda(t_start)?;
    let l1 = schedule.lambda(t_end)?;
    let h = (l1 - l0) / T::lit(steps as f64);
    let half = h * T::lit(0.5);
    let sixth = h / T::lit(6.0);
    let mut x = x_t.clone();
    for j in 0..steps {
        let l = l0 + (l1 - l0) * T::lit(j as f64) / T::lit(steps as f64);
        let k1 = rhs(&x, l)?;
        let k2 = rhs(&x.lin_comb(T::one(), &k1, half), l + half)?;
        let k3 = rhs(&x.lin_comb(T::one(), &k2, half), l + half)?;
        let k4 = rhs(&x.lin_comb(T::one(), &k3, h), l + h)?;
        let two = T::lit(2.0);
        for i in 0..x.dim() {
            let incr = sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
            x.as_mut_slice()[i] = x[i] + incr;
        }
        if !x.is_finite() {
            return Err(Error::Reference(format!(
                "Runge-Kutta diverged at step {j}"
            )));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_scales_by_alpha_ratio() {
        let s = NoiseSchedule::<f64>::vp_linear_default();
        let m = SyntheticModel::x_free_poly(&[0.0], 2, s).unwrap();
        let x = StateVector::new(vec![1.0, -2.0]);
        let ratio =
            s.alpha_sigma_lambda(1e-3).unwrap().alpha / s.alpha_sigma_lambda(1.0).unwrap().alpha;
        for mode in [ReferenceMode::ClosedForm, ReferenceMode::FineRk4] {
            let r = reference_solution(&m, &x, 1.0, 1e-3, mode).unwrap();
            assert!((r[0] - ratio).abs() < 1e-9 * ratio, "{mode:?}");
            assert!((r[1] + 2.0 * ratio).abs() < 1e-9 * ratio, "{mode:?}");
        }
    }

    #[test]
    fn closed_form_needs_x_free_family() {
        let s = NoiseSchedule::<f64>::vp_linear_default();
        let m = SyntheticModel::linear_in_x(0.5, 2, s).unwrap();
        let x = StateVector::new(vec![1.0, 1.0]);
        let err = reference_solution(&m, &x, 1.0, 1e-3, ReferenceMode::ClosedForm);
        assert!(matches!(err, Err(Error::Reference(_))));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let s = NoiseSchedule::<f64>::vp_linear_default();
        let m = SyntheticModel::x_free_poly(&[0.3, -1.2, 0.5], 1, s).unwrap();
        let x = StateVector::new(vec![0.7]);
        let exact = m.exact_solution_xfree(&x, 1.0, 1e-3).unwrap()[0];
        let e1 = (rk4_lambda(&m, &s, &x, 1.0, 1e-3, 50).unwrap()[0] - exact).abs();
        let e2 = (rk4_lambda(&m, &s, &x, 1.0, 1e-3, 100).unwrap()[0] - exact).abs();
        let slope = (e1 / e2).log2();
        assert!((slope - 4.0).abs() < 0.3, "{slope}");
    }
}
