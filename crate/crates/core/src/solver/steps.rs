//! Single-step update formulas.
//!
//! Every update has the form
//!
//! ```text
//! x_next = lin * x_prev + lead * m_prev + scale * sum_m w_m / r_m * D_m
//! ```
//!
//! with `D_m = m(s_m) - m_prev` and `r_m = (lambda(s_m) - lambda_prev) / h`. For noise
//! prediction `lin = alpha_n/alpha_p`, `lead = -sigma_n (e^h - 1)`, `scale = -sigma_n B(h)`;
//! for data prediction `lin = sigma_n/sigma_p`, `lead = alpha_n (1 - e^-h)`,
//! `scale = alpha_n B(h)`. The varying-coefficient variant drops `B(h)` from `scale`.

use crate::coeffs::{solve_weights, BhVariant, VaryingCoefficientMatrix};
use crate::error::{Error, Result};
use crate::model::{Model, Prediction, StateVector};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

/// An evaluated point: time, half log-SNR and the model output there.
#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub t: T,
    pub lambda: T,
    pub output: StateVector<T>,
}

/// Time and half log-SNR of a step's target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target<T> {
    pub t: T,
    pub lambda: T,
}

/// Settings shared by every step of a run.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a, T> {
    pub schedule: &'a NoiseSchedule<T>,
    pub prediction: Prediction,
    pub bh: BhVariant,
    /// Use `w_1 = 1/2` for one-term systems instead of solving.
    pub a1_half: bool,
}

/// How the weights on `D_m / r_m` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Solve `R_p(h) w B(h) = phi_p(h)` (or `g_p`).
    Solved,
    /// `A_p = C_p^-1`, independent of `h`.
    Varying,
}

/// Plain first-order exponential-integrator step (DDIM).
pub fn ddim_step<T: Scalar>(
    schedule: &NoiseSchedule<T>,
    prediction: Prediction,
    x_prev: &StateVector<T>,
    prev: &Node<T>,
    target: Target<T>,
) -> Result<StateVector<T>> {
    let vp = schedule.alpha_sigma_lambda(prev.t)?;
    let vn = schedule.alpha_sigma_lambda(target.t)?;
    let h = target.lambda - prev.lambda;
    let out = x_prev
        .iter()
        .zip(prev.output.iter())
        .map(|(&x, &m)| match prediction {
            Prediction::Noise => vn.alpha / vp.alpha * x - vn.sigma * h.exp_m1() * m,
            Prediction::Data => vn.sigma / vp.sigma * x + vn.alpha * -(-h).exp_m1() * m,
        })
        .collect();
    Ok(StateVector::new(out))
}

struct Frame<T> {
    h: T,
    lin: T,
    lead: T,
    // alpha_n or -sigma_n: multiplies the correction sum
    sign_scale: T,
}

fn frame<T: Scalar>(
    ctx: &StepContext<'_, T>,
    prev: &Node<T>,
    target: Target<T>,
) -> Result<Frame<T>> {
    let h = target.lambda - prev.lambda;
    if !(h > T::zero()) {
        return Err(Error::Precondition(format!(
            "step must increase lambda, got h = {h}"
        )));
    }
    let vp = ctx.schedule.alpha_sigma_lambda(prev.t)?;
    let vn = ctx.schedule.alpha_sigma_lambda(target.t)?;
    Ok(match ctx.prediction {
        Prediction::Noise => Frame {
            h,
            lin: vn.alpha / vp.alpha,
            lead: -(vn.sigma * h.exp_m1()),
            sign_scale: -vn.sigma,
        },
        Prediction::Data => Frame {
            h,
            lin: vn.sigma / vp.sigma,
            lead: vn.alpha * -(-h).exp_m1(),
            sign_scale: vn.alpha,
        },
    })
}

/// The general update using auxiliary points `points` (any order, distinct lambdas).
/// With no points this is exactly [`ddim_step`].
pub fn update<T: Scalar>(
    ctx: &StepContext<'_, T>,
    weighting: Weighting,
    x_prev: &StateVector<T>,
    prev: &Node<T>,
    points: &[&Node<T>],
    target: Target<T>,
) -> Result<StateVector<T>> {
    let fr = frame(ctx, prev, target)?;
    let mut x: StateVector<T> = StateVector::new(
        x_prev
            .iter()
            .zip(prev.output.iter())
            .map(|(&x, &m)| fr.lin * x + fr.lead * m)
            .collect(),
    );
    if points.is_empty() {
        return Ok(x);
    }
    for p in points {
        if p.output.dim() != prev.output.dim() {
            return Err(Error::Precondition(
                "auxiliary output dimension mismatch".into(),
            ));
        }
    }
    let r: Vec<T> = points
        .iter()
        .map(|p| (p.lambda - prev.lambda) / fr.h)
        .collect();
    let (weights, scale) = match weighting {
        Weighting::Solved => {
            let w = if ctx.a1_half && r.len() == 1 {
                vec![T::lit(0.5)]
            } else {
                solve_weights(fr.h, &r, ctx.bh, ctx.prediction)?
                    .weights()
                    .to_vec()
            };
            (w, fr.sign_scale * ctx.bh.eval(fr.h))
        }
        Weighting::Varying => (
            VaryingCoefficientMatrix::new(&r)?.step_weights(fr.h, ctx.prediction)?,
            fr.sign_scale,
        ),
    };
    for ((p, &w), &rm) in points.iter().zip(&weights).zip(&r) {
        let d = p.output.sub(&prev.output);
        x.axpy(scale * w / rm, &d);
    }
    Ok(x)
}

/// UniP-p: predictor of order `points.len() + 1` from buffered points before `prev`.
pub fn unip_step<T: Scalar>(
    ctx: &StepContext<'_, T>,
    x_prev: &StateVector<T>,
    prev: &Node<T>,
    points: &[&Node<T>],
    target: Target<T>,
) -> Result<StateVector<T>> {
    update(ctx, Weighting::Solved, x_prev, prev, points, target)
}

/// UniC-p applied to `predicted`, any estimate of order `points.len() + 1` at `target`.
///
/// Evaluates the model once at `(predicted, target.t)`; that output is returned so the
/// caller can buffer it for the next step.
pub fn unic_step<T: Scalar, M: Model<T> + ?Sized>(
    ctx: &StepContext<'_, T>,
    model: &M,
    x_prev: &StateVector<T>,
    prev: &Node<T>,
    points: &[&Node<T>],
    target: Target<T>,
    predicted: &StateVector<T>,
) -> Result<(StateVector<T>, StateVector<T>)> {
    if model.prediction() != ctx.prediction {
        return Err(Error::Precondition(
            "model parameterization differs from the step's".into(),
        ));
    }
    let output = model.eval(predicted, target.t)?;
    let next = Node {
        t: target.t,
        lambda: target.lambda,
        output,
    };
    let corrected = correct(ctx, Weighting::Solved, x_prev, prev, points, &next)?;
    Ok((corrected, next.output))
}

/// Corrector update given the already evaluated output at the target (`r_p = 1`).
pub fn correct<T: Scalar>(
    ctx: &StepContext<'_, T>,
    weighting: Weighting,
    x_prev: &StateVector<T>,
    prev: &Node<T>,
    points: &[&Node<T>],
    next: &Node<T>,
) -> Result<StateVector<T>> {
    let mut all: Vec<&Node<T>> = points.to_vec();
    all.push(next);
    update(
        ctx,
        weighting,
        x_prev,
        prev,
        &all,
        Target {
            t: next.t,
            lambda: next.lambda,
        },
    )
}

/// UniPC_v update with `A_p = C_p^-1` over `points` (include the target node to correct).
pub fn unipc_v_step<T: Scalar>(
    ctx: &StepContext<'_, T>,
    x_prev: &StateVector<T>,
    prev: &Node<T>,
    points: &[&Node<T>],
    target: Target<T>,
) -> Result<StateVector<T>> {
    update(ctx, Weighting::Varying, x_prev, prev, points, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SyntheticModel;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::vp_linear_default()
    }

    fn node(s: &NoiseSchedule<f64>, t: f64, out: Vec<f64>) -> Node<f64> {
        Node {
            t,
            lambda: s.lambda(t).unwrap(),
            output: StateVector::new(out),
        }
    }

    fn target(s: &NoiseSchedule<f64>, t: f64) -> Target<f64> {
        Target {
            t,
            lambda: s.lambda(t).unwrap(),
        }
    }

    fn ctx(s: &NoiseSchedule<f64>, prediction: Prediction) -> StepContext<'_, f64> {
        StepContext {
            schedule: s,
            prediction,
            bh: BhVariant::B2,
            a1_half: true,
        }
    }

    #[test]
    fn first_order_is_ddim() {
        let s = sched();
        let prev = node(&s, 0.6, vec![0.3, -0.2]);
        let x = StateVector::new(vec![1.0, 2.0]);
        let tg = target(&s, 0.5);
        let u = unip_step(&ctx(&s, Prediction::Noise), &x, &prev, &[], tg).unwrap();
        let d = ddim_step(&s, Prediction::Noise, &x, &prev, tg).unwrap();
        assert_eq!(u, d);
        let vp = s.alpha_sigma_lambda(0.6).unwrap();
        let vn = s.alpha_sigma_lambda(0.5).unwrap();
        let h = vn.lambda - vp.lambda;
        let want = vn.alpha / vp.alpha * 1.0 - vn.sigma * h.exp_m1() * 0.3;
        assert!((u[0] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_is_homogeneous() {
        let s = sched();
        let prev = node(&s, 0.6, vec![0.0]);
        let older = node(&s, 0.7, vec![0.0]);
        let x = StateVector::new(vec![1.5]);
        let tg = target(&s, 0.5);
        let u = unip_step(&ctx(&s, Prediction::Noise), &x, &prev, &[&older], tg).unwrap();
        let ratio =
            s.alpha_sigma_lambda(0.5).unwrap().alpha / s.alpha_sigma_lambda(0.6).unwrap().alpha;
        assert!((u[0] - ratio * 1.5).abs() < 1e-14);

        let data = unip_step(&ctx(&s, Prediction::Data), &x, &prev, &[&older], tg).unwrap();
        let ratio =
            s.alpha_sigma_lambda(0.5).unwrap().sigma / s.alpha_sigma_lambda(0.6).unwrap().sigma;
        assert!((data[0] - ratio * 1.5).abs() < 1e-14);
    }

    #[test]
    fn constant_noise_corrector_equals_first_order() {
        let s = sched();
        let model = SyntheticModel::x_free_poly(&[0.4], 1, s).unwrap();
        let prev = node(&s, 0.6, vec![0.4]);
        let older = node(&s, 0.7, vec![0.4]);
        let oldest = node(&s, 0.8, vec![0.4]);
        let x = StateVector::new(vec![0.9]);
        let tg = target(&s, 0.5);
        let c = ctx(&s, Prediction::Noise);
        let first = ddim_step(&s, Prediction::Noise, &x, &prev, tg).unwrap();
        for pts in [&[][..], &[&older][..], &[&older, &oldest][..]] {
            let pred = unip_step(&c, &x, &prev, pts, tg).unwrap();
            let (corr, out) = unic_step(&c, &model, &x, &prev, pts, tg, &pred).unwrap();
            assert!((corr[0] - first[0]).abs() < 1e-14);
            assert_eq!(out[0], 0.4);
        }
    }

    #[test]
    fn first_order_corrector_uses_half() {
        let s = sched();
        let prev = node(&s, 0.6, vec![0.1]);
        let next = node(&s, 0.5, vec![0.5]);
        let x = StateVector::new(vec![1.0]);
        let c = ctx(&s, Prediction::Noise);
        let corr = correct(&c, Weighting::Solved, &x, &prev, &[], &next).unwrap();
        let base = ddim_step(&s, Prediction::Noise, &x, &prev, target(&s, 0.5)).unwrap();
        let h = next.lambda - prev.lambda;
        let sigma = s.alpha_sigma_lambda(0.5).unwrap().sigma;
        let want = base[0] - sigma * h.exp_m1() * 0.5 * (0.5 - 0.1);
        assert!((corr[0] - want).abs() < 1e-15);
    }

    #[test]
    fn varying_first_order_matches_solved_for_small_h() {
        // with B1 the solved weight tends to the varying weight as h -> 0
        let s = sched();
        let t0 = 0.5;
        let l1 = s.lambda(t0).unwrap() + 1e-3;
        let t1 = s.t_of_lambda(l1).unwrap();
        let prev = node(&s, t0, vec![0.2]);
        let next = Node {
            t: t1,
            lambda: l1,
            output: StateVector::new(vec![0.7]),
        };
        let x = StateVector::new(vec![1.0]);
        let c = StepContext {
            bh: BhVariant::B1,
            a1_half: false,
            ..ctx(&s, Prediction::Noise)
        };
        let solved = correct(&c, Weighting::Solved, &x, &prev, &[], &next).unwrap();
        let varying = correct(&c, Weighting::Varying, &x, &prev, &[], &next).unwrap();
        assert!(((solved[0] - varying[0]) / varying[0]).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_increasing_lambda() {
        let s = sched();
        let prev = node(&s, 0.5, vec![0.0]);
        let x = StateVector::new(vec![1.0]);
        let err = unip_step(&ctx(&s, Prediction::Noise), &x, &prev, &[], target(&s, 0.6));
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
