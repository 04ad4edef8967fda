use std::cell::Cell;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{convert_parameterization, Model, StateVector, Thresholding};
use crate::scalar::Scalar;
use crate::schedule::{NoiseSchedule, TimeGrid};

use super::config::{CorrectorMode, SolverConfig, Variant};
use super::steps::{correct, update, Node, StepContext, Target, Weighting};

/// Per-step record of what the sampler did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace<T> {
    /// 1-based step index.
    pub step: usize,
    /// Predictor order used; 0 for a seeded starting value.
    pub order: usize,
    /// Times of the auxiliary points, most recent first.
    pub aux_times: Vec<T>,
    pub corrected: bool,
    /// Model evaluations spent in this step.
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput<T> {
    /// States at every grid time, starting with `x_T`.
    pub trajectory: Vec<StateVector<T>>,
    pub nfe: usize,
    pub trace: Vec<StepTrace<T>>,
}

impl<T: Scalar> SampleOutput<T> {
    pub fn final_state(&self) -> &StateVector<T> {
        self.trajectory.last().expect("trajectory holds x_T")
    }
}

/// Extra sampling inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions<T> {
    /// Exact states at `t_1, .., t_k` used in place of the first `k` steps.
    pub starting_values: Vec<StateVector<T>>,
}

impl<T> Default for SampleOptions<T> {
    fn default() -> Self {
        Self {
            starting_values: Vec::new(),
        }
    }
}

struct Evaluator<'a, T> {
    model: Box<dyn Model<T> + 'a>,
    threshold: Option<Thresholding>,
    nfe: Cell<usize>,
}

impl<T: Scalar> Evaluator<'_, T> {
    fn eval(&self, x: &StateVector<T>, t: T, step: usize) -> Result<StateVector<T>> {
        self.nfe.set(self.nfe.get() + 1);
        let mut out = self.model.eval(x, t)?;
        if let Some(th) = &self.threshold {
            out = th.apply(&out)?;
        }
        if !out.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: "model output",
            });
        }
        Ok(out)
    }
}

fn check_state<T: Scalar>(x: &StateVector<T>, step: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            what: "state",
        })
    }
}

/// Integrates from `grid.times()[0]` to the last grid time starting at `x_t`.
pub fn sample<T: Scalar, M: Model<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    grid: &TimeGrid<T>,
    config: &SolverConfig,
    x_t: &StateVector<T>,
) -> Result<SampleOutput<T>> {
    sample_with(
        model,
        schedule,
        grid,
        config,
        x_t,
        &SampleOptions::default(),
    )
}

/// [`sample`] with extra options.
pub fn sample_with<T: Scalar, M: Model<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    grid: &TimeGrid<T>,
    config: &SolverConfig,
    x_t: &StateVector<T>,
    options: &SampleOptions<T>,
) -> Result<SampleOutput<T>> {
    let steps = grid.steps();
    config.validate(steps)?;
    if options.starting_values.len() >= steps {
        return Err(Error::arg(format!(
            "{} starting values leave no step to take on a {steps}-step grid",
            options.starting_values.len()
        )));
    }
    if !x_t.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            what: "initial state",
        });
    }
    let model: Box<dyn Model<T> + '_> = if model.prediction() == config.prediction {
        Box::new(model)
    } else {
        Box::new(convert_parameterization(model, schedule))
    };
    let ev = Evaluator {
        model,
        threshold: config.thresholding,
        nfe: Cell::new(0),
    };
    let ctx = StepContext {
        schedule,
        prediction: config.prediction,
        bh: config.bh,
        a1_half: config.a1_half,
    };
    let mut run = Run {
        ctx,
        config,
        grid,
        ev: &ev,
        weighting: if config.varying_coefficients {
            Weighting::Varying
        } else {
            Weighting::Solved
        },
        trajectory: Vec::with_capacity(steps + 1),
        trace: Vec::with_capacity(steps),
    };
    match config.variant {
        Variant::Multistep => run.multistep(x_t, &options.starting_values)?,
        Variant::Singlestep => run.singlestep(x_t, &options.starting_values)?,
    }
    Ok(SampleOutput {
        trajectory: run.trajectory,
        nfe: ev.nfe.get(),
        trace: run.trace,
    })
}

struct Run<'a, T> {
    ctx: StepContext<'a, T>,
    config: &'a SolverConfig,
    grid: &'a TimeGrid<T>,
    ev: &'a Evaluator<'a, T>,
    weighting: Weighting,
    trajectory: Vec<StateVector<T>>,
    trace: Vec<StepTrace<T>>,
}

impl<T: Scalar> Run<'_, T> {
    fn target(&self, i: usize) -> Target<T> {
        Target {
            t: self.grid.times()[i],
            lambda: self.grid.lambdas()[i],
        }
    }

    fn node(&self, i: usize, output: StateVector<T>) -> Node<T> {
        let tg = self.target(i);
        Node {
            t: tg.t,
            lambda: tg.lambda,
            output,
        }
    }

    fn seed(&mut self, i: usize, x: &StateVector<T>) -> Result<Node<T>> {
        check_state(x, i)?;
        let out = self.ev.eval(x, self.grid.times()[i], i)?;
        self.trajectory.push(x.clone());
        self.trace.push(StepTrace {
            step: i,
            order: 0,
            aux_times: Vec::new(),
            corrected: false,
            evals: 1,
        });
        Ok(self.node(i, out))
    }

    /// Corrects (unless off or final), evaluates for the buffer, returns (state, node).
    #[allow(clippy::too_many_arguments)]
    fn finish_step(
        &mut self,
        i: usize,
        x_prev: &StateVector<T>,
        prev: &Node<T>,
        aux: &[&Node<T>],
        predicted: StateVector<T>,
        mut evals: usize,
        order: usize,
    ) -> Result<(StateVector<T>, Option<Node<T>>)> {
        check_state(&predicted, i)?;
        let last = i == self.grid.steps();
        let mut corrected = false;
        let (x, next) = if last {
            (predicted, None)
        } else {
            let out = self.ev.eval(&predicted, self.grid.times()[i], i)?;
            evals += 1;
            let at_pred = self.node(i, out);
            match self.config.corrector {
                CorrectorMode::Off => (predicted, Some(at_pred)),
                CorrectorMode::Standard | CorrectorMode::Oracle => {
                    corrected = true;
                    let x = correct(&self.ctx, self.weighting, x_prev, prev, aux, &at_pred)?;
                    check_state(&x, i)?;
                    if self.config.corrector == CorrectorMode::Oracle {
                        let out = self.ev.eval(&x, self.grid.times()[i], i)?;
                        evals += 1;
                        let n = self.node(i, out);
                        (x, Some(n))
                    } else {
                        (x, Some(at_pred))
                    }
                }
            }
        };
        self.trajectory.push(x.clone());
        self.trace.push(StepTrace {
            step: i,
            order,
            aux_times: aux.iter().map(|n| n.t).collect(),
            corrected,
            evals,
        });
        Ok((x, next))
    }

    fn multistep(&mut self, x_t: &StateVector<T>, start: &[StateVector<T>]) -> Result<()> {
        let cap = self.config.max_order();
        let mut history: VecDeque<Node<T>> = VecDeque::with_capacity(cap + 1);
        self.trajectory.push(x_t.clone());
        let first = self.ev.eval(x_t, self.grid.times()[0], 0)?;
        history.push_back(self.node(0, first));
        let mut x = x_t.clone();
        for (k, s) in start.iter().enumerate() {
            let n = self.seed(k + 1, s)?;
            x = s.clone();
            history.push_back(n);
            if history.len() > cap {
                history.pop_front();
            }
        }
        for i in start.len() + 1..=self.grid.steps() {
            let order = self.config.step_order(i).min(history.len());
            let prev = history.back().expect("history is never empty");
            let aux: Vec<&Node<T>> = history.iter().rev().skip(1).take(order - 1).collect();
            let predicted = update(&self.ctx, self.weighting, &x, prev, &aux, self.target(i))?;
            let prev = prev.clone();
            let (xn, next) = self.finish_step(i, &x, &prev, &aux, predicted, 0, order)?;
            x = xn;
            if let Some(n) = next {
                history.push_back(n);
                if history.len() > cap {
                    history.pop_front();
                }
            }
        }
        Ok(())
    }

    fn intermediate_nodes(&self, order: usize) -> Vec<T> {
        match &self.config.intermediate_r {
            Some(r) => r.iter().map(|&v| T::lit(v)).collect(),
            None => (1..order)
                .map(|m| T::lit(m as f64) / T::lit(order as f64))
                .collect(),
        }
    }

    fn singlestep(&mut self, x_t: &StateVector<T>, start: &[StateVector<T>]) -> Result<()> {
        self.trajectory.push(x_t.clone());
        let mut x = x_t.clone();
        let mut prev = self.node(0, self.ev.eval(x_t, self.grid.times()[0], 0)?);
        for (k, s) in start.iter().enumerate() {
            prev = self.seed(k + 1, s)?;
            x = s.clone();
        }
        for i in start.len() + 1..=self.grid.steps() {
            let order = self.config.step_order(i);
            let tg = self.target(i);
            let h = tg.lambda - prev.lambda;
            let mut inter: Vec<Node<T>> = Vec::with_capacity(order.saturating_sub(1));
            let mut evals = 0;
            for r in self.intermediate_nodes(order) {
                let lambda = prev.lambda + r * h;
                let t = self.ctx.schedule.t_of_lambda(lambda)?;
                let aux: Vec<&Node<T>> = inter.iter().rev().collect();
                let xs = update(
                    &self.ctx,
                    self.weighting,
                    &x,
                    &prev,
                    &aux,
                    Target { t, lambda },
                )?;
                check_state(&xs, i)?;
                let out = self.ev.eval(&xs, t, i)?;
                evals += 1;
                inter.push(Node {
                    t,
                    lambda,
                    output: out,
                });
            }
            let aux: Vec<&Node<T>> = inter.iter().rev().collect();
            let predicted = update(&self.ctx, self.weighting, &x, &prev, &aux, tg)?;
            let (xn, next) = self.finish_step(i, &x, &prev, &aux, predicted, evals, order)?;
            x = xn;
            if let Some(n) = next {
                prev = n;
            }
        }
        Ok(())
    }
}
