use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coeffs::{BhVariant, MAX_ORDER, MAX_VARYING_ORDER};
use crate::error::{Error, Result};
use crate::model::{Prediction, Thresholding};

/// Whether auxiliary points come from past grid points or fresh intermediate evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Multistep,
    Singlestep,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Multistep => "multistep",
            Variant::Singlestep => "singlestep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectorMode {
    Off,
    /// Corrects with the evaluation at the predicted point, which is also buffered.
    #[default]
    Standard,
    /// Re-evaluates at the corrected point and buffers that instead (one extra NFE per step).
    Oracle,
}

impl CorrectorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrectorMode::Off => "off",
            CorrectorMode::Standard => "standard",
            CorrectorMode::Oracle => "oracle",
        }
    }
}

/// Per-step predictor orders, written as a digit string such as `"123321"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderSchedule(Vec<usize>);

impl OrderSchedule {
    pub fn new(orders: Vec<usize>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::arg("order schedule is empty"));
        }
        if let Some(bad) = orders.iter().find(|&&o| o == 0 || o > 9) {
            return Err(Error::arg(format!(
                "order schedule entry {bad} outside 1..=9"
            )));
        }
        Ok(Self(orders))
    }

    pub fn orders(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_order(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(1)
    }
}

impl FromStr for OrderSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let orders = s
            .chars()
            .map(|c| {
                c.to_digit(10).map(|d| d as usize).ok_or_else(|| {
                    Error::arg(format!("order schedule {s:?}: {c:?} is not a digit"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(orders)
    }
}

impl fmt::Display for OrderSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.0 {
            write!(f, "{o}")?;
        }
        Ok(())
    }
}

impl Serialize for OrderSchedule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OrderSchedule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_order() -> usize {
    2
}

fn yes() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Label for result tables; derived from the other fields when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Maximum predictor order `p`.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub bh: BhVariant,
    #[serde(default)]
    pub prediction: Prediction,
    #[serde(default)]
    pub corrector: CorrectorMode,
    /// Use the step-size independent coefficient matrix `A_p = C_p^-1`.
    #[serde(default, skip_serializing_if = "is_false")]
    pub varying_coefficients: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_schedule: Option<OrderSchedule>,
    /// Dynamic thresholding of data-prediction outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholding: Option<Thresholding>,
    /// Fix the single weight of one-term systems to 1/2 instead of solving for it.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub a1_half: bool,
    /// Singlestep intermediate nodes in (0, 1); defaults to `m / p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate_r: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            name: None,
            order: default_order(),
            variant: Variant::default(),
            bh: BhVariant::default(),
            prediction: Prediction::default(),
            corrector: CorrectorMode::default(),
            varying_coefficients: false,
            order_schedule: None,
            thresholding: None,
            a1_half: true,
            intermediate_r: None,
        }
    }
}

impl SolverConfig {
    /// Multistep UniP-`order` (no corrector).
    pub fn unip(order: usize) -> Self {
        Self {
            order,
            corrector: CorrectorMode::Off,
            ..Self::default()
        }
    }

    /// Multistep UniPC-`order` with the standard corrector.
    pub fn unipc(order: usize) -> Self {
        Self {
            order,
            corrector: CorrectorMode::Standard,
            ..Self::default()
        }
    }

    pub fn with_prediction(mut self, prediction: Prediction) -> Self {
        self.prediction = prediction;
        self
    }

    pub fn with_bh(mut self, bh: BhVariant) -> Self {
        self.bh = bh;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_corrector(mut self, corrector: CorrectorMode) -> Self {
        self.corrector = corrector;
        self
    }

    pub fn with_varying_coefficients(mut self, on: bool) -> Self {
        self.varying_coefficients = on;
        self
    }

    pub fn with_order_schedule(mut self, schedule: OrderSchedule) -> Self {
        self.order_schedule = Some(schedule);
        self
    }

    /// Table label, e.g. `unipc`, `unip_v`.
    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let base = match self.corrector {
            CorrectorMode::Off => "unip",
            _ => "unipc",
        };
        if self.varying_coefficients {
            format!("{base}_v")
        } else {
            base.to_string()
        }
    }

    /// Largest order any step may use.
    pub fn max_order(&self) -> usize {
        self.order_schedule
            .as_ref()
            .map_or(self.order, OrderSchedule::max_order)
    }

    fn order_limit(&self) -> usize {
        if self.varying_coefficients {
            MAX_VARYING_ORDER
        } else {
            MAX_ORDER
        }
    }

    /// Predictor order of step `i` (1-based).
    pub fn step_order(&self, i: usize) -> usize {
        match (&self.order_schedule, self.variant) {
            (Some(s), _) => s.orders()[i - 1],
            (None, Variant::Multistep) => self.order.min(i),
            (None, Variant::Singlestep) => self.order,
        }
    }

    /// Checks the configuration against a grid of `steps` steps.
    pub fn validate(&self, steps: usize) -> Result<()> {
        let limit = self.order_limit();
        if self.order == 0 || self.order > limit {
            return Err(Error::Range(format!(
                "order {} outside 1..={limit}",
                self.order
            )));
        }
        if steps == 0 {
            return Err(Error::arg("need at least one step"));
        }
        if let Some(s) = &self.order_schedule {
            if s.len() != steps {
                return Err(Error::arg(format!(
                    "order schedule {s} has {} entries for {steps} steps",
                    s.len()
                )));
            }
            for (idx, &o) in s.orders().iter().enumerate() {
                let i = idx + 1;
                if o > i {
                    return Err(Error::arg(format!(
                        "order schedule {s}: step {i} asks for order {o} but only {i} points are available"
                    )));
                }
                if o > limit {
                    return Err(Error::Range(format!(
                        "order schedule {s}: order {o} exceeds {limit}"
                    )));
                }
            }
        }
        if let Some(th) = &self.thresholding {
            if self.prediction != Prediction::Data {
                return Err(Error::arg("thresholding applies to data prediction only"));
            }
            th.validate()?;
        }
        if let Some(r) = &self.intermediate_r {
            if self.variant != Variant::Singlestep {
                return Err(Error::arg("intermediate_r is a singlestep option"));
            }
            if self.order_schedule.is_some() {
                return Err(Error::arg(
                    "intermediate_r cannot be combined with an order schedule",
                ));
            }
            if r.len() + 1 != self.order {
                return Err(Error::arg(format!(
                    "intermediate_r needs {} entries for order {}",
                    self.order - 1,
                    self.order
                )));
            }
            let mut prev = 0.0;
            for &v in r {
                if !(v > prev && v < 1.0) {
                    return Err(Error::arg(
                        "intermediate_r must increase strictly inside (0, 1)",
                    ));
                }
                prev = v;
            }
        }
        Ok(())
    }
}
