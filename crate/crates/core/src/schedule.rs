//! Time profiles for the cross-channel coupling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[serde(alias = "const")]
    Constant,
    Late,
    Early,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [ScheduleKind::Constant, ScheduleKind::Late, ScheduleKind::Early];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "const",
            ScheduleKind::Late => "late",
            ScheduleKind::Early => "early",
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" | "constant" => Ok(ScheduleKind::Constant),
            "late" => Ok(ScheduleKind::Late),
            "early" => Ok(ScheduleKind::Early),
            other => Err(Error::invalid(format!("unknown schedule `{other}`"))),
        }
    }
}

/// `g(t)` on the forward clock `t ∈ [0, horizon]`.
///
/// Late coupling is active near the data end (`t <= t0`), early coupling near
/// the noise end (`t >= t0`). Both indicators include `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub g0: f64,
    pub t0: f64,
    pub horizon: f64,
}

impl ScheduleSpec {
    pub fn constant(g0: f64, horizon: f64) -> Self {
        ScheduleSpec { kind: ScheduleKind::Constant, g0, t0: 0.5 * horizon, horizon }
    }

    /// Switch time defaults to the middle of the horizon.
    pub fn with_default_switch(kind: ScheduleKind, g0: f64, horizon: f64) -> Self {
        ScheduleSpec { kind, g0, t0: 0.5 * horizon, horizon }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g0.is_finite() {
            return Err(Error::invalid("schedule g0 must be finite"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid(format!("schedule horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0..=self.horizon).contains(&self.t0) {
            return Err(Error::invalid(format!(
                "switch time t0 = {} outside [0, {}]",
                self.t0, self.horizon
            )));
        }
        Ok(())
    }

    pub fn coupling_value(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon;
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::invalid(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(self.value_unchecked(t))
    }

    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.g0,
            ScheduleKind::Late if t <= self.t0 => self.g0,
            ScheduleKind::Early if t >= self.t0 => self.g0,
            _ => 0.0,
        }
    }

    /// Interior times where `g` jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            ScheduleKind::Constant => Vec::new(),
            _ if self.t0 > 0.0 && self.t0 < self.horizon && self.g0 != 0.0 => vec![self.t0],
            _ => Vec::new(),
        }
    }
}
