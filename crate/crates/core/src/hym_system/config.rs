use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which Kähler form enters the trace-free equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OmegaVariant {
    /// `ω_t = ω₀`.
    Fixed,
    /// `ω_t = (Θ_{det E} + r(1−t)α ω₀) / (rα + 1)`.
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TSchedule {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Step multiplier after an easy success.
    pub grow: f64,
    /// Step multiplier after a failure.
    pub shrink: f64,
    /// Newton iteration count at or below which a step counts as easy.
    pub easy_iterations: usize,
    pub max_steps: usize,
}

impl Default for TSchedule {
    fn default() -> Self {
        Self { initial_step: 0.25, min_step: 1e-4, max_step: 0.5, grow: 2.0, shrink: 0.5, easy_iterations: 4, max_steps: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Sup-norm tolerance on both residual components.
    pub tolerance: f64,
    /// Smallest damping factor tried by the backtracking line search.
    pub min_damping: f64,
    pub krylov_restart: usize,
    pub krylov_max_iterations: usize,
    /// Upper bound of the relative Krylov tolerance (inexact Newton forcing term).
    pub krylov_forcing: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            tolerance: 1e-10,
            min_damping: 1.0 / 64.0,
            krylov_restart: 60,
            krylov_max_iterations: 1200,
            krylov_forcing: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub alpha: f64,
    /// Raise α automatically when `θ(0, h₀)` is not positive enough.
    pub auto_alpha: bool,
    pub epsilon: f64,
    pub lambda: f64,
    pub mu: f64,
    pub omega_variant: OmegaVariant,
    pub schedule: TSchedule,
    pub newton: NewtonConfig,
    /// Minimum admissible eigenvalue of `θ(t, h_t)` in `ω₀ ⊗ h` units.
    pub positivity_margin_floor: f64,
    /// Rungs of the `ε×2, λ×2` retry ladder.
    pub max_escalations: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            auto_alpha: true,
            epsilon: 1.0,
            lambda: 1.0,
            mu: 0.0,
            omega_variant: OmegaVariant::Fixed,
            schedule: TSchedule::default(),
            newton: NewtonConfig::default(),
            positivity_margin_floor: 1e-6,
            max_escalations: 3,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let s = &self.schedule;
        let nw = &self.newton;
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite");
        }
        if !(s.min_step > 0.0 && s.initial_step >= s.min_step && s.max_step >= s.initial_step && s.max_step <= 1.0) {
            return bad("schedule needs 0 < min_step <= initial_step <= max_step <= 1");
        }
        if !(s.grow >= 1.0 && s.shrink > 0.0 && s.shrink < 1.0) {
            return bad("schedule needs grow >= 1 and 0 < shrink < 1");
        }
        if s.max_steps == 0 {
            return bad("schedule.max_steps must be positive");
        }
        if !(nw.tolerance > 0.0 && nw.min_damping > 0.0 && nw.min_damping <= 1.0) {
            return bad("newton tolerance and min_damping must be positive");
        }
        if nw.max_iterations == 0 || nw.krylov_restart == 0 || nw.krylov_max_iterations == 0 {
            return bad("newton iteration limits must be positive");
        }
        if !(nw.krylov_forcing > 0.0 && nw.krylov_forcing < 1.0) {
            return bad("newton.krylov_forcing must lie in (0, 1)");
        }
        if !(self.positivity_margin_floor > 0.0) {
            return bad("positivity_margin_floor must be > 0");
        }
        Ok(())
    }
}
