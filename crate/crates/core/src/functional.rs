//! Bounded path functionals and events used by the verification battery.

use serde::{Deserialize, Serialize};

use crate::simulate::{Dynamics, Observation};

/// An `F(s)`-measurable event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    /// The whole sample space.
    Always,
    /// `S^i(s) > S^i(0)` (zero-based asset).
    PriceUp { asset: usize },
    /// `I(s) < q`.
    MinBelow { q: f64 },
}

impl Event {
    pub fn label(&self) -> String {
        match self {
            Event::Always => "omega".into(),
            Event::PriceUp { asset } => format!("up:{}", asset + 1),
            Event::MinBelow { q } => format!("imin:{q}"),
        }
    }

    /// Evaluates the event from the observation at its reference time.
    pub fn holds(&self, dynamics: &Dynamics, at: &Observation) -> bool {
        match self {
            Event::Always => true,
            Event::PriceUp { asset } => dynamics.log_return(*asset, at.t, &at.w) > 0.0,
            Event::MinBelow { q } => at.log_min.exp() < *q,
        }
    }
}

/// Bounded deterministic function on `[0, 1]`, applied to `U(rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelFunction {
    One,
    Identity,
    Square,
    /// `1{u > 1/2}`
    UpperHalf,
}

impl LevelFunction {
    pub const ALL: [LevelFunction; 4] =
        [LevelFunction::One, LevelFunction::Identity, LevelFunction::Square, LevelFunction::UpperHalf];

    pub fn apply(self, u: f64) -> f64 {
        match self {
            LevelFunction::One => 1.0,
            LevelFunction::Identity => u,
            LevelFunction::Square => u * u,
            LevelFunction::UpperHalf => {
                if u > 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LevelFunction::One => "1",
            LevelFunction::Identity => "u",
            LevelFunction::Square => "u2",
            LevelFunction::UpperHalf => "1{u>0.5}",
        }
    }
}

/// Bounded optional process `V(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Functional {
    One,
    /// `exp(-rate t)`
    ExpDecay {
        rate: f64,
    },
    /// `1{t > s} 1_B` with `B` an `F(s)` event.
    AfterWithEvent {
        s: f64,
        event: Event,
    },
}

impl Functional {
    pub fn label(&self) -> String {
        match self {
            Functional::One => "1".into(),
            Functional::ExpDecay { rate } => format!("exp(-{rate}t)"),
            Functional::AfterWithEvent { s, event } => format!("1{{t>{s}}}1[{}]", event.label()),
        }
    }

    /// Observation time this functional needs, if any.
    pub fn reference_time(&self) -> Option<f64> {
        match self {
            Functional::AfterWithEvent { s, .. } => Some(*s),
            _ => None,
        }
    }

    /// `V(t)` given a lookup of past observations. Only observations at times
    /// strictly before `t` are consulted.
    pub fn eval<'o>(&self, t: f64, dynamics: &Dynamics, lookup: impl Fn(f64) -> Option<&'o Observation>) -> f64 {
        match self {
            Functional::One => 1.0,
            Functional::ExpDecay { rate } => (-rate * t).exp(),
            Functional::AfterWithEvent { s, event } => {
                if t <= *s {
                    return 0.0;
                }
                let obs = lookup(*s).expect("reference observation recorded before use");
                if event.holds(dynamics, obs) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_functions() {
        assert_eq!(LevelFunction::One.apply(0.3), 1.0);
        assert_eq!(LevelFunction::Identity.apply(0.3), 0.3);
        assert!((LevelFunction::Square.apply(0.3) - 0.09).abs() < 1e-15);
        assert_eq!(LevelFunction::UpperHalf.apply(0.5), 0.0);
        assert_eq!(LevelFunction::UpperHalf.apply(0.51), 1.0);
    }
}
