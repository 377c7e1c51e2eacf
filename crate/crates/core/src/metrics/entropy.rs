use serde::{Deserialize, Serialize};

use crate::graph::TransitionModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyUnits {
    #[default]
    Nats,
    Bits,
}

impl EntropyUnits {
    fn scale(self) -> f64 {
        match self {
            EntropyUnits::Nats => 1.0,
            EntropyUnits::Bits => std::f64::consts::LOG2_E,
        }
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy of the fixation distribution, `-sum pi_i ln pi_i`.
pub fn stationary_entropy(tm: &TransitionModel, units: EntropyUnits) -> f64 {
    let h: f64 = -tm.pi.iter().map(|&p| plogp(p)).sum::<f64>();
    h.max(0.0) * units.scale()
}

/// `-sum_i pi_i sum_j p_ij ln p_ij`; sink rows contribute nothing.
pub fn transition_entropy(tm: &TransitionModel, units: EntropyUnits) -> f64 {
    let h: f64 =
        tm.p.iter()
            .zip(&tm.pi)
            .zip(&tm.sink)
            .filter(|(_, &sink)| !sink)
            .map(|((row, &pi), _)| -pi * row.iter().map(|&p| plogp(p)).sum::<f64>())
            .sum();
    h.max(0.0) * units.scale()
}
