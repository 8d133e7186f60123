//! Closed-form quantum predictions used as comparison targets.
//!
//! All formulas here are textbook results: the singlet correlation `−cos(a − b)`,
//! the two-channel agreement probability for Mermin's three-setting demonstration,
//! and the two-particle interferometer fringe in the sum of the phases.

use std::f64::consts::PI;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionKind {
    Correlation,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantumPrediction {
    pub value: f64,
    pub kind: PredictionKind,
}

impl QuantumPrediction {
    fn correlation(value: f64) -> Self {
        QuantumPrediction {
            value: value.clamp(-1.0, 1.0),
            kind: PredictionKind::Correlation,
        }
    }

    fn probability(value: f64) -> Self {
        QuantumPrediction {
            value: value.clamp(0.0, 1.0),
            kind: PredictionKind::Probability,
        }
    }
}

/// Spin-singlet correlation `E(a, b) = −cos(a − b)`.
pub fn singlet_e(a: f64, b: f64) -> QuantumPrediction {
    QuantumPrediction::correlation(-(a - b).cos())
}

/// Which setting pairs an agreement probability is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettingRelation {
    Same,
    Different,
    /// Both settings drawn independently and uniformly from the three.
    Overall,
}

/// Probability that both detectors flash the same color in the quantum version of
/// Mermin's demonstration (detectors 120° apart, perfectly correlated at equal settings).
pub fn mermin_agreement_prob(relation: SettingRelation) -> QuantumPrediction {
    let same = 1.0;
    // cos²(θ/2) with θ = 120°
    let different = (PI / 3.0).cos().powi(2);
    QuantumPrediction::probability(match relation {
        SettingRelation::Same => same,
        SettingRelation::Different => different,
        SettingRelation::Overall => (3.0 * same + 6.0 * different) / 9.0,
    })
}

/// Two-particle coincidence fringe `(1 + cos(φa + φb)) / 2`.
pub fn rt_coincidence_prob(phi_a: f64, phi_b: f64) -> QuantumPrediction {
    QuantumPrediction::probability((1.0 + (phi_a + phi_b).cos()) / 2.0)
}

/// CHSH combination of singlet correlations,
/// `E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)`.
///
/// This is the same combination as [`crate::stats::chsh`] with the terms in its order.
pub fn chsh_quantum(a: f64, a_prime: f64, b: f64, b_prime: f64) -> f64 {
    let e = |x, y| singlet_e(x, y).value;
    e(a, b) + e(a_prime, b) + e(a_prime, b_prime) - e(a, b_prime)
}

/// The singlet correlations for a CHSH quadruple in Bell-check order:
/// `(E(a,b), E(a,b′), E(a′,b′), E(a′,b))`.
pub fn singlet_quadruple(a: f64, a_prime: f64, b: f64, b_prime: f64) -> [f64; 4] {
    [
        singlet_e(a, b).value,
        singlet_e(a, b_prime).value,
        singlet_e(a_prime, b_prime).value,
        singlet_e(a_prime, b).value,
    ]
}
