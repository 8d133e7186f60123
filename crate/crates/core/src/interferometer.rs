//! Two-sided resultant-phase interferometer.
//!
//! Each source event draws one [`SourceLambda`] that both daughters carry. A side turns
//! that λ and its own [`SideConfig`] into a list of path phases, sums the unit phasors,
//! and reads the resultant angle with the half-circle detector rule. Nothing computed
//! on one side is visible to the other: [`measure_side`] takes exactly one config.
//!
//! Phase of replica `r` on arm `i`:
//!
//! ```text
//! φ = θ₀ − ω·dt₀ + k·((Lᵢ − L_ref) + g·dx₀ + σ·z) + δ·[i = shifted arm]
//! ```
//!
//! With one arm, one replica, no jitter and no source spread this collapses to
//! `θ₀ + δ`, the clock model.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::hv::{normalize_angle, BConvention, Outcome};
use crate::oracle::rt_coincidence_prob;
use crate::path::{resultant, Resultant};
use crate::rng::{derive_seed, trial_rng, TrialRng};
use crate::stats::ProductTally;

const SIDE_TAG_A: u64 = 0xA;
const SIDE_TAG_B: u64 = 0xB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    fn tag(self) -> u64 {
        match self {
            Side::A => SIDE_TAG_A,
            Side::B => SIDE_TAG_B,
        }
    }
}

/// Spreads of the shared source-event variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceSpreads {
    /// Standard deviation of the emission-time offset.
    pub sigma_t: f64,
    /// Standard deviation of the transverse source offset.
    pub sigma_x: f64,
    /// Draw the source clock phase uniformly on the circle; otherwise it is 0.
    pub uniform_clock_phase: bool,
}

impl Default for SourceSpreads {
    fn default() -> Self {
        SourceSpreads {
            sigma_t: 0.0,
            sigma_x: 0.0,
            uniform_clock_phase: true,
        }
    }
}

/// The shared randomness both daughters carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceLambda {
    pub theta0: f64,
    pub dt0: f64,
    pub dx0: f64,
}

impl SourceLambda {
    /// Draws λ. The first uniform draw is the clock phase, as in the clock model, so
    /// both models see the same θ₀ for the same `(seed, trial)`.
    pub fn draw(spreads: &SourceSpreads, rng: &mut TrialRng) -> Self {
        let u: f64 = rng.random();
        let z_t: f64 = StandardNormal.sample(rng);
        let z_x: f64 = StandardNormal.sample(rng);
        SourceLambda {
            theta0: if spreads.uniform_clock_phase {
                normalize_angle(u * TAU)
            } else {
                0.0
            },
            dt0: spreads.sigma_t * z_t,
            dx0: spreads.sigma_x * z_x,
        }
    }
}

/// One side's optics, reduced to scalar path lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideConfig {
    pub arm_lengths: Vec<f64>,
    /// Length whose phase is taken as zero; congruent paths share it.
    pub reference_length: f64,
    pub k_wave: f64,
    /// Clock rotation per unit emission delay.
    pub omega: f64,
    pub n_ensemble: usize,
    pub sigma_path: f64,
    /// Externally set phase δ, applied to `shifted_arm` only.
    pub phase_shifter: f64,
    pub shifted_arm: usize,
    /// Signed coefficient with which the transverse offset enters every length.
    pub geometry_sign: f64,
    pub detector: BConvention,
}

impl SideConfig {
    /// Two arms of unequal length with a small replica ensemble.
    pub fn two_arm(geometry_sign: f64) -> Self {
        SideConfig {
            arm_lengths: vec![1.0, 1.25],
            reference_length: 1.0,
            k_wave: TAU,
            omega: 1.0,
            n_ensemble: 4,
            sigma_path: 0.05,
            phase_shifter: 0.0,
            shifted_arm: 1,
            geometry_sign,
            detector: BConvention::Aligned,
        }
    }

    /// One arm, one path, no jitter: the clock-model limit.
    pub fn single_path() -> Self {
        SideConfig {
            arm_lengths: vec![1.0],
            reference_length: 1.0,
            k_wave: TAU,
            omega: 1.0,
            n_ensemble: 1,
            sigma_path: 0.0,
            phase_shifter: 0.0,
            shifted_arm: 0,
            geometry_sign: 1.0,
            detector: BConvention::Aligned,
        }
    }

    pub fn with_phase(mut self, delta: f64) -> Self {
        self.phase_shifter = delta;
        self
    }

    pub fn with_detector(mut self, detector: BConvention) -> Self {
        self.detector = detector;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.arm_lengths.is_empty() {
            return Err(Error::config("a side needs at least one arm"));
        }
        if self
            .arm_lengths
            .iter()
            .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return Err(Error::config("arm lengths must be positive"));
        }
        if self.n_ensemble == 0 {
            return Err(Error::config("n_ensemble must be at least 1"));
        }
        if self.shifted_arm >= self.arm_lengths.len() {
            return Err(Error::config(format!(
                "shifted_arm {} out of range for {} arms",
                self.shifted_arm,
                self.arm_lengths.len()
            )));
        }
        let finite = [
            self.reference_length,
            self.k_wave,
            self.omega,
            self.phase_shifter,
            self.geometry_sign,
        ];
        if finite.iter().any(|x| !x.is_finite())
            || !(self.sigma_path.is_finite() && self.sigma_path >= 0.0)
        {
            return Err(Error::config(
                "side parameters must be finite and sigma_path non-negative",
            ));
        }
        Ok(())
    }

    fn take_from_config(cfg: &mut KvConfig, prefix: &str, mut base: SideConfig) -> Result<Self> {
        let key = |k: &str| format!("{prefix}.{k}");
        if let Some(v) = cfg.take(&key("arm_lengths")) {
            base.arm_lengths = v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("bad arm length {x:?}")))
                })
                .collect::<Result<_>>()?;
            base.shifted_arm = base.arm_lengths.len().saturating_sub(1);
        }
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = cfg.take_parsed(&key(stringify!($field)))? {
                    base.$field = v;
                }
            };
        }
        take!(reference_length);
        take!(k_wave);
        take!(omega);
        take!(n_ensemble);
        take!(sigma_path);
        take!(phase_shifter);
        take!(shifted_arm);
        take!(geometry_sign);
        if let Some(v) = cfg.take(&key("detector")) {
            base.detector = v.parse()?;
        }
        base.validate()?;
        Ok(base)
    }
}

/// Path phases for one side. Replica jitter comes from `rng`, which must be local to
/// this side.
pub fn side_phases(cfg: &SideConfig, lambda: &SourceLambda, rng: &mut TrialRng) -> Vec<f64> {
    let base = lambda.theta0 - cfg.omega * lambda.dt0;
    let mut phases = Vec::with_capacity(cfg.arm_lengths.len() * cfg.n_ensemble);
    for (i, len) in cfg.arm_lengths.iter().enumerate() {
        for _ in 0..cfg.n_ensemble {
            let z: f64 = StandardNormal.sample(rng);
            let excess =
                (len - cfg.reference_length) + cfg.geometry_sign * lambda.dx0 + cfg.sigma_path * z;
            let mut phi = base + cfg.k_wave * excess;
            if i == cfg.shifted_arm {
                phi += cfg.phase_shifter;
            }
            phases.push(phi);
        }
    }
    phases
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideResultant {
    pub resultant: Resultant,
    pub side: Side,
}

/// A detector reading; a vanishing resultant has no angle and is never coerced to ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Detection {
    Outcome(Outcome),
    Undetermined,
}

impl Detection {
    pub fn outcome(&self) -> Option<Outcome> {
        match self {
            Detection::Outcome(o) => Some(*o),
            Detection::Undetermined => None,
        }
    }
}

/// Half-circle rule on the resultant angle: `[0, π)` is +1, `[π, 2π)` is −1.
pub fn detector_outcome(sr: &SideResultant) -> Detection {
    if sr.resultant.degenerate {
        Detection::Undetermined
    } else {
        Detection::Outcome(Outcome::from_phase(sr.resultant.theta))
    }
}

/// Everything one side computes for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideMeasurement {
    pub resultant: SideResultant,
    pub detection: Detection,
}

/// Measures one side of trial `trial`. The remote side's config is not an input.
pub fn measure_side(
    cfg: &SideConfig,
    side: Side,
    lambda: &SourceLambda,
    seed: u64,
    trial: u64,
) -> Result<SideMeasurement> {
    let mut rng = trial_rng(derive_seed(seed, side.tag()), trial);
    let phases = side_phases(cfg, lambda, &mut rng);
    let sr = SideResultant {
        resultant: resultant(&phases)?,
        side,
    };
    let detection = match detector_outcome(&sr) {
        Detection::Outcome(o) => Detection::Outcome(cfg.detector.apply(o)),
        Detection::Undetermined => Detection::Undetermined,
    };
    Ok(SideMeasurement {
        resultant: sr,
        detection,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub lambda: SourceLambda,
    pub delta_a: f64,
    pub delta_b: f64,
    pub a: SideMeasurement,
    pub b: SideMeasurement,
}

/// One source event measured on both sides.
pub fn run_trial(
    cfg_a: &SideConfig,
    cfg_b: &SideConfig,
    spreads: &SourceSpreads,
    seed: u64,
    trial: u64,
) -> Result<TrialRecord> {
    cfg_a.validate()?;
    cfg_b.validate()?;
    let lambda = SourceLambda::draw(spreads, &mut trial_rng(seed, trial));
    Ok(TrialRecord {
        trial,
        seed,
        lambda,
        delta_a: cfg_a.phase_shifter,
        delta_b: cfg_b.phase_shifter,
        a: measure_side(cfg_a, Side::A, &lambda, seed, trial)?,
        b: measure_side(cfg_b, Side::B, &lambda, seed, trial)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub delta_a: f64,
    pub delta_b: f64,
    /// Correlation over trials where both sides were determined.
    pub e: Option<f64>,
    pub stderr: Option<f64>,
    pub p_agree: Option<f64>,
    pub p_undetermined: f64,
    pub quantum_fringe: f64,
    #[serde(skip)]
    pub tally: ProductTally,
    pub n_trials: u64,
}

/// Sweeps both phase shifters over `phase_grid` (`|grid|²` rows, δa-major). Every grid
/// point reuses trials `0..n_per_point` of `seed`.
pub fn correlation_scan(
    cfg_a: &SideConfig,
    cfg_b: &SideConfig,
    spreads: &SourceSpreads,
    phase_grid: &[f64],
    n_per_point: u64,
    seed: u64,
) -> Result<Vec<ScanRow>> {
    if phase_grid.is_empty() {
        return Err(Error::usage("phase grid must not be empty"));
    }
    if n_per_point == 0 {
        return Err(Error::usage("n_per_point must be at least 1"));
    }
    let mut rows = Vec::with_capacity(phase_grid.len() * phase_grid.len());
    for &da in phase_grid {
        for &db in phase_grid {
            let a = cfg_a.clone().with_phase(da);
            let b = cfg_b.clone().with_phase(db);
            let mut tally = ProductTally::default();
            let mut undetermined = 0u64;
            for trial in 0..n_per_point {
                let rec = run_trial(&a, &b, spreads, seed, trial)?;
                match (rec.a.detection.outcome(), rec.b.detection.outcome()) {
                    (Some(x), Some(y)) => tally.push(x, y),
                    _ => undetermined += 1,
                }
            }
            let corr = tally.correlation();
            rows.push(ScanRow {
                delta_a: da,
                delta_b: db,
                e: corr.map(|c| c.mean),
                stderr: corr.and_then(|c| c.stderr),
                p_agree: tally.agreement().map(|p| p.p_agree),
                p_undetermined: undetermined as f64 / n_per_point as f64,
                quantum_fringe: rt_coincidence_prob(da, db).value,
                tally,
                n_trials: n_per_point,
            });
        }
    }
    Ok(rows)
}

/// Full experiment description read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferometerConfig {
    pub side_a: SideConfig,
    pub side_b: SideConfig,
    pub spreads: SourceSpreads,
    pub phase_grid: Vec<f64>,
}

impl Default for InterferometerConfig {
    fn default() -> Self {
        InterferometerConfig {
            side_a: SideConfig::two_arm(1.0),
            side_b: SideConfig::two_arm(-1.0).with_detector(BConvention::AntiAligned),
            spreads: SourceSpreads {
                sigma_t: 0.1,
                sigma_x: 0.05,
                uniform_clock_phase: true,
            },
            phase_grid: uniform_phase_grid(8),
        }
    }
}

/// `n` equally spaced phases on `[0, 2π)`.
pub fn uniform_phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

impl InterferometerConfig {
    /// Consumes `a.*`, `b.*`, `sigma_t`, `sigma_x`, `uniform_clock_phase`, and either
    /// `phase_grid` (comma-separated radians) or `phase_steps`.
    pub fn take_from_config(cfg: &mut KvConfig) -> Result<Self> {
        let d = InterferometerConfig::default();
        let side_a = SideConfig::take_from_config(cfg, "a", d.side_a)?;
        let side_b = SideConfig::take_from_config(cfg, "b", d.side_b)?;
        let mut spreads = d.spreads;
        if let Some(v) = cfg.take_parsed("sigma_t")? {
            spreads.sigma_t = v;
        }
        if let Some(v) = cfg.take_parsed("sigma_x")? {
            spreads.sigma_x = v;
        }
        if let Some(v) = cfg.take_parsed("uniform_clock_phase")? {
            spreads.uniform_clock_phase = v;
        }
        if !(spreads.sigma_t >= 0.0 && spreads.sigma_x >= 0.0) {
            return Err(Error::config("source spreads must be non-negative"));
        }
        let phase_grid = match (
            cfg.take("phase_grid"),
            cfg.take_parsed::<usize>("phase_steps")?,
        ) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give phase_grid or phase_steps, not both"))
            }
            (Some(list), None) => list
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("bad phase {x:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
            (None, Some(n)) => uniform_phase_grid(n),
            (None, None) => d.phase_grid,
        };
        if phase_grid.is_empty() {
            return Err(Error::config("phase grid must not be empty"));
        }
        Ok(InterferometerConfig {
            side_a,
            side_b,
            spreads,
            phase_grid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

    fn quiet() -> SourceSpreads {
        SourceSpreads {
            sigma_t: 0.0,
            sigma_x: 0.0,
            uniform_clock_phase: false,
        }
    }

    fn lambda0() -> SourceLambda {
        SourceLambda {
            theta0: 0.0,
            dt0: 0.0,
            dx0: 0.0,
        }
    }

    fn two_equal_arms() -> SideConfig {
        SideConfig {
            arm_lengths: vec![2.0, 2.0],
            reference_length: 2.0,
            n_ensemble: 1,
            sigma_path: 0.0,
            ..SideConfig::two_arm(1.0)
        }
    }

    #[test]
    fn congruent_paths_add_coherently() {
        let phases = side_phases(&two_equal_arms(), &lambda0(), &mut trial_rng(0, 0));
        assert_eq!(phases[0], phases[1]);
        assert_eq!(resultant(&phases).unwrap().r, 2.0);
    }

    #[test]
    fn half_wave_difference_cancels() {
        let cfg = SideConfig {
            arm_lengths: vec![1.0, 1.5],
            k_wave: TAU,
            ..two_equal_arms()
        };
        let sr = SideResultant {
            resultant: resultant(&side_phases(&cfg, &lambda0(), &mut trial_rng(0, 0))).unwrap(),
            side: Side::A,
        };
        assert!(sr.resultant.degenerate);
        assert_eq!(detector_outcome(&sr), Detection::Undetermined);
    }

    #[test]
    fn quarter_shift_rotates_resultant() {
        let cfg = two_equal_arms().with_phase(FRAC_PI_2);
        let r = resultant(&side_phases(&cfg, &lambda0(), &mut trial_rng(0, 0))).unwrap();
        assert!((r.r - SQRT_2).abs() < 1e-12);
        assert!((r.theta - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn detector_examples() {
        let sr = |theta| SideResultant {
            resultant: Resultant {
                r: 1.0,
                theta,
                degenerate: false,
            },
            side: Side::A,
        };
        assert_eq!(
            detector_outcome(&sr(FRAC_PI_4)),
            Detection::Outcome(Outcome::Plus)
        );
        assert_eq!(
            detector_outcome(&sr(1.5 * PI)),
            Detection::Outcome(Outcome::Minus)
        );
        let zero = SideResultant {
            resultant: Resultant {
                r: 0.0,
                theta: 0.0,
                degenerate: true,
            },
            side: Side::B,
        };
        assert_eq!(detector_outcome(&zero), Detection::Undetermined);
    }

    #[test]
    fn quiet_symmetric_sides_are_deterministic_and_equal() {
        let cfg = SideConfig {
            sigma_path: 0.0,
            ..SideConfig::two_arm(1.0)
        };
        let first = run_trial(&cfg, &cfg, &quiet(), 1, 0).unwrap();
        for trial in 0..200 {
            let rec = run_trial(&cfg, &cfg, &quiet(), 1, trial).unwrap();
            assert_eq!(rec.a.detection, rec.b.detection);
            assert_eq!(rec.a.detection, first.a.detection);
        }
    }

    #[test]
    fn side_a_ignores_side_b_phase() {
        let a = SideConfig::two_arm(1.0);
        let spreads = SourceSpreads {
            sigma_t: 0.3,
            sigma_x: 0.2,
            uniform_clock_phase: true,
        };
        for trial in 0..100 {
            let x = run_trial(
                &a,
                &SideConfig::two_arm(-1.0).with_phase(0.0),
                &spreads,
                5,
                trial,
            )
            .unwrap();
            let y = run_trial(
                &a,
                &SideConfig::two_arm(-1.0).with_phase(2.5),
                &spreads,
                5,
                trial,
            )
            .unwrap();
            assert_eq!(x.a, y.a);
            assert_eq!(x.lambda, y.lambda);
        }
    }

    #[test]
    fn marginals_are_balanced_over_a_phase_sweep() {
        // balance comes from the uniform source clock phase; with θ₀ pinned a two-arm
        // side favours +1 (its resultant sits midway between the arm phases)
        let spreads = SourceSpreads {
            sigma_t: 0.5,
            sigma_x: 0.3,
            uniform_clock_phase: true,
        };
        let grid = uniform_phase_grid(50);
        let per_point = 2000u64;
        let (mut plus_a, mut plus_b, mut det_a, mut det_b) = (0u64, 0u64, 0u64, 0u64);
        for (k, &d) in grid.iter().enumerate() {
            let a = SideConfig::two_arm(1.0).with_phase(d);
            let b = SideConfig::two_arm(-1.0).with_phase(d);
            // fresh trials per grid point so the 10^5 draws are independent
            for t in k as u64 * per_point..(k as u64 + 1) * per_point {
                let rec = run_trial(&a, &b, &spreads, 21, t).unwrap();
                if let Some(o) = rec.a.detection.outcome() {
                    det_a += 1;
                    plus_a += u64::from(o == Outcome::Plus);
                }
                if let Some(o) = rec.b.detection.outcome() {
                    det_b += 1;
                    plus_b += u64::from(o == Outcome::Plus);
                }
            }
        }
        for (plus, det) in [(plus_a, det_a), (plus_b, det_b)] {
            let p = plus as f64 / det as f64;
            let sigma = (0.25 / det as f64).sqrt();
            assert!((p - 0.5).abs() < 3.0 * sigma, "p = {p}");
        }
    }

    #[test]
    fn scan_shape_and_fringe_column() {
        let grid = uniform_phase_grid(5);
        let rows = correlation_scan(
            &SideConfig::two_arm(1.0),
            &SideConfig::two_arm(-1.0),
            &SourceSpreads::default(),
            &grid,
            50,
            3,
        )
        .unwrap();
        assert_eq!(rows.len(), 25);
        for row in &rows {
            assert_eq!(
                row.quantum_fringe,
                rt_coincidence_prob(row.delta_a, row.delta_b).value
            );
        }
        assert!(correlation_scan(
            &SideConfig::two_arm(1.0),
            &SideConfig::two_arm(1.0),
            &SourceSpreads::default(),
            &[],
            5,
            0
        )
        .is_err());
    }

    #[test]
    fn zero_phases_symmetric_sides_fully_correlated() {
        let cfg = SideConfig {
            sigma_path: 0.0,
            ..SideConfig::two_arm(1.0)
        };
        let rows = correlation_scan(&cfg, &cfg, &quiet(), &[0.0], 100, 0).unwrap();
        assert_eq!(rows[0].e, Some(1.0));
    }

    #[test]
    fn global_length_shift_rotates_resultant() {
        let cfg = SideConfig::two_arm(1.0);
        let shifted = SideConfig {
            arm_lengths: cfg.arm_lengths.iter().map(|l| l + 0.37).collect(),
            ..cfg.clone()
        };
        let lam = SourceLambda {
            theta0: 1.1,
            dt0: 0.2,
            dx0: -0.1,
        };
        let r0 = resultant(&side_phases(&cfg, &lam, &mut trial_rng(4, 2))).unwrap();
        let r1 = resultant(&side_phases(&shifted, &lam, &mut trial_rng(4, 2))).unwrap();
        let rot = normalize_angle(r1.theta - r0.theta);
        let expect = normalize_angle(cfg.k_wave * 0.37);
        assert!((r0.r - r1.r).abs() < 1e-12);
        assert!((rot - expect).abs() < 1e-9);
    }

    #[test]
    fn config_parsing() {
        let mut cfg = KvConfig::parse(
            "a.arm_lengths=1.0,2.0,3.0\nb.detector=aligned\nsigma_t=0.2\nphase_steps=3\nuniform_clock_phase=false",
        )
        .unwrap();
        let ic = InterferometerConfig::take_from_config(&mut cfg).unwrap();
        cfg.finish().unwrap();
        assert_eq!(ic.side_a.arm_lengths.len(), 3);
        assert_eq!(ic.side_a.shifted_arm, 2);
        assert_eq!(ic.side_b.detector, BConvention::Aligned);
        assert_eq!(ic.phase_grid.len(), 3);
        assert!(!ic.spreads.uniform_clock_phase);

        let mut bad = KvConfig::parse("a.n_ensemble=0").unwrap();
        assert!(InterferometerConfig::take_from_config(&mut bad).is_err());
        let mut bad = KvConfig::parse("phase_grid=0,1\nphase_steps=2").unwrap();
        assert!(InterferometerConfig::take_from_config(&mut bad).is_err());
    }
}
