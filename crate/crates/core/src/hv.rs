//! Local hidden-variable models.
//!
//! A model draws a hidden variable λ at the source and then answers each wing with an
//! outcome function of `(λ, local setting)` only. The remote setting never appears in
//! any signature in this module, so locality holds by construction rather than by
//! convention.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::rng::{trial_rng, TrialRng};

/// Tolerance accepted on a probability table before it is renormalized.
pub const TABLE_SUM_TOLERANCE: f64 = 1e-9;

/// Default number of circle points used for exact expectations over a continuous λ.
pub const DEFAULT_GRID_N: usize = 10_000;

/// Maps any finite angle into `[0, 2π)`.
pub fn normalize_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Writes `x` with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A measurement-device configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    /// Continuous angle in `[0, 2π)`.
    Angle(f64),
    /// One of three discrete settings; index `i` corresponds to the angle `2πi/3`.
    Index(u8),
}

impl Setting {
    pub fn angle(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::usage(format!(
                "setting angle must be finite, got {x}"
            )));
        }
        Ok(Setting::Angle(normalize_angle(x)))
    }

    pub fn index(i: u8) -> Result<Self> {
        if i >= 3 {
            return Err(Error::usage(format!(
                "discrete setting index must be < 3, got {i}"
            )));
        }
        Ok(Setting::Index(i))
    }

    /// The three discrete settings in order.
    pub fn discrete() -> [Setting; 3] {
        [Setting::Index(0), Setting::Index(1), Setting::Index(2)]
    }

    pub fn as_angle(&self) -> f64 {
        match *self {
            Setting::Angle(a) => a,
            Setting::Index(0) => 0.0,
            Setting::Index(1) => 2.0 * PI / 3.0,
            Setting::Index(_) => 4.0 * PI / 3.0,
        }
    }

    /// Wire/CSV token: `i0`..`i2` or `a<angle>`.
    pub fn token(&self) -> String {
        match *self {
            Setting::Index(i) => format!("i{i}"),
            Setting::Angle(a) => format!("a{}", fmt_f64(a)),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

impl Serialize for Setting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.token())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix('i') {
            let i: u8 = rest
                .parse()
                .map_err(|_| Error::usage(format!("bad setting index {s:?}")))?;
            Setting::index(i)
        } else if let Some(rest) = s.strip_prefix('a') {
            let x: f64 = rest
                .parse()
                .map_err(|_| Error::usage(format!("bad setting angle {s:?}")))?;
            Setting::angle(x)
        } else {
            let x: f64 = s
                .parse()
                .map_err(|_| Error::usage(format!("bad setting {s:?}")))?;
            Setting::angle(x)
        }
    }
}

/// A binary detector result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_sign(s: i64) -> Result<Self> {
        match s {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            _ => Err(Error::usage(format!(
                "outcome sign must be +1 or -1, got {s}"
            ))),
        }
    }

    pub fn negate(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }

    /// Half-circle threshold: `[0, π)` is +1, `[π, 2π)` is −1.
    pub fn from_phase(theta: f64) -> Self {
        if normalize_angle(theta) < PI {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Red,
    Green,
}

impl Color {
    /// Red ↦ +1, Green ↦ −1.
    pub fn outcome(self) -> Outcome {
        match self {
            Color::Red => Outcome::Plus,
            Color::Green => Outcome::Minus,
        }
    }

    fn letter(self) -> char {
        match self {
            Color::Red => 'R',
            Color::Green => 'G',
        }
    }
}

/// A red/green triple fixing the flash color for each of the three settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstructionSet(pub [Color; 3]);

impl InstructionSet {
    /// All eight sets, ordered `RRR, RRG, RGR, RGG, GRR, GRG, GGR, GGG`.
    pub fn all() -> [InstructionSet; 8] {
        std::array::from_fn(InstructionSet::from_index)
    }

    pub fn from_index(i: usize) -> Self {
        let c = |bit: usize| {
            if (i >> bit) & 1 == 0 {
                Color::Red
            } else {
                Color::Green
            }
        };
        InstructionSet([c(2), c(1), c(0)])
    }

    pub fn index(&self) -> usize {
        self.0
            .iter()
            .fold(0, |acc, c| (acc << 1) | usize::from(*c == Color::Green))
    }

    pub fn is_constant(&self) -> bool {
        self.0[0] == self.0[1] && self.0[1] == self.0[2]
    }

    pub fn color(&self, setting: usize) -> Color {
        self.0[setting]
    }
}

impl fmt::Display for InstructionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.0 {
            write!(f, "{}", c.letter())?;
        }
        Ok(())
    }
}

impl FromStr for InstructionSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 3 {
            return Err(Error::usage(format!(
                "instruction set must have 3 colors, got {s:?}"
            )));
        }
        let mut colors = [Color::Red; 3];
        for (slot, ch) in colors.iter_mut().zip(chars) {
            *slot = match ch.to_ascii_uppercase() {
                'R' => Color::Red,
                'G' => Color::Green,
                _ => return Err(Error::usage(format!("unknown color {ch:?} in {s:?}"))),
            };
        }
        Ok(InstructionSet(colors))
    }
}

/// Source-event clock phase shared by both particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockLambda {
    theta0: f64,
}

impl ClockLambda {
    pub fn new(theta0: f64) -> Self {
        ClockLambda {
            theta0: normalize_angle(theta0),
        }
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }
}

/// One draw of the hidden variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSample {
    Instructions(InstructionSet),
    Clock(ClockLambda),
}

impl LambdaSample {
    /// Wire token: `set:RRG` or `theta:<17 significant digits>`.
    pub fn token(&self) -> String {
        match self {
            LambdaSample::Instructions(set) => format!("set:{set}"),
            LambdaSample::Clock(c) => format!("theta:{}", fmt_f64(c.theta0())),
        }
    }
}

impl FromStr for LambdaSample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("set:") {
            Ok(LambdaSample::Instructions(rest.parse()?))
        } else if let Some(rest) = s.strip_prefix("theta:") {
            let theta: f64 = rest
                .parse()
                .map_err(|_| Error::usage(format!("bad clock phase {rest:?}")))?;
            if !theta.is_finite() {
                return Err(Error::usage("clock phase must be finite"));
            }
            Ok(LambdaSample::Clock(ClockLambda::new(theta)))
        } else {
            Err(Error::usage(format!("unrecognized hidden variable {s:?}")))
        }
    }
}

/// How the B detector relates to the A detector rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BConvention {
    /// B applies the same rule as A.
    Aligned,
    /// B applies the negated rule (singlet-like).
    AntiAligned,
}

impl BConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            BConvention::Aligned => "aligned",
            BConvention::AntiAligned => "anti_aligned",
        }
    }

    pub fn apply(self, outcome: Outcome) -> Outcome {
        match self {
            BConvention::Aligned => outcome,
            BConvention::AntiAligned => outcome.negate(),
        }
    }
}

impl FromStr for BConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "aligned" => Ok(BConvention::Aligned),
            "anti_aligned" | "anti-aligned" => Ok(BConvention::AntiAligned),
            other => Err(Error::config(format!("unknown b_convention {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSpace {
    FiniteEnumerable,
    ContinuousOnCircle,
}

/// A local hidden-variable model.
///
/// Implementors supply the sampler, the single local rule and the enumeration; the
/// A and B outcome functions are derived from the local rule and never receive the
/// remote setting.
pub trait LhvModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn lambda_space(&self) -> LambdaSpace;

    fn b_convention(&self) -> BConvention;

    /// Draws λ from ρ(λ) using `rng`.
    fn draw_lambda(&self, rng: &mut TrialRng) -> LambdaSample;

    /// The detector rule shared by both wings before the B convention is applied.
    fn local_rule(&self, lambda: &LambdaSample, setting: Setting) -> Result<Outcome>;

    /// All atoms with their probabilities, or a uniform quadrature grid for continuous λ.
    fn enumerate_lambda(&self) -> Vec<(LambdaSample, f64)>;

    fn sample_lambda(&self, seed: u64) -> LambdaSample {
        self.lambda_for_trial(seed, 0)
    }

    /// λ for trial `trial` of the run seeded with `seed`.
    fn lambda_for_trial(&self, seed: u64, trial: u64) -> LambdaSample {
        self.draw_lambda(&mut trial_rng(seed, trial))
    }

    fn outcome_a(&self, lambda: &LambdaSample, a: Setting) -> Result<Outcome> {
        self.local_rule(lambda, a)
    }

    fn outcome_b(&self, lambda: &LambdaSample, b: Setting) -> Result<Outcome> {
        Ok(self.b_convention().apply(self.local_rule(lambda, b)?))
    }
}

/// Mermin's red/green instruction-set model.
#[derive(Debug, Clone, PartialEq)]
pub struct MerminModel {
    probs: [f64; 8],
    b_convention: BConvention,
}

impl MerminModel {
    /// Builds a model from a table indexed like [`InstructionSet::all`].
    pub fn from_table(probs: [f64; 8]) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::config(format!("invalid probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > TABLE_SUM_TOLERANCE {
            return Err(Error::config(format!(
                "instruction-set probabilities sum to {sum}, expected 1"
            )));
        }
        let probs = probs.map(|p| p / sum);
        Ok(MerminModel {
            probs,
            b_convention: BConvention::Aligned,
        })
    }

    pub fn uniform() -> Self {
        MerminModel {
            probs: [0.125; 8],
            b_convention: BConvention::Aligned,
        }
    }

    /// Uniform over the six sets that mix both colors.
    pub fn nonconstant_uniform() -> Self {
        let mut probs = [1.0 / 6.0; 8];
        probs[0] = 0.0;
        probs[7] = 0.0;
        MerminModel {
            probs,
            b_convention: BConvention::Aligned,
        }
    }

    pub fn point_mass(set: InstructionSet) -> Self {
        let mut probs = [0.0; 8];
        probs[set.index()] = 1.0;
        MerminModel {
            probs,
            b_convention: BConvention::Aligned,
        }
    }

    pub fn with_b_convention(mut self, conv: BConvention) -> Self {
        self.b_convention = conv;
        self
    }

    pub fn probabilities(&self) -> &[f64; 8] {
        &self.probs
    }
}

impl LhvModel for MerminModel {
    fn name(&self) -> &'static str {
        "mermin"
    }

    fn lambda_space(&self) -> LambdaSpace {
        LambdaSpace::FiniteEnumerable
    }

    fn b_convention(&self) -> BConvention {
        self.b_convention
    }

    fn draw_lambda(&self, rng: &mut TrialRng) -> LambdaSample {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return LambdaSample::Instructions(InstructionSet::from_index(i));
            }
        }
        LambdaSample::Instructions(InstructionSet::from_index(last))
    }

    fn local_rule(&self, lambda: &LambdaSample, setting: Setting) -> Result<Outcome> {
        let LambdaSample::Instructions(set) = lambda else {
            return Err(Error::usage(
                "mermin model received a non-instruction-set λ",
            ));
        };
        match setting {
            Setting::Index(i) => Ok(set.color(usize::from(i)).outcome()),
            Setting::Angle(_) => Err(Error::usage("mermin model requires discrete settings")),
        }
    }

    fn enumerate_lambda(&self) -> Vec<(LambdaSample, f64)> {
        InstructionSet::all()
            .into_iter()
            .zip(self.probs)
            .filter(|(_, p)| *p > 0.0)
            .map(|(set, p)| (LambdaSample::Instructions(set), p))
            .collect()
    }
}

/// Synchronized-clock model: λ is a phase uniform on the circle, a setting advances the
/// clock by its angle, and the detector reads the half circle the clock lands in.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockModel {
    b_convention: BConvention,
    grid_n: usize,
}

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel {
            b_convention: BConvention::AntiAligned,
            grid_n: DEFAULT_GRID_N,
        }
    }
}

impl ClockModel {
    pub fn new(b_convention: BConvention) -> Self {
        ClockModel {
            b_convention,
            ..Default::default()
        }
    }

    pub fn with_grid(mut self, grid_n: usize) -> Result<Self> {
        if grid_n == 0 {
            return Err(Error::config("grid_n must be positive"));
        }
        self.grid_n = grid_n;
        Ok(self)
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }
}

impl LhvModel for ClockModel {
    fn name(&self) -> &'static str {
        "clock"
    }

    fn lambda_space(&self) -> LambdaSpace {
        LambdaSpace::ContinuousOnCircle
    }

    fn b_convention(&self) -> BConvention {
        self.b_convention
    }

    fn draw_lambda(&self, rng: &mut TrialRng) -> LambdaSample {
        let u: f64 = rng.random();
        LambdaSample::Clock(ClockLambda::new(u * TAU))
    }

    fn local_rule(&self, lambda: &LambdaSample, setting: Setting) -> Result<Outcome> {
        let LambdaSample::Clock(c) = lambda else {
            return Err(Error::usage("clock model received a non-clock λ"));
        };
        Ok(Outcome::from_phase(c.theta0() + setting.as_angle()))
    }

    fn enumerate_lambda(&self) -> Vec<(LambdaSample, f64)> {
        let n = self.grid_n;
        let w = 1.0 / n as f64;
        (0..n)
            .map(|k| {
                (
                    LambdaSample::Clock(ClockLambda::new(TAU * k as f64 / n as f64)),
                    w,
                )
            })
            .collect()
    }
}

/// Either concrete model, as selected by a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Mermin(MerminModel),
    Clock(ClockModel),
}

impl AnyModel {
    fn inner(&self) -> &dyn LhvModel {
        match self {
            AnyModel::Mermin(m) => m,
            AnyModel::Clock(m) => m,
        }
    }

    /// Reads `model`, `b_convention`, `p[XYZ]` and `grid_n` from `cfg`, consuming them.
    ///
    /// Missing `p[..]` entries count as zero; a mermin config with no table at all is
    /// uniform over the eight sets. The caller decides whether leftovers are an error.
    pub fn take_from_config(cfg: &mut KvConfig) -> Result<Self> {
        let kind = cfg
            .take("model")
            .ok_or_else(|| Error::config("missing key `model`"))?;
        let conv: Option<BConvention> = cfg.take("b_convention").map(|s| s.parse()).transpose()?;
        match kind.as_str() {
            "mermin" => {
                let entries = cfg.take_prefixed("p[");
                let mut probs = if entries.is_empty() {
                    [0.125; 8]
                } else {
                    [0.0; 8]
                };
                for (key, value) in entries {
                    let label = key
                        .strip_prefix("p[")
                        .and_then(|k| k.strip_suffix(']'))
                        .ok_or_else(|| Error::config(format!("malformed key {key:?}")))?;
                    let set: InstructionSet = label
                        .parse()
                        .map_err(|e: Error| Error::config(e.to_string()))?;
                    probs[set.index()] = value
                        .parse()
                        .map_err(|_| Error::config(format!("{key}={value}: not a number")))?;
                }
                let model = MerminModel::from_table(probs)?
                    .with_b_convention(conv.unwrap_or(BConvention::Aligned));
                if cfg.contains("grid_n") {
                    return Err(Error::config("grid_n applies only to the clock model"));
                }
                Ok(AnyModel::Mermin(model))
            }
            "clock" => {
                let mut model = ClockModel::new(conv.unwrap_or(BConvention::AntiAligned));
                if let Some(n) = cfg.take_parsed::<usize>("grid_n")? {
                    model = model.with_grid(n)?;
                }
                Ok(AnyModel::Clock(model))
            }
            other => Err(Error::config(format!("unknown model {other:?}"))),
        }
    }

    /// Parses a complete model config; unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::parse(text)?;
        let model = Self::take_from_config(&mut cfg)?;
        cfg.finish()?;
        Ok(model)
    }

    /// Serializes back to the config format.
    pub fn to_config_string(&self) -> String {
        let mut out = format!(
            "model={}\nb_convention={}\n",
            self.name(),
            self.b_convention().as_str()
        );
        match self {
            AnyModel::Mermin(m) => {
                for (set, p) in InstructionSet::all().iter().zip(m.probabilities()) {
                    out.push_str(&format!("p[{set}]={}\n", fmt_f64(*p)));
                }
            }
            AnyModel::Clock(c) => out.push_str(&format!("grid_n={}\n", c.grid_n())),
        }
        out
    }
}

impl LhvModel for AnyModel {
    fn name(&self) -> &'static str {
        self.inner().name()
    }

    fn lambda_space(&self) -> LambdaSpace {
        self.inner().lambda_space()
    }

    fn b_convention(&self) -> BConvention {
        self.inner().b_convention()
    }

    fn draw_lambda(&self, rng: &mut TrialRng) -> LambdaSample {
        self.inner().draw_lambda(rng)
    }

    fn local_rule(&self, lambda: &LambdaSample, setting: Setting) -> Result<Outcome> {
        self.inner().local_rule(lambda, setting)
    }

    fn enumerate_lambda(&self) -> Vec<(LambdaSample, f64)> {
        self.inner().enumerate_lambda()
    }
}

impl From<MerminModel> for AnyModel {
    fn from(m: MerminModel) -> Self {
        AnyModel::Mermin(m)
    }
}

impl From<ClockModel> for AnyModel {
    fn from(m: ClockModel) -> Self {
        AnyModel::Clock(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rrg() -> InstructionSet {
        "RRG".parse().unwrap()
    }

    #[test]
    fn point_mass_always_samples_its_atom() {
        let m = MerminModel::point_mass(rrg());
        for seed in [0, 1, 42, u64::MAX] {
            assert_eq!(m.sample_lambda(seed), LambdaSample::Instructions(rrg()));
        }
    }

    #[test]
    fn clock_sample_in_range() {
        let LambdaSample::Clock(c) = ClockModel::default().sample_lambda(42) else {
            panic!("wrong λ kind");
        };
        assert!((0.0..TAU).contains(&c.theta0()));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = ClockModel::default();
        assert_eq!(m.sample_lambda(9), m.sample_lambda(9));
        assert_ne!(m.lambda_for_trial(9, 0), m.lambda_for_trial(9, 1));
    }

    #[test]
    fn mermin_uniform_frequencies() {
        let m = MerminModel::uniform();
        let n = 100_000;
        let mut counts = [0usize; 8];
        for i in 0..n {
            let LambdaSample::Instructions(s) = m.lambda_for_trial(3, i) else {
                unreachable!()
            };
            counts[s.index()] += 1;
        }
        let expected = n as f64 / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // df = 7, p = 0.001
        assert!(chi2 < 24.32, "chi2 = {chi2}");
        for c in counts {
            assert!((c as f64 / n as f64 - 0.125).abs() < 0.005);
        }
    }

    #[test]
    fn clock_phase_is_uniform() {
        let m = ClockModel::default();
        let n = 100_000u64;
        let bins = 16;
        let mut counts = vec![0usize; bins];
        for i in 0..n {
            let LambdaSample::Clock(c) = m.lambda_for_trial(11, i) else {
                unreachable!()
            };
            counts[(c.theta0() / TAU * bins as f64) as usize] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // df = 15, p = 0.001
        assert!(chi2 < 37.70, "chi2 = {chi2}");
    }

    #[test]
    fn skewed_table_matches_weights() {
        let mut probs = [0.0; 8];
        probs[1] = 0.7;
        probs[6] = 0.3;
        let m = MerminModel::from_table(probs).unwrap();
        let n = 100_000;
        let hits = (0..n)
            .filter(|&i| {
                m.lambda_for_trial(5, i)
                    == LambdaSample::Instructions(InstructionSet::from_index(1))
            })
            .count();
        assert!((hits as f64 / n as f64 - 0.7).abs() < 0.005);
    }

    #[test]
    fn clock_outcome_examples() {
        let m = ClockModel::default();
        let lam = LambdaSample::Clock(ClockLambda::new(FRAC_PI_2));
        assert_eq!(m.outcome_a(&lam, Setting::Index(0)).unwrap(), Outcome::Plus);
        assert_eq!(
            m.outcome_a(&lam, Setting::Index(1)).unwrap(),
            Outcome::Minus
        );
        assert_eq!(
            m.outcome_b(&lam, Setting::Index(0)).unwrap(),
            Outcome::Minus
        );
        let aligned = ClockModel::new(BConvention::Aligned);
        assert_eq!(
            aligned.outcome_b(&lam, Setting::Index(0)).unwrap(),
            Outcome::Plus
        );
    }

    #[test]
    fn clock_boundaries_are_half_open() {
        let m = ClockModel::new(BConvention::Aligned);
        let at = |t: f64| {
            m.outcome_a(&LambdaSample::Clock(ClockLambda::new(t)), Setting::Index(0))
                .unwrap()
        };
        assert_eq!(at(0.0), Outcome::Plus);
        assert_eq!(at(PI), Outcome::Minus);
        assert_eq!(at(TAU), Outcome::Plus);
    }

    #[test]
    fn mermin_outcome_examples() {
        let m = MerminModel::point_mass(rrg());
        let lam = LambdaSample::Instructions(rrg());
        assert_eq!(
            m.outcome_a(&lam, Setting::Index(2)).unwrap(),
            Outcome::Minus
        );
        assert_eq!(m.outcome_b(&lam, Setting::Index(0)).unwrap(), Outcome::Plus);
    }

    #[test]
    fn kind_mismatch_is_usage_error() {
        let m = MerminModel::uniform();
        let lam = LambdaSample::Instructions(rrg());
        assert!(matches!(
            m.outcome_a(&lam, Setting::Angle(0.3)),
            Err(Error::Usage(_))
        ));
        let clock_lam = LambdaSample::Clock(ClockLambda::new(0.1));
        assert!(matches!(
            m.outcome_a(&clock_lam, Setting::Index(0)),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            ClockModel::default().outcome_a(&lam, Setting::Index(0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn enumeration_examples() {
        let atoms = MerminModel::uniform().enumerate_lambda();
        assert_eq!(atoms.len(), 8);
        assert!(atoms.iter().all(|(_, p)| *p == 0.125));

        let atoms = MerminModel::point_mass(rrg()).enumerate_lambda();
        assert_eq!(atoms, vec![(LambdaSample::Instructions(rrg()), 1.0)]);

        let grid = ClockModel::default()
            .with_grid(4)
            .unwrap()
            .enumerate_lambda();
        let thetas: Vec<f64> = grid
            .iter()
            .map(|(l, _)| match l {
                LambdaSample::Clock(c) => c.theta0(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(thetas, vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]);
        assert!(grid.iter().all(|(_, w)| *w == 0.25));
    }

    #[test]
    fn table_must_sum_to_one() {
        assert!(matches!(
            MerminModel::from_table([0.1; 8]),
            Err(Error::Config(_))
        ));
        let mut bad = [0.0; 8];
        bad[0] = 1.5;
        bad[1] = -0.5;
        assert!(MerminModel::from_table(bad).is_err());
        let m = MerminModel::from_table([
            0.125 + 1e-11,
            0.125,
            0.125,
            0.125,
            0.125,
            0.125,
            0.125,
            0.125,
        ])
        .unwrap();
        let sum: f64 = m.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn setting_invariants() {
        assert!(Setting::index(3).is_err());
        assert_eq!(
            Setting::angle(-FRAC_PI_2).unwrap(),
            Setting::Angle(3.0 * FRAC_PI_2)
        );
        assert!(Setting::angle(f64::NAN).is_err());
        assert_eq!("i2".parse::<Setting>().unwrap(), Setting::Index(2));
        let s = Setting::angle(1.234).unwrap();
        assert_eq!(s.token().parse::<Setting>().unwrap(), s);
    }

    #[test]
    fn instruction_set_indexing() {
        for (i, set) in InstructionSet::all().iter().enumerate() {
            assert_eq!(set.index(), i);
            assert_eq!(set.to_string().parse::<InstructionSet>().unwrap(), *set);
        }
        assert_eq!(InstructionSet::from_index(1).to_string(), "RRG");
        assert!("RRX".parse::<InstructionSet>().is_err());
        assert!("RR".parse::<InstructionSet>().is_err());
    }

    #[test]
    fn lambda_token_round_trip() {
        let lam = LambdaSample::Clock(ClockLambda::new(std::f64::consts::E));
        assert_eq!(lam.token().parse::<LambdaSample>().unwrap(), lam);
        let lam = LambdaSample::Instructions(rrg());
        assert_eq!(lam.token(), "set:RRG");
        assert_eq!(lam.token().parse::<LambdaSample>().unwrap(), lam);
    }

    #[test]
    fn config_round_trip() {
        let text = "model=mermin\nb_convention=aligned\np[RRG]=0.5\np[GGR]=0.5\n";
        let m = AnyModel::from_config_str(text).unwrap();
        assert_eq!(AnyModel::from_config_str(&m.to_config_string()).unwrap(), m);

        let m = AnyModel::from_config_str("model=clock\ngrid_n=64").unwrap();
        assert_eq!(m.b_convention(), BConvention::AntiAligned);
        assert_eq!(AnyModel::from_config_str(&m.to_config_string()).unwrap(), m);
    }

    #[test]
    fn config_rejects_bad_input() {
        assert!(AnyModel::from_config_str("model=mermin\np[RRR]=0.5").is_err());
        assert!(AnyModel::from_config_str("model=clock\nfoo=1").is_err());
        assert!(AnyModel::from_config_str("model=quantum").is_err());
        assert!(AnyModel::from_config_str("model=clock\nb_convention=sideways").is_err());
        assert!(AnyModel::from_config_str("model=mermin\np[RRX]=1").is_err());
    }

    #[test]
    fn tableless_mermin_config_is_uniform() {
        let m = AnyModel::from_config_str("model=mermin").unwrap();
        assert_eq!(m, AnyModel::Mermin(MerminModel::uniform()));
    }
}
