//! Correlation statistics over local hidden-variable models.
//!
//! Monte Carlo estimates are accumulated as integer tallies of agreeing and
//! disagreeing trials, so shards can be merged in any order and the merged result is
//! bit-identical to a single-threaded run with the same seed schedule.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hv::{LhvModel, Outcome, Setting};
use crate::oracle;
use crate::rng::{derive_seed, trial_rng};

/// Tolerance used by [`bell_check`] when every input is exact.
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// Trials per rayon shard.
const SHARD: u64 = 1 << 16;

const PAIR_TAG: u64 = 0x5e77_1465;

/// Running count of ±1 products.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProductTally {
    pub n: u64,
    pub agree: u64,
}

impl ProductTally {
    pub fn push(&mut self, a: Outcome, b: Outcome) {
        self.n += 1;
        if a == b {
            self.agree += 1;
        }
    }

    pub fn merge(mut self, other: ProductTally) -> ProductTally {
        self.n += other.n;
        self.agree += other.agree;
        self
    }

    /// Mean of `A·B` with the unbiased standard error.
    pub fn correlation(&self) -> Option<CorrelationEstimate> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let mean = (2.0 * self.agree as f64 - n) / n;
        let stderr = (self.n >= 2).then(|| {
            let var = (n / (n - 1.0)) * (1.0 - mean * mean);
            (var.max(0.0) / n).sqrt()
        });
        Some(CorrelationEstimate {
            mean,
            stderr,
            n_trials: self.n,
            exact: false,
        })
    }

    /// `P(A = B)` with the unbiased Bernoulli standard error.
    pub fn agreement(&self) -> Option<AgreementEstimate> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let p = self.agree as f64 / n;
        let stderr = (self.n >= 2).then(|| {
            let var = (n / (n - 1.0)) * p * (1.0 - p);
            (var.max(0.0) / n).sqrt()
        });
        Some(AgreementEstimate {
            p_agree: p,
            p_disagree: (self.n - self.agree) as f64 / n,
            stderr,
            n_trials: self.n,
            exact: false,
        })
    }
}

/// An estimate of `E(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub mean: f64,
    /// `None` when fewer than two trials were observed.
    pub stderr: Option<f64>,
    pub n_trials: u64,
    pub exact: bool,
}

impl CorrelationEstimate {
    pub fn exact(mean: f64, n_atoms: u64) -> Self {
        CorrelationEstimate {
            mean: mean.clamp(-1.0, 1.0),
            stderr: Some(0.0),
            n_trials: n_atoms,
            exact: true,
        }
    }

    /// `|self − reference| ≤ k·stderr`.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        let se = self.stderr.unwrap_or(f64::INFINITY);
        (self.mean - reference).abs() <= k * se
    }
}

/// `P(A = B)` together with its complement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementEstimate {
    pub p_agree: f64,
    pub p_disagree: f64,
    pub stderr: Option<f64>,
    pub n_trials: u64,
    pub exact: bool,
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::usage("trial count must be at least 1"))
    } else {
        Ok(())
    }
}

/// Tallies `n` trials of fixed settings. Trial `i` uses λ from `(seed, i)`.
pub fn tally_fixed(
    model: &dyn LhvModel,
    a: Setting,
    b: Setting,
    n: u64,
    seed: u64,
) -> Result<ProductTally> {
    (0..n.div_ceil(SHARD))
        .into_par_iter()
        .map(|shard| {
            let mut tally = ProductTally::default();
            for trial in shard * SHARD..((shard + 1) * SHARD).min(n) {
                let lambda = model.lambda_for_trial(seed, trial);
                tally.push(model.outcome_a(&lambda, a)?, model.outcome_b(&lambda, b)?);
            }
            Ok(tally)
        })
        .try_reduce(ProductTally::default, |x, y| Ok(x.merge(y)))
}

/// Monte Carlo estimate of `E(a, b)` from `n` independent λ draws.
pub fn estimate_e(
    model: &dyn LhvModel,
    a: Setting,
    b: Setting,
    n: u64,
    seed: u64,
) -> Result<CorrelationEstimate> {
    check_n(n)?;
    let tally = tally_fixed(model, a, b, n, seed)?;
    Ok(tally.correlation().expect("n >= 1"))
}

/// `E(a, b)` by enumeration (finite λ) or circle quadrature (continuous λ).
pub fn exact_e(model: &dyn LhvModel, a: Setting, b: Setting) -> Result<CorrelationEstimate> {
    let atoms = model.enumerate_lambda();
    let mut mean = 0.0;
    for (lambda, p) in &atoms {
        let prod = model.outcome_a(lambda, a)?.sign() * model.outcome_b(lambda, b)?.sign();
        mean += p * f64::from(prod);
    }
    Ok(CorrelationEstimate::exact(mean, atoms.len() as u64))
}

/// Exact `P(A = B)` at fixed settings.
pub fn exact_agreement(model: &dyn LhvModel, a: Setting, b: Setting) -> Result<AgreementEstimate> {
    let atoms = model.enumerate_lambda();
    let mut p_agree = 0.0;
    let mut p_disagree = 0.0;
    for (lambda, p) in &atoms {
        if model.outcome_a(lambda, a)? == model.outcome_b(lambda, b)? {
            p_agree += p;
        } else {
            p_disagree += p;
        }
    }
    Ok(AgreementEstimate {
        p_agree,
        p_disagree,
        stderr: Some(0.0),
        n_trials: atoms.len() as u64,
        exact: true,
    })
}

/// Which setting pairs an agreement run visits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSchedule {
    Fixed(Setting, Setting),
    /// All nine discrete pairs, uniformly.
    AllIndexPairs,
    /// The six pairs with differing discrete settings, uniformly.
    DifferingIndexPairs,
    /// The three pairs with equal discrete settings, uniformly.
    SameIndexPairs,
}

impl PairSchedule {
    pub fn pairs(&self) -> Vec<(Setting, Setting)> {
        let disc = Setting::discrete();
        match *self {
            PairSchedule::Fixed(a, b) => vec![(a, b)],
            PairSchedule::AllIndexPairs => disc
                .iter()
                .flat_map(|a| disc.iter().map(move |b| (*a, *b)))
                .collect(),
            PairSchedule::DifferingIndexPairs => disc
                .iter()
                .flat_map(|a| disc.iter().map(move |b| (*a, *b)))
                .filter(|(a, b)| a != b)
                .collect(),
            PairSchedule::SameIndexPairs => disc.iter().map(|a| (*a, *a)).collect(),
        }
    }
}

/// Exact agreement averaged uniformly over the schedule's pairs.
pub fn exact_agreement_schedule(
    model: &dyn LhvModel,
    schedule: PairSchedule,
) -> Result<AgreementEstimate> {
    let pairs = schedule.pairs();
    let mut p_agree = 0.0;
    let mut p_disagree = 0.0;
    let mut atoms = 0;
    for (a, b) in &pairs {
        let est = exact_agreement(model, *a, *b)?;
        p_agree += est.p_agree;
        p_disagree += est.p_disagree;
        atoms = est.n_trials;
    }
    let k = pairs.len() as f64;
    Ok(AgreementEstimate {
        p_agree: p_agree / k,
        p_disagree: p_disagree / k,
        stderr: Some(0.0),
        n_trials: atoms,
        exact: true,
    })
}

/// Monte Carlo `P(A = B)`. For multi-pair schedules each trial draws its pair
/// uniformly from a stream independent of λ.
pub fn agreement_prob(
    model: &dyn LhvModel,
    schedule: PairSchedule,
    n: u64,
    seed: u64,
) -> Result<AgreementEstimate> {
    check_n(n)?;
    let pairs = schedule.pairs();
    let pair_seed = derive_seed(seed, PAIR_TAG);
    let tally = (0..n.div_ceil(SHARD))
        .into_par_iter()
        .map(|shard| {
            let mut tally = ProductTally::default();
            for trial in shard * SHARD..((shard + 1) * SHARD).min(n) {
                let (a, b) = if pairs.len() == 1 {
                    pairs[0]
                } else {
                    use rand::Rng;
                    pairs[trial_rng(pair_seed, trial).random_range(0..pairs.len())]
                };
                let lambda = model.lambda_for_trial(seed, trial);
                tally.push(model.outcome_a(&lambda, a)?, model.outcome_b(&lambda, b)?);
            }
            Ok::<_, Error>(tally)
        })
        .try_reduce(ProductTally::default, |x, y| Ok(x.merge(y)))?;
    Ok(tally.agreement().expect("n >= 1"))
}

/// The four settings of a CHSH experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshSettings {
    pub a: Setting,
    pub a_prime: Setting,
    pub b: Setting,
    pub b_prime: Setting,
}

impl ChshSettings {
    pub fn new(a: Setting, a_prime: Setting, b: Setting, b_prime: Setting) -> Self {
        ChshSettings {
            a,
            a_prime,
            b,
            b_prime,
        }
    }

    pub fn from_angles(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<Self> {
        Ok(ChshSettings::new(
            Setting::angle(a)?,
            Setting::angle(a_prime)?,
            Setting::angle(b)?,
            Setting::angle(b_prime)?,
        ))
    }

    /// Setting pairs in term order: `(a,b), (a′,b), (a′,b′), (a,b′)`.
    pub fn term_pairs(&self) -> [(Setting, Setting); 4] {
        [
            (self.a, self.b),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
            (self.a, self.b_prime),
        ]
    }

    /// All 3⁴ discrete quadruples.
    pub fn all_discrete() -> Vec<ChshSettings> {
        let d = Setting::discrete();
        let mut out = Vec::with_capacity(81);
        for a in d {
            for ap in d {
                for b in d {
                    for bp in d {
                        out.push(ChshSettings::new(a, ap, b, bp));
                    }
                }
            }
        }
        out
    }
}

/// The CHSH quantity `S = t₀ + t₁ + t₂ − t₃` with terms
/// `E(a,b), E(a′,b), E(a′,b′), E(a,b′)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshResult {
    pub s_value: f64,
    pub terms: [CorrelationEstimate; 4],
    pub settings: ChshSettings,
}

impl ChshResult {
    pub fn from_terms(terms: [CorrelationEstimate; 4], settings: ChshSettings) -> Self {
        let s_value = terms[0].mean + terms[1].mean + terms[2].mean - terms[3].mean;
        ChshResult {
            s_value,
            terms,
            settings,
        }
    }

    /// The terms rearranged for [`bell_check`].
    pub fn bell_check(&self) -> BellCheck {
        let [ab, apb, apbp, abp] = self.terms;
        bell_check(&ab, &abp, &apbp, &apb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Exact,
    /// Term `i` uses seed `seed + i`.
    MonteCarlo {
        n: u64,
        seed: u64,
    },
}

pub fn chsh(model: &dyn LhvModel, settings: ChshSettings, eval: Evaluation) -> Result<ChshResult> {
    let pairs = settings.term_pairs();
    let mut terms = [CorrelationEstimate::exact(0.0, 0); 4];
    for (i, (a, b)) in pairs.iter().enumerate() {
        terms[i] = match eval {
            Evaluation::Exact => exact_e(model, *a, *b)?,
            Evaluation::MonteCarlo { n, seed } => {
                estimate_e(model, *a, *b, n, seed.wrapping_add(i as u64))?
            }
        };
    }
    Ok(ChshResult::from_terms(terms, settings))
}

/// CHSH evaluated on the singlet correlation.
pub fn chsh_oracle(settings: ChshSettings) -> ChshResult {
    let terms = settings.term_pairs().map(|(a, b)| {
        CorrelationEstimate::exact(oracle::singlet_e(a.as_angle(), b.as_angle()).value, 1)
    });
    ChshResult::from_terms(terms, settings)
}

/// Largest `|S|` over all discrete quadruples, with the settings attaining it.
pub fn max_abs_chsh_discrete(model: &dyn LhvModel) -> Result<ChshResult> {
    let mut best: Option<ChshResult> = None;
    for s in ChshSettings::all_discrete() {
        let r = chsh(model, s, Evaluation::Exact)?;
        if best.is_none_or(|b| r.s_value.abs() > b.s_value.abs()) {
            best = Some(r);
        }
    }
    Ok(best.expect("81 quadruples"))
}

/// Largest exact `|S|` over `count` uniformly random angle quadruples.
pub fn max_abs_chsh_random(model: &dyn LhvModel, count: u64, seed: u64) -> Result<ChshResult> {
    use rand::Rng;
    use std::f64::consts::TAU;
    let results: Vec<ChshResult> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let mut ang = || Setting::angle(rng.random::<f64>() * TAU);
            let s = ChshSettings::new(ang()?, ang()?, ang()?, ang()?);
            chsh(model, s, Evaluation::Exact)
        })
        .collect::<Result<_>>()?;
    results
        .into_iter()
        .reduce(|x, y| {
            if y.s_value.abs() > x.s_value.abs() {
                y
            } else {
                x
            }
        })
        .ok_or_else(|| Error::usage("random scan needs at least one quadruple"))
}

/// Both branches of `|E(a,b) − E(a,b′)| ≤ 2 ± [E(a′,b′) + E(a′,b)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellCheck {
    pub lhs: f64,
    pub rhs_plus: f64,
    pub rhs_minus: f64,
    pub tolerance: f64,
    pub satisfied: bool,
}

impl BellCheck {
    pub fn violated(&self) -> bool {
        !self.satisfied
    }

    /// The smaller of the two right-hand sides.
    pub fn binding_rhs(&self) -> f64 {
        self.rhs_plus.min(self.rhs_minus)
    }
}

/// Evaluates the inequality. Exact inputs use a 1e-9 tolerance; otherwise the tolerance
/// is three combined standard errors.
pub fn bell_check(
    e_ab: &CorrelationEstimate,
    e_ab_prime: &CorrelationEstimate,
    e_a_prime_b_prime: &CorrelationEstimate,
    e_a_prime_b: &CorrelationEstimate,
) -> BellCheck {
    let all = [e_ab, e_ab_prime, e_a_prime_b_prime, e_a_prime_b];
    let tolerance = if all.iter().all(|e| e.exact) {
        EXACT_TOLERANCE
    } else {
        // a single-trial term has no stderr; 1 bounds the spread of a ±1 product
        3.0 * all
            .iter()
            .map(|e| e.stderr.unwrap_or(1.0).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let lhs = (e_ab.mean - e_ab_prime.mean).abs();
    let primed = e_a_prime_b_prime.mean + e_a_prime_b.mean;
    let rhs_plus = 2.0 + primed;
    let rhs_minus = 2.0 - primed;
    BellCheck {
        lhs,
        rhs_plus,
        rhs_minus,
        tolerance,
        satisfied: lhs <= rhs_plus.min(rhs_minus) + tolerance,
    }
}
