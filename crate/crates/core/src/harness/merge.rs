//! Correlation tables from audited run logs.

use std::collections::BTreeMap;

use serde::Serialize;

use super::audit::audit_log;
use super::log::{Direction, RunLog};
use super::net::SettingPolicy;
use super::wire::{Payload, WingId, WireMessage};
use crate::error::{Error, Result};
use crate::hv::{LhvModel, Outcome, Setting};
use crate::report::Report;
use crate::stats::{AgreementEstimate, CorrelationEstimate, ProductTally};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedCell {
    pub setting_a: Setting,
    pub setting_b: Setting,
    #[serde(skip)]
    pub tally: ProductTally,
    pub correlation: CorrelationEstimate,
    pub agreement: AgreementEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedTable {
    /// One cell per setting pair seen, ordered by setting token.
    pub cells: Vec<MergedCell>,
    pub n_trials: u64,
    /// Set when the log ended before the run finished; only complete trials count.
    pub partial: bool,
}

impl MergedTable {
    fn from_tallies(
        tallies: BTreeMap<(String, String), (Setting, Setting, ProductTally)>,
        partial: bool,
    ) -> Self {
        let mut n_trials = 0;
        let cells = tallies
            .into_values()
            .filter_map(|(setting_a, setting_b, tally)| {
                n_trials += tally.n;
                Some(MergedCell {
                    setting_a,
                    setting_b,
                    tally,
                    correlation: tally.correlation()?,
                    agreement: tally.agreement()?,
                })
            })
            .collect();
        MergedTable {
            cells,
            n_trials,
            partial,
        }
    }

    pub fn cell(&self, a: Setting, b: Setting) -> Option<&MergedCell> {
        self.cells
            .iter()
            .find(|c| c.setting_a == a && c.setting_b == b)
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new(
            "merge",
            &["setting_a", "setting_b", "mean", "stderr", "n", "exact"],
        );
        for c in &self.cells {
            r.push_row(vec![
                c.setting_a.to_string().into(),
                c.setting_b.to_string().into(),
                c.correlation.mean.into(),
                c.correlation.stderr.into(),
                c.correlation.n_trials.into(),
                false.into(),
            ]);
        }
        r.note("n_trials", self.n_trials);
        r.note("partial", self.partial);
        r
    }
}

fn key(a: Setting, b: Setting) -> (String, String) {
    (a.token(), b.token())
}

/// Tallies every trial for which both outcomes are in the log.
///
/// The log must pass [`audit_log`]; an incomplete log yields a table flagged partial.
pub fn merge_statistics(log: &RunLog) -> Result<MergedTable> {
    let audit = audit_log(log);
    if !audit.is_clean() {
        return Err(Error::protocol(format!(
            "log fails audit with {} violation(s); first at entry {}",
            audit.violations.len(),
            audit.violations[0].index
        )));
    }
    let mut per_trial: BTreeMap<u64, [Option<(Outcome, Setting)>; 2]> = BTreeMap::new();
    for e in log
        .entries
        .iter()
        .filter(|e| e.direction == Direction::Received)
    {
        if let Ok(WireMessage {
            trial,
            wing,
            payload: Payload::Outcome { sign, setting },
            ..
        }) = WireMessage::parse_line(&e.line)
        {
            let i = if wing == WingId::A { 0 } else { 1 };
            per_trial.entry(trial).or_default()[i] = Some((sign, setting));
        }
    }
    let mut tallies = BTreeMap::new();
    for pair in per_trial.values() {
        if let [Some((oa, sa)), Some((ob, sb))] = pair {
            tallies
                .entry(key(*sa, *sb))
                .or_insert((*sa, *sb, ProductTally::default()))
                .2
                .push(*oa, *ob);
        }
    }
    Ok(MergedTable::from_tallies(tallies, !log.is_complete()))
}

/// The run [`super::net::source_run`] would perform, without processes or sockets.
pub fn simulate_run(
    model: &dyn LhvModel,
    n_trials: u64,
    seed: u64,
    policy_a: &SettingPolicy,
    policy_b: &SettingPolicy,
) -> Result<MergedTable> {
    let mut tallies = BTreeMap::new();
    for trial in 0..n_trials {
        let lambda = model.lambda_for_trial(seed, trial);
        let (sa, sb) = (policy_a.setting_for(trial), policy_b.setting_for(trial));
        let oa = model.outcome_a(&lambda, sa)?;
        let ob = model.outcome_b(&lambda, sb)?;
        tallies
            .entry(key(sa, sb))
            .or_insert((sa, sb, ProductTally::default()))
            .2
            .push(oa, ob);
    }
    Ok(MergedTable::from_tallies(tallies, false))
}
