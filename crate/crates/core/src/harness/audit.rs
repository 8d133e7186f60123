//! Run-log audit.
//!
//! Three properties are checked, each violation tagged with the offending entry index:
//!
//! * messages to a wing use only the wire schema, and none carries a setting the
//!   other wing reported;
//! * wings A and B receive the same λ text for every trial;
//! * trials run in lockstep with dense ids: a new λ goes out only after both outcomes
//!   of the previous trial are in, and every outcome answers a λ already sent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::log::{Direction, RunLog};
use super::wire::{raw_fields, Payload, WingId, WireMessage, FIELDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Malformed,
    Schema,
    RemoteSetting,
    LambdaMismatch,
    Ordering,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Malformed => "malformed",
            ViolationKind::Schema => "schema",
            ViolationKind::RemoteSetting => "remote_setting",
            ViolationKind::LambdaMismatch => "lambda_mismatch",
            ViolationKind::Ordering => "ordering",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    pub n_messages: usize,
    pub n_complete_trials: u64,
    pub log_complete: bool,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn indices(&self) -> BTreeSet<usize> {
        self.violations.iter().map(|v| v.index).collect()
    }
}

fn slot(w: WingId) -> usize {
    match w {
        WingId::A => 0,
        WingId::B => 1,
    }
}

#[derive(Default)]
struct Lockstep {
    current: Option<u64>,
    sent: [bool; 2],
    answered: [bool; 2],
    completed: u64,
    started: bool,
}

impl Lockstep {
    fn finish_current(&mut self) {
        if self.current.is_some() && self.answered == [true, true] {
            self.completed += 1;
        }
    }

    fn on_lambda(&mut self, trial: u64, wing: WingId) -> Option<String> {
        self.started = true;
        let w = slot(wing);
        if self.current == Some(trial) {
            if self.sent[w] {
                return Some(format!("second λ for trial {trial} to wing {wing}"));
            }
            self.sent[w] = true;
            return None;
        }
        let mut problem = None;
        if let Some(c) = self.current {
            if self.answered != [true, true] {
                problem = Some(format!(
                    "λ for trial {trial} before both outcomes of trial {c}"
                ));
            }
        }
        let expected = self.current.map_or(0, |c| c + 1);
        if problem.is_none() && trial != expected {
            problem = Some(format!("trial id {trial} where {expected} was due"));
        }
        self.finish_current();
        self.current = Some(trial);
        self.sent = [false; 2];
        self.answered = [false; 2];
        self.sent[w] = true;
        problem
    }

    fn on_outcome(&mut self, trial: u64, wing: WingId) -> Option<String> {
        let w = slot(wing);
        match self.current {
            Some(c) if c == trial && self.sent[w] => {
                if self.answered[w] {
                    Some(format!("second outcome for trial {trial} from wing {wing}"))
                } else {
                    self.answered[w] = true;
                    None
                }
            }
            _ => Some(format!(
                "outcome for trial {trial} from wing {wing} without a pending λ"
            )),
        }
    }
}

/// Audits every entry of `log`. The scan never stops early, so all violations are
/// reported.
pub fn audit_log(log: &RunLog) -> AuditReport {
    let mut violations = Vec::new();
    let mut flag = |index: usize, kind: ViolationKind, detail: String| {
        violations.push(Violation {
            index,
            kind,
            detail,
        });
    };

    // Setting tokens each wing reported; used for the content scan of the other link.
    let mut reported: [BTreeSet<String>; 2] = Default::default();
    for e in &log.entries {
        if e.direction != Direction::Received {
            continue;
        }
        if let Ok(WireMessage {
            wing,
            payload: Payload::Outcome { setting, .. },
            ..
        }) = WireMessage::parse_line(&e.line)
        {
            reported[slot(wing)].insert(setting.token());
        }
    }

    let mut lambdas: BTreeMap<u64, [Option<(usize, String)>; 2]> = BTreeMap::new();
    let mut steps = Lockstep::default();

    for (i, e) in log.entries.iter().enumerate() {
        let fields = match raw_fields(&e.line) {
            Ok(f) => f,
            Err(err) => {
                flag(i, ViolationKind::Malformed, err.to_string());
                continue;
            }
        };
        let mut schema_ok = true;
        for (k, v) in &fields {
            if !FIELDS.contains(&k.as_str()) {
                schema_ok = false;
                let kind = if e.direction == Direction::Sent {
                    ViolationKind::Schema
                } else {
                    ViolationKind::Malformed
                };
                flag(i, kind, format!("unexpected field {k}={v}"));
            }
        }
        let get = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };

        // Content scan of everything sent to a wing, whatever its shape.
        if e.direction == Direction::Sent {
            let wing: Option<WingId> = get("wing").and_then(|w| w.parse().ok());
            for (k, v) in &fields {
                if k == "type" || k == "wing" {
                    continue;
                }
                if v.contains("setting") {
                    flag(
                        i,
                        ViolationKind::RemoteSetting,
                        format!("field {k} mentions a setting"),
                    );
                    continue;
                }
                let leaked = match wing {
                    Some(w) => reported[slot(w.other())]
                        .iter()
                        .find(|tok| v.contains(tok.as_str())),
                    None => reported
                        .iter()
                        .flatten()
                        .find(|tok| v.contains(tok.as_str())),
                };
                if let Some(tok) = leaked {
                    flag(
                        i,
                        ViolationKind::RemoteSetting,
                        format!("field {k} carries setting token {tok}"),
                    );
                }
            }
        }

        // Keep tracking lockstep through a schema violation so one bad message does
        // not cascade into spurious ordering reports.
        let known: String = if schema_ok {
            e.line.clone()
        } else {
            fields
                .iter()
                .filter(|(k, _)| FIELDS.contains(&k.as_str()))
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let msg = match WireMessage::parse_line(&known) {
            Ok(m) => m,
            Err(err) => {
                flag(i, ViolationKind::Malformed, err.to_string());
                continue;
            }
        };

        match (&msg.payload, e.direction) {
            (Payload::Hello(_), _) => {
                if steps.started {
                    flag(
                        i,
                        ViolationKind::Ordering,
                        "hello after trials began".into(),
                    );
                }
            }
            (Payload::Lambda(l), Direction::Sent) => {
                let text = l.token();
                let entry = lambdas.entry(msg.trial).or_default();
                entry[slot(msg.wing)] = Some((i, text.clone()));
                if let Some((j, other)) = &entry[slot(msg.wing.other())] {
                    if *other != text {
                        flag(
                            i,
                            ViolationKind::LambdaMismatch,
                            format!(
                                "trial {}: λ {text} differs from {other} at entry {j}",
                                msg.trial
                            ),
                        );
                    }
                }
                if let Some(p) = steps.on_lambda(msg.trial, msg.wing) {
                    flag(i, ViolationKind::Ordering, p);
                }
            }
            (Payload::Outcome { .. }, Direction::Received) => {
                if let Some(p) = steps.on_outcome(msg.trial, msg.wing) {
                    flag(i, ViolationKind::Ordering, p);
                }
            }
            (Payload::Done, Direction::Sent) => {
                if steps.current.is_some() && steps.answered != [true, true] {
                    flag(
                        i,
                        ViolationKind::Ordering,
                        "done while a trial is pending".into(),
                    );
                }
            }
            (Payload::Error(_), _) => {}
            (p, d) => flag(
                i,
                ViolationKind::Ordering,
                format!(
                    "{} message in the wrong direction ({})",
                    p.type_name(),
                    d.symbol()
                ),
            ),
        }
    }
    steps.finish_current();

    AuditReport {
        violations,
        n_messages: log.entries.len(),
        n_complete_trials: steps.completed,
        log_complete: log.is_complete(),
    }
}
