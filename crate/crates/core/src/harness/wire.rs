//! Wire messages: one per line, space-separated `key=value` fields in the fixed order
//! `type v trial wing payload`.
//!
//! ```text
//! type=hello v=1 trial=0 wing=A payload=model:clock
//! type=lambda v=1 trial=4 wing=B payload=theta:2.0943951023931957e0
//! type=outcome v=1 trial=4 wing=B payload=sign:-1;setting:i2
//! ```
//!
//! `wing` names the wing end of the link the message travels on. No message type has
//! a field that can hold the other wing's setting.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hv::{LambdaSample, Outcome, Setting};

pub const PROTOCOL_VERSION: u32 = 1;

/// The only field names a well-formed message may carry, in order.
pub const FIELDS: [&str; 5] = ["type", "v", "trial", "wing", "payload"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WingId {
    A,
    B,
}

impl WingId {
    pub fn other(self) -> WingId {
        match self {
            WingId::A => WingId::B,
            WingId::B => WingId::A,
        }
    }
}

impl fmt::Display for WingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WingId::A => "A",
            WingId::B => "B",
        })
    }
}

impl FromStr for WingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(WingId::A),
            "B" | "b" => Ok(WingId::B),
            _ => Err(Error::protocol(format!("unknown wing {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Source announces the model; the wing answers `ready`.
    Hello(String),
    Lambda(LambdaSample),
    Outcome {
        sign: Outcome,
        setting: Setting,
    },
    Done,
    Error(String),
}

impl Payload {
    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::Hello(_) => "hello",
            Payload::Lambda(_) => "lambda",
            Payload::Outcome { .. } => "outcome",
            Payload::Done => "done",
            Payload::Error(_) => "error",
        }
    }

    fn encode(&self) -> String {
        match self {
            Payload::Hello(s) => sanitize(s),
            Payload::Lambda(l) => l.token(),
            Payload::Outcome { sign, setting } => {
                format!("sign:{sign};setting:{}", setting.token())
            }
            Payload::Done => String::new(),
            Payload::Error(s) => sanitize(s),
        }
    }

    fn decode(kind: &str, text: &str) -> Result<Self> {
        match kind {
            "hello" => Ok(Payload::Hello(text.to_string())),
            "lambda" => Ok(Payload::Lambda(
                text.parse()
                    .map_err(|e: Error| Error::protocol(e.to_string()))?,
            )),
            "outcome" => {
                let mut sign = None;
                let mut setting = None;
                for part in text.split(';') {
                    match part.split_once(':') {
                        Some(("sign", v)) => {
                            let s: i64 = v
                                .parse()
                                .map_err(|_| Error::protocol(format!("bad sign {v:?}")))?;
                            sign = Some(
                                Outcome::from_sign(s)
                                    .map_err(|e| Error::protocol(e.to_string()))?,
                            );
                        }
                        Some(("setting", v)) => {
                            setting = Some(
                                v.parse::<Setting>()
                                    .map_err(|e| Error::protocol(e.to_string()))?,
                            );
                        }
                        _ => {
                            return Err(Error::protocol(format!(
                                "unexpected outcome part {part:?}"
                            )))
                        }
                    }
                }
                match (sign, setting) {
                    (Some(sign), Some(setting)) => Ok(Payload::Outcome { sign, setting }),
                    _ => Err(Error::protocol("outcome needs sign and setting")),
                }
            }
            "done" => Ok(Payload::Done),
            "error" => Ok(Payload::Error(text.to_string())),
            other => Err(Error::protocol(format!("unknown message type {other:?}"))),
        }
    }
}

/// Whitespace would split a field; replace it.
fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub version: u32,
    pub trial: u64,
    pub wing: WingId,
    pub payload: Payload,
}

impl WireMessage {
    pub fn new(trial: u64, wing: WingId, payload: Payload) -> Self {
        WireMessage {
            version: PROTOCOL_VERSION,
            trial,
            wing,
            payload,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "type={} v={} trial={} wing={} payload={}",
            self.payload.type_name(),
            self.version,
            self.trial,
            self.wing,
            self.payload.encode()
        )
    }

    /// Strict parse: exactly the five fields, in order.
    pub fn parse_line(line: &str) -> Result<Self> {
        let fields = raw_fields(line)?;
        let keys: Vec<&str> = fields.iter().map(|(k, _)| k.as_str()).collect();
        if keys != FIELDS {
            return Err(Error::protocol(format!(
                "expected fields {FIELDS:?}, got {keys:?}"
            )));
        }
        let version: u32 = fields[1]
            .1
            .parse()
            .map_err(|_| Error::protocol("bad version"))?;
        let trial: u64 = fields[2]
            .1
            .parse()
            .map_err(|_| Error::protocol("bad trial id"))?;
        let wing: WingId = fields[3].1.parse()?;
        let payload = Payload::decode(&fields[0].1, &fields[4].1)?;
        Ok(WireMessage {
            version,
            trial,
            wing,
            payload,
        })
    }
}

/// Splits a line into `key=value` pairs without interpreting them.
pub fn raw_fields(line: &str) -> Result<Vec<(String, String)>> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::protocol(format!("field without '=': {tok:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv::{ClockLambda, InstructionSet};

    #[test]
    fn lines_round_trip() {
        let msgs = [
            WireMessage::new(0, WingId::A, Payload::Hello("model:clock".into())),
            WireMessage::new(
                3,
                WingId::B,
                Payload::Lambda(LambdaSample::Clock(ClockLambda::new(1.0 / 3.0))),
            ),
            WireMessage::new(
                3,
                WingId::B,
                Payload::Lambda(LambdaSample::Instructions(InstructionSet::from_index(5))),
            ),
            WireMessage::new(
                3,
                WingId::A,
                Payload::Outcome {
                    sign: Outcome::Minus,
                    setting: Setting::Index(2),
                },
            ),
            WireMessage::new(
                9,
                WingId::A,
                Payload::Outcome {
                    sign: Outcome::Plus,
                    setting: Setting::Angle(0.7),
                },
            ),
            WireMessage::new(4, WingId::A, Payload::Done),
            WireMessage::new(4, WingId::B, Payload::Error("bad thing happened".into())),
        ];
        for m in msgs {
            let back = WireMessage::parse_line(&m.to_line()).unwrap();
            match (&m.payload, &back.payload) {
                (Payload::Error(_), Payload::Error(s)) => assert_eq!(s, "bad_thing_happened"),
                _ => assert_eq!(back, m),
            }
        }
    }

    #[test]
    fn lambda_line_is_17_digits() {
        let m = WireMessage::new(
            0,
            WingId::A,
            Payload::Lambda(LambdaSample::Clock(ClockLambda::new(2.0943951023931957))),
        );
        assert_eq!(
            m.to_line(),
            "type=lambda v=1 trial=0 wing=A payload=theta:2.0943951023931957e0"
        );
    }

    #[test]
    fn strict_parse_rejects_extras_and_unknowns() {
        assert!(
            WireMessage::parse_line("type=lambda v=1 trial=0 wing=A payload=set:RRG beta=i1")
                .is_err()
        );
        assert!(WireMessage::parse_line("type=teleport v=1 trial=0 wing=A payload=").is_err());
        assert!(WireMessage::parse_line("type=lambda v=1 trial=0 wing=C payload=set:RRG").is_err());
        assert!(WireMessage::parse_line("garbage").is_err());
        assert!(WireMessage::parse_line(
            "type=outcome v=1 trial=0 wing=A payload=sign:2;setting:i0"
        )
        .is_err());
    }
}
