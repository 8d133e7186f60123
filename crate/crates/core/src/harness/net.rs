//! Source and wing roles over TCP.
//!
//! The wing knows its model, its id and its setting policy. The source knows the
//! model and the seed. Each trial the source sends the same λ to both wings and waits
//! for both outcomes before the next trial starts.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;

use super::log::{Direction, RunLog};
use super::wire::{Payload, WingId, WireMessage, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::hv::{AnyModel, LhvModel, Setting};
use crate::rng::trial_rng;

/// How a wing chooses its setting for each trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SettingPolicy {
    Fixed(Setting),
    /// Uniform over the three discrete settings, from the wing's own seed.
    Random {
        seed: u64,
    },
}

impl SettingPolicy {
    pub fn setting_for(&self, trial: u64) -> Setting {
        match *self {
            SettingPolicy::Fixed(s) => s,
            SettingPolicy::Random { seed } => {
                Setting::Index(trial_rng(seed, trial).random_range(0..3u8))
            }
        }
    }
}

impl fmt::Display for SettingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingPolicy::Fixed(s) => write!(f, "{s}"),
            SettingPolicy::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for SettingPolicy {
    type Err = Error;

    /// `random:<seed>` or anything [`Setting`] parses.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(seed) = s.strip_prefix("random:") {
            let seed = seed
                .parse()
                .map_err(|_| Error::config(format!("bad policy seed {seed:?}")))?;
            return Ok(SettingPolicy::Random { seed });
        }
        Ok(SettingPolicy::Fixed(s.parse()?))
    }
}

#[derive(Debug, Clone)]
pub struct WingConfig {
    pub id: WingId,
    pub model: AnyModel,
    pub policy: SettingPolicy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WingSummary {
    pub trials: u64,
    pub errors: u64,
}

fn hello_text(model: &AnyModel) -> String {
    format!(
        "model:{};b_convention:{}",
        model.name(),
        model.b_convention().as_str()
    )
}

fn send<W: Write>(w: &mut W, msg: &WireMessage) -> Result<String> {
    let line = msg.to_line();
    writeln!(w, "{line}")?;
    w.flush()?;
    Ok(line)
}

/// Serves one source connection until `done` or end of stream.
///
/// Malformed or unexpected messages get an `error` reply and the connection stays
/// open. A version or model mismatch in the handshake is refused: the wing replies
/// with an error and returns `Err`.
pub fn wing_handle<R: BufRead, W: Write>(
    mut reader: R,
    mut writer: W,
    cfg: &WingConfig,
) -> Result<WingSummary> {
    let mut summary = WingSummary::default();
    let mut greeted = false;
    let mut line = String::new();
    let reply_error = |writer: &mut W, trial: u64, text: String| -> Result<()> {
        send(
            writer,
            &WireMessage::new(trial, cfg.id, Payload::Error(text)),
        )
        .map(|_| ())
    };
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(summary);
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let msg = match WireMessage::parse_line(text) {
            Ok(m) => m,
            Err(e) => {
                summary.errors += 1;
                reply_error(&mut writer, 0, e.to_string())?;
                continue;
            }
        };
        if msg.version != PROTOCOL_VERSION {
            reply_error(
                &mut writer,
                msg.trial,
                format!("unsupported version {}", msg.version),
            )?;
            return Err(Error::protocol(format!(
                "source speaks version {}",
                msg.version
            )));
        }
        if msg.wing != cfg.id {
            summary.errors += 1;
            reply_error(&mut writer, msg.trial, format!("this is wing {}", cfg.id))?;
            continue;
        }
        match msg.payload {
            Payload::Hello(h) => {
                let mine = hello_text(&cfg.model);
                if h != mine {
                    reply_error(
                        &mut writer,
                        msg.trial,
                        format!("model mismatch: wing runs {mine}"),
                    )?;
                    return Err(Error::protocol(format!(
                        "source runs {h}, wing runs {mine}"
                    )));
                }
                greeted = true;
                send(
                    &mut writer,
                    &WireMessage::new(msg.trial, cfg.id, Payload::Hello("ready".into())),
                )?;
            }
            Payload::Lambda(lambda) if greeted => {
                let setting = cfg.policy.setting_for(msg.trial);
                let outcome = match cfg.id {
                    WingId::A => cfg.model.outcome_a(&lambda, setting),
                    WingId::B => cfg.model.outcome_b(&lambda, setting),
                };
                match outcome {
                    Ok(sign) => {
                        summary.trials += 1;
                        send(
                            &mut writer,
                            &WireMessage::new(
                                msg.trial,
                                cfg.id,
                                Payload::Outcome { sign, setting },
                            ),
                        )?;
                    }
                    Err(e) => {
                        summary.errors += 1;
                        reply_error(&mut writer, msg.trial, e.to_string())?;
                    }
                }
            }
            Payload::Done => return Ok(summary),
            other => {
                summary.errors += 1;
                let why = if greeted {
                    "unexpected"
                } else {
                    "expected hello before"
                };
                reply_error(
                    &mut writer,
                    msg.trial,
                    format!("{why} {} message", other.type_name()),
                )?;
            }
        }
    }
}

/// Accepts one connection on `listener` and serves it.
pub fn wing_serve(listener: &TcpListener, cfg: &WingConfig) -> Result<WingSummary> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    wing_handle(reader, stream, cfg)
}

#[derive(Debug, Clone)]
pub struct SourceConfig {
    pub model: AnyModel,
    pub n_trials: u64,
    pub seed: u64,
    /// How long to wait for a wing's reply, and for a wing to start listening.
    pub timeout: Duration,
}

impl SourceConfig {
    pub fn new(model: AnyModel, n_trials: u64, seed: u64) -> Self {
        SourceConfig {
            model,
            n_trials,
            seed,
            timeout: Duration::from_secs(30),
        }
    }
}

fn connect_retrying(addr: &str, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        let attempt = addr
            .to_socket_addrs()
            .map_err(Error::from)
            .and_then(|mut it| {
                it.next()
                    .ok_or_else(|| Error::usage(format!("no address for {addr}")))
            })
            .and_then(|sa| TcpStream::connect(sa).map_err(Error::from));
        match attempt {
            Ok(s) => return Ok(s),
            Err(Error::Io(e)) if Instant::now() < deadline => {
                let _ = e;
                thread::sleep(Duration::from_millis(25));
            }
            Err(e) => return Err(e),
        }
    }
}

/// Connects to both wings and runs `cfg.n_trials` trials.
///
/// Handshake failures are errors. A wing that fails mid-run ends the run early and
/// the returned log is marked incomplete.
pub fn source_run(cfg: &SourceConfig, wing_a: &str, wing_b: &str) -> Result<RunLog> {
    let mut links = Vec::new();
    for addr in [wing_a, wing_b] {
        let s = connect_retrying(addr, cfg.timeout)?;
        s.set_nodelay(true)?;
        s.set_read_timeout(Some(cfg.timeout))?;
        links.push((BufReader::new(s.try_clone()?), s));
    }
    let (rb, wb) = links.pop().expect("two links");
    let (ra, wa) = links.pop().expect("two links");
    source_run_streams(cfg, (ra, wa), (rb, wb))
}

struct Link<R, W> {
    id: WingId,
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> Link<R, W> {
    fn send(&mut self, log: &mut RunLog, payload: Payload, trial: u64) -> Result<()> {
        let line = send(&mut self.writer, &WireMessage::new(trial, self.id, payload))?;
        log.record(Direction::Sent, &line);
        Ok(())
    }

    fn receive(&mut self, log: &mut RunLog) -> Result<WireMessage> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::protocol(format!(
                "wing {} closed the connection",
                self.id
            )));
        }
        log.record(Direction::Received, &line);
        let msg = WireMessage::parse_line(line.trim())?;
        if msg.wing != self.id {
            return Err(Error::protocol(format!(
                "reply on link {} claims wing {}",
                self.id, msg.wing
            )));
        }
        if let Payload::Error(e) = &msg.payload {
            return Err(Error::protocol(format!("wing {} reported: {e}", self.id)));
        }
        Ok(msg)
    }
}

/// [`source_run`] over already-open streams, for tests and alternative transports.
pub fn source_run_streams<R: BufRead, W: Write>(
    cfg: &SourceConfig,
    link_a: (R, W),
    link_b: (R, W),
) -> Result<RunLog> {
    let mut log = RunLog::new();
    log.push_meta("protocol_version", PROTOCOL_VERSION);
    log.push_meta("model", cfg.model.name());
    log.push_meta("b_convention", cfg.model.b_convention().as_str());
    log.push_meta(
        "model_config",
        cfg.model.to_config_string().trim_end().replace('\n', ";"),
    );
    log.push_meta("seed", cfg.seed);
    log.push_meta("n_trials", cfg.n_trials);
    log.push_meta(
        "scope",
        "message content only; timing channels are not analysed; a clean audit shows these models need no cross-wing channel",
    );

    let mut links = [
        Link {
            id: WingId::A,
            reader: link_a.0,
            writer: link_a.1,
        },
        Link {
            id: WingId::B,
            reader: link_b.0,
            writer: link_b.1,
        },
    ];

    for link in &mut links {
        link.send(&mut log, Payload::Hello(hello_text(&cfg.model)), 0)?;
        match link.receive(&mut log)? {
            WireMessage {
                version: PROTOCOL_VERSION,
                payload: Payload::Hello(_),
                ..
            } => {}
            other => {
                return Err(Error::protocol(format!(
                    "bad handshake reply {}",
                    other.to_line()
                )))
            }
        }
    }

    for trial in 0..cfg.n_trials {
        if let Err(e) = run_one(cfg, trial, &mut links, &mut log) {
            log.mark_incomplete(format!("trial {trial}: {e}"));
            return Ok(log);
        }
    }
    for link in &mut links {
        // A wing that vanished after its last outcome loses nothing.
        let _ = link.send(&mut log, Payload::Done, cfg.n_trials);
    }
    log.mark_complete();
    Ok(log)
}

fn run_one<R: BufRead, W: Write>(
    cfg: &SourceConfig,
    trial: u64,
    links: &mut [Link<R, W>; 2],
    log: &mut RunLog,
) -> Result<()> {
    let lambda = cfg.model.lambda_for_trial(cfg.seed, trial);
    for link in links.iter_mut() {
        link.send(log, Payload::Lambda(lambda), trial)?;
    }
    for link in links.iter_mut() {
        let msg = link.receive(log)?;
        match msg.payload {
            Payload::Outcome { .. } if msg.trial == trial => {}
            _ => {
                return Err(Error::protocol(format!(
                    "expected outcome for trial {trial}, got {}",
                    msg.to_line()
                )))
            }
        }
    }
    Ok(())
}
