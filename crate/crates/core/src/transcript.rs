//! Ordered event log of one session, serialized as JSON lines.
//!
//! Line 1 is the session header (it carries the seed, so a transcript can be
//! replayed); each following line is one event with fields
//! `{seq, step, actor, event, payload}`. Payload values are integers or
//! integer arrays and keys are sorted, so output is byte-stable.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::SessionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Prepare,
    AnnounceLabels,
    Send,
    DecoyCheck,
    Swap,
    AnnounceSums,
    TpMeasure,
    Verdict,
}

/// Who produced an event. Serialized as "TP", "P<i>" or "AGG".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Actor {
    Tp,
    Party(usize),
    Aggregator,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Tp => f.write_str("TP"),
            Actor::Party(i) => write!(f, "P{i}"),
            Actor::Aggregator => f.write_str("AGG"),
        }
    }
}

impl Serialize for Actor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Actor {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(de)?;
        match raw.as_str() {
            "TP" => Ok(Actor::Tp),
            "AGG" => Ok(Actor::Aggregator),
            other => other
                .strip_prefix('P')
                .and_then(|i| i.parse().ok())
                .map(Actor::Party)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown actor {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Array(Vec<i64>),
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Int(x as i64)
    }
}

impl From<&[usize]> for Value {
    fn from(xs: &[usize]) -> Self {
        Value::Array(xs.iter().map(|&x| x as i64).collect())
    }
}

impl From<Vec<usize>> for Value {
    fn from(xs: Vec<usize>) -> Self {
        Value::from(xs.as_slice())
    }
}

pub type Payload = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: usize,
    pub step: u8,
    pub actor: Actor,
    pub event: EventKind,
    pub payload: Payload,
}

impl Event {
    pub fn int(&self, key: &str) -> Option<i64> {
        match self.payload.get(key)? {
            Value::Int(x) => Some(*x),
            Value::Array(_) => None,
        }
    }

    /// Whether `viewer` observes this event.
    pub fn visible_to(&self, viewer: Viewer) -> bool {
        let addressed = |key: &str, i: usize| self.int(key) == Some(i as i64);
        match (self.event, viewer) {
            (EventKind::Send | EventKind::AnnounceSums | EventKind::Verdict, _) => true,
            (EventKind::Prepare | EventKind::Swap | EventKind::TpMeasure, v) => {
                self.actor == v.as_actor()
            }
            (EventKind::AnnounceLabels, Viewer::Tp) | (EventKind::DecoyCheck, Viewer::Tp) => true,
            (EventKind::AnnounceLabels, Viewer::Party(i)) => addressed("to", i),
            (EventKind::DecoyCheck, Viewer::Party(i)) => addressed("party", i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viewer {
    Tp,
    Party(usize),
}

impl Viewer {
    fn as_actor(self) -> Actor {
        match self {
            Viewer::Tp => Actor::Tp,
            Viewer::Party(i) => Actor::Party(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub seed: u64,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub events: Vec<Event>,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("transcript is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

impl Transcript {
    pub fn new(config: &SessionConfig) -> Self {
        Self {
            header: TranscriptHeader {
                seed: config.seed,
                config: config.clone(),
            },
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, step: u8, actor: Actor, event: EventKind, payload: Payload) {
        let seq = self.events.len() + 1;
        self.events.push(Event {
            seq,
            step,
            actor,
            event,
            payload,
        });
    }

    pub fn view(&self, viewer: Viewer) -> Vec<&Event> {
        self.events
            .iter()
            .filter(|e| e.visible_to(viewer))
            .collect()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.event == kind)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(TranscriptError::Empty)?;
        let header = serde_json::from_str(first)
            .map_err(|source| TranscriptError::Parse { line: 1, source })?;
        let events = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|source| TranscriptError::Parse {
                    line: i + 1,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { header, events })
    }
}

/// Small helper for building payloads inline.
#[macro_export]
macro_rules! payload {
    ($($key:literal => $val:expr),* $(,)?) => {{
        #[allow(unused_mut)]
        let mut p = $crate::transcript::Payload::new();
        $(p.insert($key.to_string(), $crate::transcript::Value::from($val));)*
        p
    }};
}
