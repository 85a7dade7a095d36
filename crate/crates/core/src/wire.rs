//! Messages exchanged with a front end, one JSON object per WebSocket text
//! frame. Timestamps are milliseconds on the session clock.

use serde::{Deserialize, Serialize};

use crate::actions::Payload;
use crate::layouts::{LayoutFrame, LayoutKind};
use crate::session::EngineKind;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Hello,
    Frame,
    Event,
    Commit,
    Undo,
    End,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub seq: u64,
    pub t_ms: f64,
    #[serde(default)]
    pub body: serde_json::Value,
}

impl WireMessage {
    pub fn new(kind: MessageKind, seq: u64, t_ms: f64, body: impl Serialize) -> Self {
        let body = serde_json::to_value(body).unwrap_or(serde_json::Value::Null);
        Self { kind, seq, t_ms, body }
    }

    pub fn error(seq: u64, t_ms: f64, message: impl Into<String>) -> Self {
        Self::new(MessageKind::Error, seq, t_ms, ErrorBody { message: message.into() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

/// Client hello. Omitted fields keep the server's defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientHello {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineKind>,
    /// Commit threshold on first-generation mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// A prompt the user copies; the session is recorded as training data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerHello {
    pub version: u32,
    pub session: String,
    pub alphabet: Vec<char>,
    pub terminator: char,
    pub tick_rate: f64,
    pub engine: String,
    pub layout: LayoutKind,
}

/// Client event body; the event time is the envelope's `t_ms`.
pub type EventBody = Payload;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameBody {
    pub tick: u64,
    pub text: String,
    pub frame: LayoutFrame,
}

/// Body of `commit` and `undo`: the symbol added or removed and the text after.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitBody {
    pub tick: u64,
    pub symbol: char,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndBody {
    pub text: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub message: String,
}
