//! Wire format: every message is a 4-byte big-endian length `N` followed by
//! `N` bytes of UTF-8 JSON.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest accepted frame body (bytes).
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub v: u32,
    pub seq: u64,
    #[serde(default)]
    pub session: Option<String>,
    pub cmd: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    MalformedCommand,
    UnknownCommand,
    UnknownSession,
    BadSequence,
    InvalidParams,
    RigError,
    AnalysisError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

/// Reply to one request (`type = "response"`) or a stream frame
/// (`type = "snapshot"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    /// Sequence number of the request; `null` when it could not be read.
    pub seq: Option<u64>,
    pub session: Option<String>,
    pub ok: bool,
    pub result: Value,
    pub error: Option<ErrorBody>,
}

impl Response {
    pub fn ok(seq: u64, session: Option<String>, result: Value) -> Self {
        Response { v: PROTOCOL_VERSION, kind: "response".into(), seq: Some(seq), session, ok: true, result, error: None }
    }

    pub fn err(seq: Option<u64>, session: Option<String>, code: ErrorCode, message: impl Into<String>) -> Self {
        Response {
            v: PROTOCOL_VERSION,
            kind: "response".into(),
            seq,
            session,
            ok: false,
            result: Value::Null,
            error: Some(ErrorBody { code, message: message.into() }),
        }
    }
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    if body.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream before a length prefix.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes exceeds limit")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}
