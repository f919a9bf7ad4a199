//! Append-only event log behind [`super::Store`]. One JSON object per line;
//! the first line names the format. Group elements travel inside the same
//! TOML containers used on the wire, so the log needs no second codec.

use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::StoreError;
use crate::envelope::{self, b64d, b64e};
use crate::scheme::{CapsuleId, DataCapsule, DownloadToken, RevocationToken};

pub const LOG_FORMAT: &str = "capshare-log.v1";
const LOG_NAME: &str = "store.log";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub(super) enum LogEvent {
    Stored { capsule: String },
    Registered { addr: String, tokens: String },
    Consumed { dci: String, d1: String },
    Expired { dci: String, d1: String },
}

pub(super) enum DecodedEvent {
    Stored {
        id: CapsuleId,
        capsule: DataCapsule,
    },
    Registered {
        addr: Vec<u8>,
        revocation: RevocationToken,
        token: DownloadToken,
    },
    Consumed {
        key: Vec<u8>,
        d1: Vec<u8>,
    },
    Expired {
        key: Vec<u8>,
        d1: Vec<u8>,
    },
}

fn log_err(e: impl std::fmt::Display) -> StoreError {
    StoreError::Log(e.to_string())
}

impl LogEvent {
    pub(super) fn stored(id: &CapsuleId, dc: &DataCapsule) -> LogEvent {
        LogEvent::Stored {
            capsule: envelope::write_capsule(id, dc),
        }
    }

    pub(super) fn registered(
        addr: &CapsuleId,
        r: &RevocationToken,
        t: &DownloadToken,
    ) -> LogEvent {
        LogEvent::Registered {
            addr: b64e(&addr.to_bytes()),
            tokens: envelope::write_token_pair(r, t),
        }
    }

    pub(super) fn consumed(key: &[u8], d1: &[u8]) -> LogEvent {
        LogEvent::Consumed {
            dci: b64e(key),
            d1: b64e(d1),
        }
    }

    pub(super) fn expired(key: &[u8], d1: &[u8]) -> LogEvent {
        LogEvent::Expired {
            dci: b64e(key),
            d1: b64e(d1),
        }
    }

    pub(super) fn decode(self) -> Result<DecodedEvent, StoreError> {
        match self {
            LogEvent::Stored { capsule } => {
                let (id, dc) = envelope::read_capsule(&capsule).map_err(log_err)?;
                Ok(DecodedEvent::Stored { id, capsule: dc })
            }
            LogEvent::Registered { addr, tokens } => {
                let (revocation, token) = envelope::read_token_pair(&tokens).map_err(log_err)?;
                Ok(DecodedEvent::Registered {
                    addr: b64d("addr", &addr).map_err(log_err)?,
                    revocation,
                    token,
                })
            }
            LogEvent::Consumed { dci, d1 } => Ok(DecodedEvent::Consumed {
                key: b64d("dci", &dci).map_err(log_err)?,
                d1: b64d("d1", &d1).map_err(log_err)?,
            }),
            LogEvent::Expired { dci, d1 } => Ok(DecodedEvent::Expired {
                key: b64d("dci", &dci).map_err(log_err)?,
                d1: b64d("d1", &d1).map_err(log_err)?,
            }),
        }
    }
}

pub(super) struct LogFile {
    file: File,
}

impl LogFile {
    /// Opens `dir/store.log`, creating it with a header line if absent, and
    /// returns the events already recorded.
    pub(super) fn open(dir: &Path) -> Result<(LogFile, Vec<LogEvent>), StoreError> {
        let path = dir.join(LOG_NAME);
        if !path.exists() {
            let mut file = OpenOptions::new()
                .create_new(true)
                .append(true)
                .open(&path)
                .map_err(log_err)?;
            let header = serde_json::to_string(&Header {
                format: LOG_FORMAT.to_string(),
            })
            .expect("header serializes");
            writeln!(file, "{header}").map_err(log_err)?;
            file.flush().map_err(log_err)?;
            return Ok((LogFile { file }, Vec::new()));
        }

        let text = std::fs::read_to_string(&path).map_err(log_err)?;
        let mut lines = text.lines();
        let first = lines
            .next()
            .ok_or_else(|| StoreError::Log("log file is empty".into()))?;
        let header: Header = serde_json::from_str(first).map_err(log_err)?;
        if header.format != LOG_FORMAT {
            return Err(StoreError::Log(format!(
                "unsupported log format `{}`",
                header.format
            )));
        }
        let mut events = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ev = serde_json::from_str(line)
                .map_err(|e| StoreError::Log(format!("line {}: {e}", n + 2)))?;
            events.push(ev);
        }
        let file = OpenOptions::new().append(true).open(&path).map_err(log_err)?;
        Ok((LogFile { file }, events))
    }

    pub(super) fn append(&mut self, ev: &LogEvent) -> Result<(), StoreError> {
        let line = serde_json::to_string(ev).map_err(log_err)?;
        writeln!(self.file, "{line}").map_err(log_err)?;
        self.file.flush().map_err(log_err)
    }
}
