//! Trace event vocabulary and the per-thread trace file format.
//!
//! Each thread writes one text file, `<base>.t<tid>.trace`, one event per
//! line:
//!
//! ```text
//! # comment
//! <ts> call <routine-id>
//! <ts> ret
//! <ts> rd  <addr-hex> <size>
//! <ts> wr  <addr-hex> <size>
//! <ts> krd <addr-hex> <size>
//! <ts> kwr <addr-hex> <size>
//! <ts> cost <n>
//! ```
//!
//! `krd`/`kwr` are accesses performed by the kernel on the thread's behalf:
//! a system call that sends data (`write`, `sendto`, `pwrite64`, `writev`,
//! `msgsnd`, `pwritev`) reads the buffer and is emitted as `krd`; one that
//! receives data (`read`, `recvfrom`, `pread64`, `readv`, `msgrcv`, `preadv`)
//! fills the buffer and is emitted as `kwr`.

mod files;
mod merge;
mod parse;

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use files::{discover_thread_files, names_path, thread_trace_path, write_trace_files};
pub(crate) use files::open_thread_files;
pub use merge::{merge, MergeStream, MergedTrace};
pub use parse::{parse_thread_trace, write_thread_trace, ThreadTraceReader};

pub type ThreadId = u32;

/// Identifier of a routine. `RoutineId::ROOT` marks the synthetic frame that
/// collects accesses made outside of any routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoutineId(pub u64);

impl RoutineId {
    pub const ROOT: RoutineId = RoutineId(u64::MAX);

    pub fn is_root(self) -> bool {
        self == Self::ROOT
    }
}

impl fmt::Display for RoutineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            f.write_str("<root>")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for RoutineId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "<root>" {
            return Ok(Self::ROOT);
        }
        let id: u64 = s
            .parse()
            .map_err(|_| format!("invalid routine id `{s}`"))?;
        if id == u64::MAX {
            return Err(format!("routine id {id} is reserved"));
        }
        Ok(RoutineId(id))
    }
}

impl Serialize for RoutineId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoutineId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A sized memory access. `size` is in address units and is at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Access {
    pub addr: u64,
    pub size: u64,
}

impl Access {
    pub fn new(addr: u64, size: u64) -> Self {
        debug_assert!(size >= 1);
        Self { addr, size }
    }

    /// Shadow cells covered by this access at granularity `g` address units
    /// per cell.
    pub fn cells(&self, g: Granularity) -> RangeInclusive<u64> {
        expand_access(*self, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Call(RoutineId),
    Return,
    Read(Access),
    Write(Access),
    KernelRead(Access),
    KernelWrite(Access),
    /// Adds to the thread's cost counter without being counted as an event.
    Cost(u64),
}

impl EventKind {
    pub fn access(&self) -> Option<Access> {
        match *self {
            EventKind::Read(a)
            | EventKind::Write(a)
            | EventKind::KernelRead(a)
            | EventKind::KernelWrite(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub tid: ThreadId,
    pub ts: u64,
    pub kind: EventKind,
}

impl TraceEvent {
    pub fn new(tid: ThreadId, ts: u64, kind: EventKind) -> Self {
        Self { tid, ts, kind }
    }
}

/// Address units per shadow cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Granularity(u64);

impl Granularity {
    pub fn new(units: u64) -> Option<Self> {
        (units >= 1).then_some(Self(units))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl Default for Granularity {
    fn default() -> Self {
        Self(1)
    }
}

/// Cell ids `addr/G ..= (addr+size-1)/G`. Accesses running past the end of
/// the address space are clipped at `u64::MAX`.
pub fn expand_access(access: Access, g: Granularity) -> RangeInclusive<u64> {
    let g = g.get();
    let last = access
        .addr
        .saturating_add(access.size.max(1) - 1);
    (access.addr / g)..=(last / g)
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: timestamp {ts} does not exceed previous timestamp {prev}")]
    NonMonotonicTimestamp { line: usize, ts: u64, prev: u64 },
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<TraceError>,
    },
    #[error("no trace files matching `{0}.t<tid>.trace`")]
    NoTraceFiles(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TraceError {
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        TraceError::InFile {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }
}

/// Optional `<base>.names` sidecar mapping routine ids to symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutineNames(std::collections::BTreeMap<RoutineId, String>);

impl RoutineNames {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: RoutineId, name: impl Into<String>) {
        self.0.insert(id, name.into());
    }

    pub fn get(&self, id: RoutineId) -> Option<&str> {
        self.0.get(&id).map(String::as_str)
    }

    /// Looks a routine up by symbol.
    pub fn id_of(&self, name: &str) -> Option<RoutineId> {
        self.0.iter().find(|(_, n)| *n == name).map(|(id, _)| *id)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RoutineId, &str)> {
        self.0.iter().map(|(id, n)| (*id, n.as_str()))
    }

    pub fn parse(reader: impl std::io::BufRead) -> Result<Self, TraceError> {
        let mut names = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, name) = line.split_once(char::is_whitespace).ok_or_else(|| {
                TraceError::MalformedLine {
                    line: i + 1,
                    reason: "expected `<id> <name>`".into(),
                }
            })?;
            let id = id.parse().map_err(|reason| TraceError::MalformedLine {
                line: i + 1,
                reason,
            })?;
            names.insert(id, name.trim());
        }
        Ok(names)
    }

    pub fn write(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for (id, name) in self.iter() {
            writeln!(w, "{id} {name}")?;
        }
        Ok(())
    }
}
