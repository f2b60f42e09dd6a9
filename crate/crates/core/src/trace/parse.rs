use std::io::{BufRead, Write};

use super::{Access, EventKind, RoutineId, ThreadId, TraceError, TraceEvent};

/// Streaming reader for one thread's trace file.
///
/// Yields events in file order and fails on the first malformed line or
/// non-increasing timestamp.
pub struct ThreadTraceReader<R> {
    reader: R,
    tid: ThreadId,
    line_no: usize,
    prev_ts: Option<u64>,
    buf: String,
    failed: bool,
}

impl<R: BufRead> ThreadTraceReader<R> {
    pub fn new(reader: R, tid: ThreadId) -> Self {
        Self {
            reader,
            tid,
            line_no: 0,
            prev_ts: None,
            buf: String::new(),
            failed: false,
        }
    }

    pub fn tid(&self) -> ThreadId {
        self.tid
    }

    fn next_event(&mut self) -> Result<Option<TraceEvent>, TraceError> {
        loop {
            self.buf.clear();
            if self.reader.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = match self.buf.find('#') {
                Some(i) => &self.buf[..i],
                None => &self.buf[..],
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (ts, kind) = parse_line(line).map_err(|reason| TraceError::MalformedLine {
                line: self.line_no,
                reason,
            })?;
            if let Some(prev) = self.prev_ts {
                if ts <= prev {
                    return Err(TraceError::NonMonotonicTimestamp {
                        line: self.line_no,
                        ts,
                        prev,
                    });
                }
            }
            self.prev_ts = Some(ts);
            return Ok(Some(TraceEvent::new(self.tid, ts, kind)));
        }
    }
}

impl<R: BufRead> Iterator for ThreadTraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_event() {
            Ok(ev) => ev.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Parses a whole thread trace into memory.
pub fn parse_thread_trace(
    source: impl BufRead,
    tid: ThreadId,
) -> Result<Vec<TraceEvent>, TraceError> {
    ThreadTraceReader::new(source, tid).collect()
}

fn parse_line(line: &str) -> Result<(u64, EventKind), String> {
    let mut fields = line.split_whitespace();
    let ts = fields.next().ok_or("missing timestamp")?;
    let ts: u64 = ts
        .parse()
        .map_err(|_| format!("invalid timestamp `{ts}`"))?;
    let op = fields.next().ok_or("missing event kind")?;
    let kind = match op {
        "call" => {
            let id = fields.next().ok_or("call without routine id")?;
            EventKind::Call(id.parse::<RoutineId>().and_then(|r| {
                if r.is_root() {
                    Err("`<root>` is not a valid routine".to_string())
                } else {
                    Ok(r)
                }
            })?)
        }
        "ret" => EventKind::Return,
        "rd" => EventKind::Read(parse_access(&mut fields)?),
        "wr" => EventKind::Write(parse_access(&mut fields)?),
        "krd" => EventKind::KernelRead(parse_access(&mut fields)?),
        "kwr" => EventKind::KernelWrite(parse_access(&mut fields)?),
        "cost" => {
            let n = fields.next().ok_or("cost without amount")?;
            EventKind::Cost(n.parse().map_err(|_| format!("invalid cost `{n}`"))?)
        }
        other => return Err(format!("unknown event `{other}`")),
    };
    if let Some(extra) = fields.next() {
        return Err(format!("unexpected trailing field `{extra}`"));
    }
    Ok((ts, kind))
}

fn parse_access<'a>(fields: &mut impl Iterator<Item = &'a str>) -> Result<Access, String> {
    let addr = fields.next().ok_or("missing address")?;
    let digits = addr
        .strip_prefix("0x")
        .or_else(|| addr.strip_prefix("0X"))
        .unwrap_or(addr);
    let addr = u64::from_str_radix(digits, 16).map_err(|_| format!("invalid address `{addr}`"))?;
    let size = fields.next().ok_or("missing size")?;
    let size: u64 = size.parse().map_err(|_| format!("invalid size `{size}`"))?;
    if size == 0 {
        return Err("access size must be at least 1".into());
    }
    Ok(Access::new(addr, size))
}

/// Writes events in the text format, ignoring their `tid`.
pub fn write_thread_trace<'a>(
    mut w: impl Write,
    events: impl IntoIterator<Item = &'a TraceEvent>,
) -> std::io::Result<()> {
    for ev in events {
        match ev.kind {
            EventKind::Call(r) => writeln!(w, "{} call {}", ev.ts, r)?,
            EventKind::Return => writeln!(w, "{} ret", ev.ts)?,
            EventKind::Read(a) => writeln!(w, "{} rd 0x{:x} {}", ev.ts, a.addr, a.size)?,
            EventKind::Write(a) => writeln!(w, "{} wr 0x{:x} {}", ev.ts, a.addr, a.size)?,
            EventKind::KernelRead(a) => writeln!(w, "{} krd 0x{:x} {}", ev.ts, a.addr, a.size)?,
            EventKind::KernelWrite(a) => writeln!(w, "{} kwr 0x{:x} {}", ev.ts, a.addr, a.size)?,
            EventKind::Cost(n) => writeln!(w, "{} cost {}", ev.ts, n)?,
        }
    }
    Ok(())
}
