//! Streaming profile of on-disk traces: per-thread readers feed a lazy
//! merge, which feeds the profiler one event at a time.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::check::{run_checked, CheckError, CheckOptions};
use crate::profiler::{ProfilerConfig, Stats};
use crate::store::ProfileStore;
use crate::trace::{names_path, MergeStream, RoutineNames, ThreadTraceReader, TraceError, TraceEvent};

pub type EventStream = MergeStream<Box<dyn Iterator<Item = Result<TraceEvent, TraceError>>>>;

/// Opens `<base>.t*.trace` as one merged, lazily read event stream.
pub fn open_trace(base: &Path) -> Result<EventStream, TraceError> {
    let inputs = crate::trace::open_thread_files(base)?
        .into_iter()
        .map(|(tid, path, reader)| {
            let it = ThreadTraceReader::new(reader, tid).map(move |r| r.map_err(|e| e.in_file(&path)));
            Box::new(it) as Box<dyn Iterator<Item = _>>
        })
        .collect();
    Ok(MergeStream::new(inputs))
}

/// Reads the `<base>.names` sidecar if there is one.
pub fn load_names(base: &Path) -> Result<Option<RoutineNames>, TraceError> {
    let path = names_path(base);
    match File::open(&path) {
        Ok(f) => RoutineNames::parse(BufReader::new(f))
            .map(Some)
            .map_err(|e| e.in_file(&path)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(TraceError::from(e).in_file(&path)),
    }
}

pub fn profile_files(
    base: &Path,
    config: ProfilerConfig,
    opts: CheckOptions,
) -> Result<(ProfileStore, Stats), CheckError> {
    let events = open_trace(base).map_err(crate::profiler::RunError::from)?;
    run_checked(events, config, opts)
}
