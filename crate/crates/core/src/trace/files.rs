use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{write_thread_trace, RoutineNames, ThreadId, TraceError, TraceEvent};

/// `<base>.t<tid>.trace`
pub fn thread_trace_path(base: &Path, tid: ThreadId) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(format!(".t{tid}.trace"));
    PathBuf::from(s)
}

/// `<base>.names`
pub fn names_path(base: &Path) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".names");
    PathBuf::from(s)
}

/// Finds every `<base>.t<tid>.trace` next to `base`, sorted by tid.
pub fn discover_thread_files(base: &Path) -> Result<Vec<(ThreadId, PathBuf)>, TraceError> {
    let dir = match base.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let stem = base
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| TraceError::NoTraceFiles(base.display().to_string()))?;
    let prefix = format!("{stem}.t");
    let mut found = Vec::new();
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(TraceError::NoTraceFiles(base.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(tid) = name
            .strip_prefix(&prefix)
            .and_then(|rest| rest.strip_suffix(".trace"))
            .and_then(|t| t.parse::<ThreadId>().ok())
        else {
            continue;
        };
        if tid == ThreadId::MAX {
            continue;
        }
        found.push((tid, entry.path()));
    }
    if found.is_empty() {
        return Err(TraceError::NoTraceFiles(base.display().to_string()));
    }
    found.sort();
    Ok(found)
}

/// Opens all thread files of `base` as buffered readers.
pub(crate) fn open_thread_files(
    base: &Path,
) -> Result<Vec<(ThreadId, PathBuf, BufReader<File>)>, TraceError> {
    discover_thread_files(base)?
        .into_iter()
        .map(|(tid, path)| {
            let f = File::open(&path).map_err(|e| TraceError::from(e).in_file(&path))?;
            Ok((tid, path, BufReader::new(f)))
        })
        .collect()
}

/// Writes one file per thread plus the names sidecar (if any names).
pub fn write_trace_files(
    base: &Path,
    threads: &[(ThreadId, Vec<TraceEvent>)],
    names: &RoutineNames,
) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (tid, events) in threads {
        let path = thread_trace_path(base, *tid);
        let mut w = BufWriter::new(File::create(&path)?);
        write_thread_trace(&mut w, events)?;
        w.flush()?;
        written.push(path);
    }
    if !names.is_empty() {
        let path = names_path(base);
        let mut w = BufWriter::new(File::create(&path)?);
        names.write(&mut w)?;
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths() {
        let base = Path::new("/tmp/run");
        assert_eq!(thread_trace_path(base, 3), PathBuf::from("/tmp/run.t3.trace"));
        assert_eq!(names_path(base), PathBuf::from("/tmp/run.names"));
    }

    #[test]
    fn discovery_sorts_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["x.t2.trace", "x.t10.trace", "x.t1.trace", "x.tq.trace", "y.t1.trace", "x.names"] {
            std::fs::write(dir.path().join(name), "").unwrap();
        }
        let found = discover_thread_files(&dir.path().join("x")).unwrap();
        let tids: Vec<_> = found.iter().map(|(t, _)| *t).collect();
        assert_eq!(tids, vec![1, 2, 10]);
        assert!(matches!(
            discover_thread_files(&dir.path().join("z")),
            Err(TraceError::NoTraceFiles(_))
        ));
        assert!(matches!(
            discover_thread_files(Path::new("/nonexistent/dir/base")),
            Err(TraceError::NoTraceFiles(_))
        ));
    }
}
