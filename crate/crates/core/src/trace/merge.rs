//! Merging per-thread traces into one totally ordered stream.
//!
//! Events are ordered by `(ts, tid)`. Equal timestamps from different threads
//! go in ascending thread id order, which makes the tie-break reproducible.
//! Thread switches are not materialized: a switch sits between any two
//! adjacent events with different thread ids.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{ThreadId, TraceError, TraceEvent};

/// The merged, immutable event sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergedTrace {
    events: Vec<TraceEvent>,
}

impl MergedTrace {
    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEvent> {
        self.events.iter()
    }

    /// Number of implicit thread switches.
    pub fn switches(&self) -> usize {
        self.events
            .windows(2)
            .filter(|w| w[0].tid != w[1].tid)
            .count()
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

impl<'a> IntoIterator for &'a MergedTrace {
    type Item = &'a TraceEvent;
    type IntoIter = std::slice::Iter<'a, TraceEvent>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

/// Merges in-memory per-thread sequences.
pub fn merge(traces: Vec<Vec<TraceEvent>>) -> MergedTrace {
    let streams = traces
        .into_iter()
        .map(|t| t.into_iter().map(Ok::<_, TraceError>))
        .collect();
    let events = MergeStream::new(streams)
        .collect::<Result<Vec<_>, _>>()
        .expect("in-memory streams cannot fail");
    MergedTrace { events }
}

type HeapKey = Reverse<(u64, ThreadId, usize)>;

/// Lazy k-way merge over fallible per-thread event streams.
///
/// Holds one pending event per input, so memory does not grow with trace
/// length. The first error from any input is yielded and ends the stream.
pub struct MergeStream<I> {
    inputs: Vec<I>,
    heads: Vec<Option<TraceEvent>>,
    heap: BinaryHeap<HeapKey>,
    pending_error: Option<TraceError>,
    started: bool,
    done: bool,
}

impl<I> MergeStream<I>
where
    I: Iterator<Item = Result<TraceEvent, TraceError>>,
{
    pub fn new(inputs: Vec<I>) -> Self {
        let n = inputs.len();
        Self {
            inputs,
            heads: vec![None; n],
            heap: BinaryHeap::with_capacity(n),
            pending_error: None,
            started: false,
            done: false,
        }
    }

    fn refill(&mut self, idx: usize) {
        match self.inputs[idx].next() {
            Some(Ok(ev)) => {
                self.heap.push(Reverse((ev.ts, ev.tid, idx)));
                self.heads[idx] = Some(ev);
            }
            Some(Err(e)) if self.pending_error.is_none() => self.pending_error = Some(e),
            Some(Err(_)) => {}
            None => {}
        }
    }
}

impl<I> Iterator for MergeStream<I>
where
    I: Iterator<Item = Result<TraceEvent, TraceError>>,
{
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            for idx in 0..self.inputs.len() {
                self.refill(idx);
            }
        }
        if let Some(e) = self.pending_error.take() {
            self.done = true;
            return Some(Err(e));
        }
        let Reverse((_, _, idx)) = self.heap.pop()?;
        let ev = self.heads[idx].take().expect("heap entry has a head event");
        self.refill(idx);
        Some(Ok(ev))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Access, EventKind};
    use proptest::prelude::*;

    fn rd(tid: ThreadId, ts: u64) -> TraceEvent {
        TraceEvent::new(tid, ts, EventKind::Read(Access::new(0, 1)))
    }

    fn wr(tid: ThreadId, ts: u64) -> TraceEvent {
        TraceEvent::new(tid, ts, EventKind::Write(Access::new(0, 1)))
    }

    #[test]
    fn orders_by_timestamp() {
        let m = merge(vec![vec![rd(1, 1)], vec![wr(2, 2)]]);
        assert_eq!(m.events(), &[rd(1, 1), wr(2, 2)]);
        assert_eq!(m.switches(), 1);
    }

    #[test]
    fn ties_go_to_lower_tid() {
        let m = merge(vec![vec![wr(2, 5)], vec![rd(1, 5)]]);
        assert_eq!(m.events(), &[rd(1, 5), wr(2, 5)]);
    }

    #[test]
    fn empty_inputs() {
        assert!(merge(vec![]).is_empty());
        assert!(merge(vec![vec![], vec![]]).is_empty());
    }

    #[test]
    fn first_error_ends_stream() {
        let good = vec![Ok(rd(1, 1)), Ok(rd(1, 4))].into_iter();
        let bad = vec![
            Ok(rd(2, 2)),
            Err(TraceError::MalformedLine {
                line: 2,
                reason: "x".into(),
            }),
        ]
        .into_iter();
        let out: Vec<_> = MergeStream::new(vec![
            Box::new(good) as Box<dyn Iterator<Item = _>>,
            Box::new(bad),
        ])
        .collect();
        assert!(out[0].is_ok());
        assert!(out.iter().any(|r| r.is_err()));
        assert!(out.last().unwrap().is_err());
    }

    fn thread_traces() -> impl Strategy<Value = Vec<Vec<TraceEvent>>> {
        proptest::collection::vec(
            proptest::collection::vec((0u64..4, any::<bool>()), 0..40),
            1..6,
        )
        .prop_map(|threads| {
            threads
                .into_iter()
                .enumerate()
                .map(|(tid, steps)| {
                    let mut ts = 0;
                    steps
                        .into_iter()
                        .map(|(gap, is_read)| {
                            ts += gap + 1;
                            if is_read {
                                rd(tid as ThreadId, ts)
                            } else {
                                wr(tid as ThreadId, ts)
                            }
                        })
                        .collect()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merge_matches_full_sort(traces in thread_traces()) {
            // Oracle: sort the concatenation by (ts, tid, position in file).
            let mut expected: Vec<(u64, ThreadId, usize, TraceEvent)> = traces
                .iter()
                .flat_map(|t| t.iter().enumerate().map(|(pos, e)| (e.ts, e.tid, pos, *e)))
                .collect();
            expected.sort_by_key(|&(ts, tid, pos, _)| (ts, tid, pos));
            let expected: Vec<TraceEvent> = expected.into_iter().map(|x| x.3).collect();

            let merged = merge(traces.clone());
            prop_assert_eq!(merged.events(), expected.as_slice());
            for w in merged.events().windows(2) {
                prop_assert!((w[0].ts, w[0].tid) <= (w[1].ts, w[1].tid));
            }
        }
    }
}
