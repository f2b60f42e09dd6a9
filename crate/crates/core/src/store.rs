//! Completed-activation records and their CSV form.
//!
//! One row per activation:
//!
//! ```text
//! rtn,tid,trms,rms,cost,induced_thread,induced_external,truncated,self_induced_thread,self_induced_external
//! ```
//!
//! `induced_*` are inclusive of descendants; `self_induced_*` count only the
//! induced first-accesses made while the activation was on top of the stack,
//! so summing them over a store counts every induced access exactly once.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::trace::{RoutineId, ThreadId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProfileTuple {
    pub rtn: RoutineId,
    pub tid: ThreadId,
    pub trms: u64,
    pub rms: u64,
    pub cost: u64,
    pub induced_thread: u64,
    pub induced_external: u64,
    /// The activation was still pending when the trace ended.
    pub truncated: bool,
    pub self_induced_thread: u64,
    pub self_induced_external: u64,
}

impl ProfileTuple {
    pub fn induced(&self) -> u64 {
        self.induced_thread + self.induced_external
    }

    pub fn is_root(&self) -> bool {
        self.rtn.is_root()
    }
}

/// Tuples in the order their activations completed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileStore {
    tuples: Vec<ProfileTuple>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: ProfileTuple) {
        self.tuples.push(t);
    }

    pub fn tuples(&self) -> &[ProfileTuple] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ProfileTuple> {
        self.tuples.iter()
    }

    /// Tuples of real routines, skipping synthetic root frames.
    pub fn routine_tuples(&self) -> impl Iterator<Item = &ProfileTuple> {
        self.tuples.iter().filter(|t| !t.is_root())
    }

    /// First completed activation of `rtn`, handy in tests.
    pub fn find(&self, rtn: RoutineId) -> Option<&ProfileTuple> {
        self.tuples.iter().find(|t| t.rtn == rtn)
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        if self.tuples.is_empty() {
            out.write_record(HEADER)?;
        }
        for t in &self.tuples {
            out.serialize(t)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv(r: impl Read) -> Result<Self, csv::Error> {
        let mut rd = csv::Reader::from_reader(r);
        let tuples = rd.deserialize().collect::<Result<Vec<ProfileTuple>, _>>()?;
        Ok(Self { tuples })
    }
}

impl FromIterator<ProfileTuple> for ProfileStore {
    fn from_iter<I: IntoIterator<Item = ProfileTuple>>(iter: I) -> Self {
        Self {
            tuples: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a ProfileStore {
    type Item = &'a ProfileTuple;
    type IntoIter = std::slice::Iter<'a, ProfileTuple>;

    fn into_iter(self) -> Self::IntoIter {
        self.tuples.iter()
    }
}

const HEADER: [&str; 10] = [
    "rtn",
    "tid",
    "trms",
    "rms",
    "cost",
    "induced_thread",
    "induced_external",
    "truncated",
    "self_induced_thread",
    "self_induced_external",
];
