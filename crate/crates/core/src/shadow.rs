//! Timestamp shadow memories.
//!
//! Both the global write-timestamp map and the per-thread access-timestamp
//! maps are three-level lookup tables: a primary table of secondary tables,
//! each of which indexes fixed-size leaf chunks of timestamps. Only chunks
//! that have been written are allocated, so space follows the touched part of
//! the address space. Cells whose primary index falls beyond the primary
//! table are kept in an ordered auxiliary map, the same trick memcheck uses
//! for the upper part of a 64-bit address space.
//!
//! A cell that was never written reads as `0`, which the profiler uses as the
//! "never accessed" sentinel.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::trace::ThreadId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShadowError {
    #[error("timestamp {value} does not fit in a {width}-bit counter")]
    CounterWidthExceeded { value: u64, width: u8 },
    #[error("invalid counter width {0} (expected 8..=64)")]
    InvalidWidth(u8),
    #[error("invalid table geometry: {0}")]
    InvalidGeometry(String),
}

/// Bit width `w` of the timestamp counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CounterWidth(u8);

impl CounterWidth {
    pub const MIN: u8 = 8;
    pub const MAX: u8 = 64;

    pub fn new(bits: u8) -> Result<Self, ShadowError> {
        if (Self::MIN..=Self::MAX).contains(&bits) {
            Ok(Self(bits))
        } else {
            Err(ShadowError::InvalidWidth(bits))
        }
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Largest representable timestamp, `2^w - 1`.
    pub fn max_value(self) -> u64 {
        if self.0 == 64 {
            u64::MAX
        } else {
            (1u64 << self.0) - 1
        }
    }

    pub fn fits(self, value: u64) -> bool {
        value <= self.max_value()
    }
}

impl Default for CounterWidth {
    fn default() -> Self {
        Self(32)
    }
}

impl fmt::Display for CounterWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fan-out of the three table levels. All three must be powers of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub primary: usize,
    pub secondary: usize,
    pub chunk: usize,
}

impl Default for Geometry {
    /// 2048 secondary tables of 16K chunks, each chunk covering 64K cells.
    fn default() -> Self {
        Self {
            primary: 2048,
            secondary: 16 * 1024,
            chunk: 64 * 1024,
        }
    }
}

impl Geometry {
    pub fn new(primary: usize, secondary: usize, chunk: usize) -> Result<Self, ShadowError> {
        let g = Self {
            primary,
            secondary,
            chunk,
        };
        g.validate()?;
        Ok(g)
    }

    /// A small geometry for tests: 4 x 4 x 16 cells before spilling into
    /// the auxiliary map.
    pub fn tiny() -> Self {
        Self {
            primary: 4,
            secondary: 4,
            chunk: 16,
        }
    }

    pub fn validate(&self) -> Result<(), ShadowError> {
        for (name, n) in [
            ("primary", self.primary),
            ("secondary", self.secondary),
            ("chunk", self.chunk),
        ] {
            if n == 0 || !n.is_power_of_two() {
                return Err(ShadowError::InvalidGeometry(format!(
                    "{name} fan-out {n} is not a power of two"
                )));
            }
        }
        Ok(())
    }

    fn chunk_bits(&self) -> u32 {
        self.chunk.trailing_zeros()
    }

    fn secondary_bits(&self) -> u32 {
        self.secondary.trailing_zeros()
    }

    /// (primary index, secondary index, offset within chunk)
    #[inline]
    fn split(&self, cell: u64) -> (u64, usize, usize) {
        let cb = self.chunk_bits();
        let sb = self.secondary_bits();
        let offset = (cell & (self.chunk as u64 - 1)) as usize;
        let rest = cell >> cb;
        let sec = (rest & (self.secondary as u64 - 1)) as usize;
        let prim = if sb >= 64 { 0 } else { rest >> sb };
        (prim, sec, offset)
    }

    #[inline]
    fn join(&self, prim: u64, sec: usize, offset: usize) -> u64 {
        let cb = self.chunk_bits();
        let sb = self.secondary_bits();
        (((prim << sb) | sec as u64) << cb) | offset as u64
    }
}

/// Who performed the latest write to a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WriterTag {
    Thread(ThreadId),
    Kernel,
}

const KERNEL_TAG: u32 = u32::MAX;

impl WriterTag {
    fn encode(self) -> u32 {
        match self {
            WriterTag::Thread(tid) => {
                debug_assert_ne!(tid, KERNEL_TAG, "thread id collides with kernel tag");
                tid
            }
            WriterTag::Kernel => KERNEL_TAG,
        }
    }

    fn decode(raw: u32) -> Self {
        if raw == KERNEL_TAG {
            WriterTag::Kernel
        } else {
            WriterTag::Thread(raw)
        }
    }
}

enum Stamps {
    Narrow(Box<[u32]>),
    Wide(Box<[u64]>),
}

impl Stamps {
    #[inline]
    fn get(&self, i: usize) -> u64 {
        match self {
            Stamps::Narrow(v) => v[i] as u64,
            Stamps::Wide(v) => v[i],
        }
    }

    #[inline]
    fn set(&mut self, i: usize, value: u64) {
        match self {
            Stamps::Narrow(v) => v[i] = value as u32,
            Stamps::Wide(v) => v[i] = value,
        }
    }
}

struct Chunk {
    stamps: Stamps,
    writers: Option<Box<[u32]>>,
}

impl Chunk {
    fn new(len: usize, wide: bool, tagged: bool) -> Self {
        let stamps = if wide {
            Stamps::Wide(vec![0u64; len].into_boxed_slice())
        } else {
            Stamps::Narrow(vec![0u32; len].into_boxed_slice())
        };
        Self {
            stamps,
            writers: tagged.then(|| vec![0u32; len].into_boxed_slice()),
        }
    }

    fn len(&self) -> usize {
        match &self.stamps {
            Stamps::Narrow(v) => v.len(),
            Stamps::Wide(v) => v.len(),
        }
    }
}

struct Secondary {
    chunks: Box<[Option<Box<Chunk>>]>,
}

impl Secondary {
    fn new(len: usize) -> Self {
        Self {
            chunks: (0..len).map(|_| None).collect(),
        }
    }
}

/// Three-level timestamp table over cell ids.
pub struct TimestampTable {
    geometry: Geometry,
    width: CounterWidth,
    tagged: bool,
    primary: Vec<Option<Box<Secondary>>>,
    auxiliary: BTreeMap<u64, Box<Secondary>>,
    allocated_chunks: usize,
    allocated_secondaries: usize,
}

impl fmt::Debug for TimestampTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimestampTable")
            .field("geometry", &self.geometry)
            .field("width", &self.width)
            .field("allocated_chunks", &self.allocated_chunks)
            .finish()
    }
}

impl TimestampTable {
    pub fn new(geometry: Geometry, width: CounterWidth) -> Self {
        Self::build(geometry, width, false)
    }

    fn build(geometry: Geometry, width: CounterWidth, tagged: bool) -> Self {
        debug_assert!(geometry.validate().is_ok());
        Self {
            geometry,
            width,
            tagged,
            primary: (0..geometry.primary).map(|_| None).collect(),
            auxiliary: BTreeMap::new(),
            allocated_chunks: 0,
            allocated_secondaries: 0,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn width(&self) -> CounterWidth {
        self.width
    }

    /// Number of leaf chunks allocated so far.
    pub fn allocated_chunks(&self) -> usize {
        self.allocated_chunks
    }

    pub fn allocated_secondaries(&self) -> usize {
        self.allocated_secondaries
    }

    /// Approximate heap footprint in bytes.
    pub fn footprint_bytes(&self) -> usize {
        let stamp = if self.width.bits() > 32 { 8 } else { 4 };
        let tag = if self.tagged { 4 } else { 0 };
        let ptr = std::mem::size_of::<usize>();
        self.primary.len() * ptr
            + self.allocated_secondaries * self.geometry.secondary * ptr
            + self.allocated_chunks * self.geometry.chunk * (stamp + tag)
    }

    fn secondary(&self, prim: u64) -> Option<&Secondary> {
        if prim < self.primary.len() as u64 {
            self.primary[prim as usize].as_deref()
        } else {
            self.auxiliary.get(&prim).map(|b| &**b)
        }
    }

    #[inline]
    fn chunk(&self, cell: u64) -> Option<(&Chunk, usize)> {
        let (prim, sec, off) = self.geometry.split(cell);
        let chunk = self.secondary(prim)?.chunks[sec].as_deref()?;
        Some((chunk, off))
    }

    fn chunk_mut(&mut self, cell: u64) -> Option<(&mut Chunk, usize)> {
        let (prim, sec, off) = self.geometry.split(cell);
        let secondary = if prim < self.primary.len() as u64 {
            self.primary[prim as usize].as_deref_mut()
        } else {
            self.auxiliary.get_mut(&prim).map(|b| &mut **b)
        }?;
        let chunk = secondary.chunks[sec].as_deref_mut()?;
        Some((chunk, off))
    }

    fn chunk_or_insert(&mut self, cell: u64) -> (&mut Chunk, usize) {
        let (prim, sec, off) = self.geometry.split(cell);
        let geometry = self.geometry;
        let slot = if prim < self.primary.len() as u64 {
            &mut self.primary[prim as usize]
        } else {
            // Out-of-range primary indices spill into the auxiliary map.
            let entry = self.auxiliary.entry(prim);
            if let std::collections::btree_map::Entry::Vacant(_) = entry {
                self.allocated_secondaries += 1;
            }
            let b = entry.or_insert_with(|| Box::new(Secondary::new(geometry.secondary)));
            return Self::leaf_in(
                b,
                sec,
                off,
                geometry,
                self.width,
                self.tagged,
                &mut self.allocated_chunks,
            );
        };
        if slot.is_none() {
            *slot = Some(Box::new(Secondary::new(geometry.secondary)));
            self.allocated_secondaries += 1;
        }
        let secondary = slot.as_deref_mut().expect("secondary just ensured");
        Self::leaf_in(
            secondary,
            sec,
            off,
            geometry,
            self.width,
            self.tagged,
            &mut self.allocated_chunks,
        )
    }

    fn leaf_in<'a>(
        secondary: &'a mut Secondary,
        sec: usize,
        off: usize,
        geometry: Geometry,
        width: CounterWidth,
        tagged: bool,
        allocated: &mut usize,
    ) -> (&'a mut Chunk, usize) {
        let slot = &mut secondary.chunks[sec];
        if slot.is_none() {
            *slot = Some(Box::new(Chunk::new(
                geometry.chunk,
                width.bits() > 32,
                tagged,
            )));
            *allocated += 1;
        }
        (slot.as_deref_mut().expect("chunk just ensured"), off)
    }

    /// Stored timestamp of `cell`, or `0` if never set.
    #[inline]
    pub fn get(&self, cell: u64) -> u64 {
        match self.chunk(cell) {
            Some((chunk, off)) => chunk.stamps.get(off),
            None => 0,
        }
    }

    /// Stores `value` for `cell`, allocating the chunk path on demand.
    ///
    /// Storing `0` into an unallocated chunk is a no-op.
    pub fn set(&mut self, cell: u64, value: u64) -> Result<(), ShadowError> {
        if !self.width.fits(value) {
            return Err(ShadowError::CounterWidthExceeded {
                value,
                width: self.width.bits(),
            });
        }
        if value == 0 {
            if let Some((chunk, off)) = self.chunk_mut(cell) {
                chunk.stamps.set(off, 0);
            }
            return Ok(());
        }
        let (chunk, off) = self.chunk_or_insert(cell);
        chunk.stamps.set(off, value);
        Ok(())
    }

    fn set_tagged(&mut self, cell: u64, value: u64, tag: u32) -> Result<(), ShadowError> {
        if !self.width.fits(value) {
            return Err(ShadowError::CounterWidthExceeded {
                value,
                width: self.width.bits(),
            });
        }
        let (chunk, off) = self.chunk_or_insert(cell);
        chunk.stamps.set(off, value);
        if let Some(w) = chunk.writers.as_deref_mut() {
            w[off] = tag;
        }
        Ok(())
    }

    fn tag(&self, cell: u64) -> Option<u32> {
        let (chunk, off) = self.chunk(cell)?;
        chunk.writers.as_deref().map(|w| w[off])
    }

    fn chunks(&self) -> impl Iterator<Item = (u64, &Chunk)> + '_ {
        let low = self
            .primary
            .iter()
            .enumerate()
            .filter_map(|(p, s)| s.as_deref().map(|s| (p as u64, s)));
        let high = self.auxiliary.iter().map(|(p, s)| (*p, &**s));
        let geometry = self.geometry;
        low.chain(high).flat_map(move |(prim, secondary)| {
            secondary
                .chunks
                .iter()
                .enumerate()
                .filter_map(move |(sec, c)| {
                    c.as_deref().map(|c| (geometry.join(prim, sec, 0), c))
                })
        })
    }

    /// Every cell with a nonzero timestamp, in ascending cell order.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.chunks().flat_map(|(base, chunk)| {
            (0..chunk.len()).filter_map(move |i| {
                let v = chunk.stamps.get(i);
                (v != 0).then_some((base + i as u64, v))
            })
        })
    }

    /// Rewrites every nonzero timestamp in place with `f(cell, old)`.
    ///
    /// No width check is performed; callers produce compacted values.
    pub(crate) fn update_nonzero(&mut self, mut f: impl FnMut(u64, u64) -> u64) {
        let geometry = self.geometry;
        let visit = |prim: u64, secondary: &mut Secondary, f: &mut dyn FnMut(u64, u64) -> u64| {
            for (sec, chunk) in secondary.chunks.iter_mut().enumerate() {
                let Some(chunk) = chunk.as_deref_mut() else {
                    continue;
                };
                let base = geometry.join(prim, sec, 0);
                for i in 0..chunk.len() {
                    let v = chunk.stamps.get(i);
                    if v != 0 {
                        chunk.stamps.set(i, f(base + i as u64, v));
                    }
                }
            }
        };
        for (p, s) in self.primary.iter_mut().enumerate() {
            if let Some(s) = s.as_deref_mut() {
                visit(p as u64, s, &mut f);
            }
        }
        for (p, s) in self.auxiliary.iter_mut() {
            visit(*p, s, &mut f);
        }
    }
}

/// Global write-timestamp map `wts` plus the last writer of each cell.
///
/// Writer tags live in a parallel leaf array of the same chunks. A writer is
/// defined exactly when the stored timestamp is nonzero.
#[derive(Debug)]
pub struct GlobalShadow {
    table: TimestampTable,
}

impl GlobalShadow {
    pub fn new(geometry: Geometry, width: CounterWidth) -> Self {
        Self {
            table: TimestampTable::build(geometry, width, true),
        }
    }

    #[inline]
    pub fn wts(&self, cell: u64) -> u64 {
        self.table.get(cell)
    }

    /// Timestamp and writer of the latest write to `cell`.
    #[inline]
    pub fn get(&self, cell: u64) -> (u64, Option<WriterTag>) {
        match self.table.chunk(cell) {
            Some((chunk, off)) => {
                let v = chunk.stamps.get(off);
                if v == 0 {
                    (0, None)
                } else {
                    let raw = chunk.writers.as_deref().expect("global table is tagged")[off];
                    (v, Some(WriterTag::decode(raw)))
                }
            }
            None => (0, None),
        }
    }

    pub fn writer(&self, cell: u64) -> Option<WriterTag> {
        if self.table.get(cell) == 0 {
            None
        } else {
            self.table.tag(cell).map(WriterTag::decode)
        }
    }

    pub fn record_write(
        &mut self,
        cell: u64,
        stamp: u64,
        writer: WriterTag,
    ) -> Result<(), ShadowError> {
        debug_assert_ne!(stamp, 0, "write stamped with the never-written sentinel");
        self.table.set_tagged(cell, stamp, writer.encode())
    }

    pub fn table(&self) -> &TimestampTable {
        &self.table
    }

    pub(crate) fn table_mut(&mut self) -> &mut TimestampTable {
        &mut self.table
    }

    pub fn iter_nonzero(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.table.iter_nonzero()
    }
}
