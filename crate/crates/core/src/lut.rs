//! Sampled-lattice look-up tables with simplex interpolation.
//!
//! A table of kind S, T1 or T2 stores one residual per lattice point of a
//! `D`-dimensional grid with side `L = 256 / I + 1`, where `I` is the sampling
//! interval. Queries take `D` 8-bit indices, split each into a lattice
//! coordinate (`v / I`) and an offset (`v % I`), and blend the `D + 1`
//! vertices of the simplex that contains the point.
//!
//! File layout (little-endian):
//!
//! ```text
//! "STLT" | u32 version (=1) | u8 kind | u8 D | u8 I | u8 reserved | f32 values[L^D]
//! ```

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::nn::weights::ByteReader;
use crate::quant::validate_interval;

pub const LUT_MAGIC: [u8; 4] = *b"STLT";
pub const LUT_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LutKind {
    S,
    T1,
    T2,
}

impl LutKind {
    pub const ALL: [LutKind; 3] = [LutKind::S, LutKind::T1, LutKind::T2];

    pub fn tag(self) -> u8 {
        match self {
            LutKind::S => 0,
            LutKind::T1 => 1,
            LutKind::T2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(LutKind::S),
            1 => Ok(LutKind::T1),
            2 => Ok(LutKind::T2),
            t => Err(FormatError::UnknownKind(t).into()),
        }
    }

    /// Number of index pixels the kind's network looks at.
    pub fn dims(self) -> usize {
        match self {
            LutKind::S | LutKind::T2 => 4,
            LutKind::T1 => 6,
        }
    }

    pub fn default_interval(self) -> u32 {
        match self {
            LutKind::S | LutKind::T2 => 4,
            LutKind::T1 => 16,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            LutKind::S => "s.stlt",
            LutKind::T1 => "t1.stlt",
            LutKind::T2 => "t2.stlt",
        }
    }
}

impl fmt::Display for LutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LutKind::S => "S",
            LutKind::T1 => "T1",
            LutKind::T2 => "T2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LutSpec {
    pub kind: LutKind,
    pub dims: usize,
    pub interval: u32,
}

impl LutSpec {
    pub fn new(kind: LutKind, dims: usize, interval: u32) -> Result<Self> {
        validate_interval(interval)?;
        if dims == 0 || dims > 8 {
            return Err(Error::config(format!("LUT dimension must be in 1..=8, got {dims}")));
        }
        Ok(Self {
            kind,
            dims,
            interval,
        })
    }

    /// The kind's native dimension at the given interval.
    pub fn for_kind(kind: LutKind, interval: u32) -> Result<Self> {
        Self::new(kind, kind.dims(), interval)
    }

    pub fn default_for(kind: LutKind) -> Self {
        Self {
            kind,
            dims: kind.dims(),
            interval: kind.default_interval(),
        }
    }

    /// Lattice side `L = 256 / I + 1`.
    pub fn side(&self) -> usize {
        256 / self.interval as usize + 1
    }

    pub fn entries(&self) -> usize {
        self.side().pow(self.dims as u32)
    }
}

/// Payload bytes of a table: `4 * L^D`.
pub fn lut_size_bytes(spec: &LutSpec) -> u64 {
    4 * (spec.side() as u64).pow(spec.dims as u32)
}

/// Batched evaluation of a `D`-input scalar function at lattice points.
pub trait LatticeOracle: Sync {
    fn dims(&self) -> usize;

    /// `inputs` holds `out.len()` rows of `dims()` values each.
    fn eval_batch(&self, inputs: &[f32], out: &mut [f32]);
}

struct FnOracle<F> {
    dims: usize,
    f: F,
}

impl<F: Fn(&[f32]) -> f32 + Sync> LatticeOracle for FnOracle<F> {
    fn dims(&self) -> usize {
        self.dims
    }

    fn eval_batch(&self, inputs: &[f32], out: &mut [f32]) {
        for (row, o) in inputs.chunks_exact(self.dims).zip(out.iter_mut()) {
            *o = (self.f)(row);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    spec: LutSpec,
    strides: Vec<usize>,
    values: Vec<f32>,
}

const BUILD_CHUNK: usize = 2048;

/// Tabulates `oracle(k_0 * I, ..., k_{D-1} * I)` over the whole lattice.
pub fn build_lut(oracle: impl Fn(&[f32]) -> f32 + Sync, spec: LutSpec) -> Result<LookupTable> {
    build_lut_batched(
        &FnOracle {
            dims: spec.dims,
            f: oracle,
        },
        spec,
    )
}

pub fn build_lut_batched(oracle: &dyn LatticeOracle, spec: LutSpec) -> Result<LookupTable> {
    LutSpec::new(spec.kind, spec.dims, spec.interval)?;
    if oracle.dims() != spec.dims {
        return Err(Error::config(format!(
            "oracle takes {} inputs but the {} table has {} dimensions",
            oracle.dims(),
            spec.kind,
            spec.dims
        )));
    }
    let d = spec.dims;
    let side = spec.side();
    let step = spec.interval as f32;
    let mut values = table_storage(spec.entries());
    values
        .par_chunks_mut(BUILD_CHUNK)
        .enumerate()
        .for_each(|(chunk, out)| {
            let mut coord = unflatten(chunk * BUILD_CHUNK, side, d);
            let mut inputs = Vec::with_capacity(out.len() * d);
            for _ in 0..out.len() {
                inputs.extend(coord.iter().map(|&k| k as f32 * step));
                // lexicographic increment, last dimension fastest
                for dim in (0..d).rev() {
                    coord[dim] += 1;
                    if coord[dim] < side {
                        break;
                    }
                    coord[dim] = 0;
                }
            }
            oracle.eval_batch(&inputs, out);
        });
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{} oracle at lattice {:?}",
            spec.kind,
            unflatten(i, side, d)
        )));
    }
    Ok(LookupTable::from_values(spec, values))
}

const HUGE_PAGE: usize = 2 << 20;

/// Zeroed storage for table values. Large tables are served by random
/// lookups, so on Linux they are backed by transparent huge pages where the
/// kernel allows it.
fn table_storage(len: usize) -> Vec<f32> {
    let values = vec![0.0f32; len];
    #[cfg(target_os = "linux")]
    if len * 4 >= 2 * HUGE_PAGE {
        let start = values.as_ptr() as usize;
        let first = start.next_multiple_of(HUGE_PAGE);
        let end = (start + len * 4) / HUGE_PAGE * HUGE_PAGE;
        if end > first {
            // SAFETY: the range lies inside the allocation; madvise only
            // changes paging behaviour and failure is harmless
            unsafe {
                libc::madvise(first as *mut libc::c_void, end - first, libc::MADV_HUGEPAGE);
            }
        }
    }
    values
}

#[inline(always)]
fn prefetch(values: &[f32], i: usize) {
    #[cfg(target_arch = "x86_64")]
    if i < values.len() {
        // SAFETY: prefetching is a hint and the address is in bounds
        unsafe {
            use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
            _mm_prefetch::<_MM_HINT_T0>(values.as_ptr().add(i) as *const i8);
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = (values, i);
}

fn unflatten(mut index: usize, side: usize, dims: usize) -> Vec<usize> {
    let mut coord = vec![0; dims];
    for c in coord.iter_mut().rev() {
        *c = index % side;
        index /= side;
    }
    coord
}

impl LookupTable {
    fn from_values(spec: LutSpec, values: Vec<f32>) -> Self {
        let side = spec.side();
        let strides = (0..spec.dims)
            .map(|d| side.pow((spec.dims - 1 - d) as u32))
            .collect();
        Self {
            spec,
            strides,
            values,
        }
    }

    pub fn new(spec: LutSpec, values: Vec<f32>) -> Result<Self> {
        let values = if values.len() * 4 >= 2 * HUGE_PAGE {
            let mut fresh = table_storage(values.len());
            fresh.copy_from_slice(&values);
            fresh
        } else {
            values
        };
        Self::checked(spec, values)
    }

    fn checked(spec: LutSpec, values: Vec<f32>) -> Result<Self> {
        LutSpec::new(spec.kind, spec.dims, spec.interval)?;
        if values.len() != spec.entries() {
            return Err(Error::shape(
                format!("{} LUT values", spec.kind),
                &[spec.entries()],
                &[values.len()],
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} LUT entry {i}", spec.kind)));
        }
        Ok(Self::from_values(spec, values))
    }

    pub fn spec(&self) -> &LutSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Stored value at a lattice coordinate.
    pub fn at(&self, coord: &[usize]) -> f32 {
        let idx: usize = coord.iter().zip(&self.strides).map(|(c, s)| c * s).sum();
        self.values[idx]
    }

    /// Simplex interpolation at `D` integer indices in `[0, 255]`.
    pub fn query_simplex(&self, v: &[i32]) -> Result<f32> {
        if v.len() != self.spec.dims {
            return Err(Error::shape(
                format!("{} LUT query", self.spec.kind),
                &[self.spec.dims],
                &[v.len()],
            ));
        }
        if let Some(&bad) = v.iter().find(|&&x| !(0..=255).contains(&x)) {
            return Err(Error::OutOfRange {
                value: bad as i64,
                min: 0,
                max: 255,
                location: format!("{} LUT query", self.spec.kind),
            });
        }
        let mut idx = [0u8; 8];
        for (slot, &x) in idx.iter_mut().zip(v) {
            *slot = x as u8;
        }
        Ok(match self.spec.dims {
            1 => self.query::<1>(idx[..1].try_into().unwrap()),
            2 => self.query::<2>(idx[..2].try_into().unwrap()),
            3 => self.query::<3>(idx[..3].try_into().unwrap()),
            4 => self.query::<4>(idx[..4].try_into().unwrap()),
            5 => self.query::<5>(idx[..5].try_into().unwrap()),
            6 => self.query::<6>(idx[..6].try_into().unwrap()),
            7 => self.query::<7>(idx[..7].try_into().unwrap()),
            _ => self.query::<8>(idx),
        })
    }

    /// Unchecked simplex query for a compile-time dimension; `D` must equal
    /// `spec.dims`.
    ///
    /// Dimensions are visited in order of descending offset (ties by
    /// ascending dimension). Vertex `e_0` is the cell origin and each step
    /// advances one coordinate; the weights are successive offset
    /// differences and sum to `I`.
    #[inline]
    pub fn query<const D: usize>(&self, v: [u8; D]) -> f32 {
        debug_assert_eq!(D, self.spec.dims);
        let interval = self.spec.interval;
        let shift = interval.trailing_zeros();
        let mask = interval - 1;
        let mut base = 0usize;
        let mut lsb = [0u32; D];
        let mut order = [0usize; D];
        for d in 0..D {
            let x = v[d] as u32;
            base += (x >> shift) as usize * self.strides[d];
            lsb[d] = x & mask;
            order[d] = d;
        }
        for a in 1..D {
            let mut b = a;
            while b > 0 && lsb[order[b - 1]] < lsb[order[b]] {
                order.swap(b - 1, b);
                b -= 1;
            }
        }
        let mut idx = base;
        let mut acc = (interval - lsb[order[0]]) as f32 * self.values[idx];
        for k in 0..D {
            idx += self.strides[order[k]];
            let w = if k + 1 < D {
                lsb[order[k]] - lsb[order[k + 1]]
            } else {
                lsb[order[k]]
            };
            acc += w as f32 * self.values[idx];
        }
        acc / interval as f32
    }

    /// [`query`](Self::query) over many points. Vertex addresses of a group
    /// are resolved and prefetched before any value is read, so cache misses
    /// overlap; every result is bit-identical to the single-point query.
    pub fn query_batch<const D: usize>(&self, points: &[[u8; D]], out: &mut [f32]) {
        debug_assert_eq!(D, self.spec.dims);
        debug_assert_eq!(points.len(), out.len());
        const GROUP: usize = 32;
        let interval = self.spec.interval;
        let shift = interval.trailing_zeros();
        let mask = interval - 1;
        let mut idx = [[0usize; 9]; GROUP];
        let mut wts = [[0u32; 9]; GROUP];
        for (pts, dst) in points.chunks(GROUP).zip(out.chunks_mut(GROUP)) {
            for (g, v) in pts.iter().enumerate() {
                let mut base = 0usize;
                // offset in the high bits, reversed dimension in the low bits:
                // descending keys give descending offsets, ties by dimension
                let mut key = [0u32; D];
                for d in 0..D {
                    let x = v[d] as u32;
                    base += (x >> shift) as usize * self.strides[d];
                    key[d] = ((x & mask) << 3) | (7 - d as u32);
                }
                let mut sorted = [0u32; D];
                for d in 0..D {
                    let mut rank = 0;
                    for e in 0..D {
                        rank += (key[e] > key[d]) as usize;
                    }
                    sorted[rank] = key[d];
                }
                let (ix, wt) = (&mut idx[g], &mut wts[g]);
                ix[0] = base;
                wt[0] = interval - (sorted[0] >> 3);
                prefetch(&self.values, base);
                for k in 0..D {
                    let dim = 7 - (sorted[k] & 7) as usize;
                    ix[k + 1] = ix[k] + self.strides[dim];
                    let next = if k + 1 < D { sorted[k + 1] >> 3 } else { 0 };
                    wt[k + 1] = (sorted[k] >> 3) - next;
                    prefetch(&self.values, ix[k + 1]);
                }
            }
            for (g, o) in dst.iter_mut().enumerate() {
                let (ix, wt) = (&idx[g], &wts[g]);
                let mut acc = wt[0] as f32 * self.values[ix[0]];
                for k in 1..=D {
                    acc += wt[k] as f32 * self.values[ix[k]];
                }
                *o = acc / interval as f32;
            }
        }
    }

    pub fn byte_size(&self) -> u64 {
        lut_size_bytes(&self.spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(&LUT_MAGIC);
        header[4..8].copy_from_slice(&LUT_VERSION.to_le_bytes());
        header[8] = self.spec.kind.tag();
        header[9] = self.spec.dims as u8;
        header[10] = self.spec.interval as u8;
        let write_all = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            w.write_all(&header)?;
            for v in &self.values {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()
        };
        write_all(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        let magic = rd.array::<4>()?;
        if magic != LUT_MAGIC {
            return Err(FormatError::BadMagic {
                expected: LUT_MAGIC,
                found: magic,
            }
            .into());
        }
        let version = rd.u32()?;
        if version != LUT_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let kind = LutKind::from_tag(rd.u8()?)?;
        let dims = rd.u8()? as usize;
        let interval = rd.u8()? as u32;
        let _reserved = rd.u8()?;
        let spec = LutSpec::new(kind, dims, interval)
            .map_err(|e| FormatError::InvalidHeader(e.to_string()))?;
        let raw = rd.take(spec.entries() * 4)?;
        if rd.remaining() > 0 {
            return Err(FormatError::TrailingBytes(rd.remaining()).into());
        }
        let mut values = table_storage(spec.entries());
        for (v, c) in values.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        Self::checked(spec, values)
    }
}

/// The three tables used at inference time.
#[derive(Debug, Clone)]
pub struct LutSet {
    pub s: LookupTable,
    pub t1: LookupTable,
    pub t2: LookupTable,
}

impl LutSet {
    pub fn get(&self, kind: LutKind) -> &LookupTable {
        match kind {
            LutKind::S => &self.s,
            LutKind::T1 => &self.t1,
            LutKind::T2 => &self.t2,
        }
    }

    /// Checks that every table has the kind and dimension its slot requires.
    pub fn validate(&self) -> Result<()> {
        for kind in LutKind::ALL {
            let spec = self.get(kind).spec();
            if spec.kind != kind || spec.dims != kind.dims() {
                return Err(Error::config(format!(
                    "{kind} slot holds a {}-kind table with {} dimensions",
                    spec.kind, spec.dims
                )));
            }
        }
        Ok(())
    }

    pub fn paths(dir: &Path) -> [(LutKind, PathBuf); 3] {
        LutKind::ALL.map(|k| (k, dir.join(k.file_name())))
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let [(_, s), (_, t1), (_, t2)] = Self::paths(dir);
        let set = Self {
            s: LookupTable::load(&s)?,
            t1: LookupTable::load(&t1)?,
            t2: LookupTable::load(&t2)?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<Vec<(LutKind, PathBuf)>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (kind, path) in Self::paths(dir) {
            self.get(kind).save(&path)?;
            written.push((kind, path));
        }
        Ok(written)
    }

    pub fn total_bytes(&self) -> u64 {
        LutKind::ALL.iter().map(|&k| self.get(k).byte_size()).sum()
    }
}
