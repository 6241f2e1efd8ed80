//! Reference frame window and temporal cache.
//!
//! Each processed frame leaves its shared features and enhanced output in a
//! bounded window. Later frames pick the two lowest-QP entries as references
//! and reuse the cached data instead of extracting features again.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Plane, Tensor};

pub const DEFAULT_WINDOW: usize = 7;

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub frame_index: usize,
    pub qp: i32,
    pub features: Arc<Tensor>,
    pub enhanced: Arc<Plane>,
}

impl CacheEntry {
    pub fn byte_size(&self) -> usize {
        self.features.byte_size() + std::mem::size_of_val(self.enhanced.data())
    }
}

/// Borrowed view of a reference: its features and the plane to deform.
#[derive(Debug, Clone, Copy)]
pub struct RefView<'a> {
    /// `None` when the view is the frame being enhanced (self-reference).
    pub frame_index: Option<usize>,
    pub features: &'a Tensor,
    pub frame: &'a Plane,
}

impl<'a> From<&'a CacheEntry> for RefView<'a> {
    fn from(e: &'a CacheEntry) -> Self {
        RefView {
            frame_index: Some(e.frame_index),
            features: &e.features,
            frame: &e.enhanced,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceWindow {
    capacity: usize,
    entries: VecDeque<CacheEntry>,
}

impl ReferenceWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("reference window capacity must be positive"));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.iter()
    }

    pub fn last_index(&self) -> Option<usize> {
        self.entries.back().map(|e| e.frame_index)
    }

    /// Appends `entry`, evicting the oldest when over capacity.
    pub fn push(&mut self, entry: CacheEntry) -> Result<()> {
        if let Some(last) = self.last_index() {
            if entry.frame_index <= last {
                return Err(Error::NonMonotonicFrame {
                    last,
                    got: entry.frame_index,
                });
            }
        }
        self.entries.push_back(entry);
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// The (up to) two entries with the smallest QP; ties favour the more
    /// recent frame. Lowest QP first.
    pub fn select_refs(&self) -> Vec<&CacheEntry> {
        let mut ranked: Vec<&CacheEntry> = self.entries.iter().collect();
        ranked.sort_by(|a, b| a.qp.cmp(&b.qp).then(b.frame_index.cmp(&a.frame_index)));
        ranked.truncate(2);
        ranked
    }

    /// Total bytes held by cached features and frames.
    pub fn footprint(&self) -> usize {
        self.entries.iter().map(CacheEntry::byte_size).sum()
    }
}

/// Always yields two references: duplicates a lone reference and falls back
/// to the current frame when the window is empty.
pub fn bootstrap_refs<'a>(current: RefView<'a>, selected: &[&'a CacheEntry]) -> [RefView<'a>; 2] {
    match selected {
        [] => [current, current],
        [only] => [RefView::from(*only), RefView::from(*only)],
        [a, b, ..] => [RefView::from(*a), RefView::from(*b)],
    }
}
