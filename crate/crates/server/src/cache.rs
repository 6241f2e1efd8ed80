use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::SystemTime;

use indexmap::IndexMap;
use stlut_core::error::Result;
use stlut_core::{Error, LutKind, LutSet, Model, WeightStore};

/// Small LRU keyed by path, invalidated when the file's mtime changes.
struct Lru<T> {
    capacity: usize,
    entries: IndexMap<PathBuf, (Option<SystemTime>, Arc<T>)>,
}

impl<T> Lru<T> {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: IndexMap::new(),
        }
    }

    fn get(&mut self, path: &Path, stamp: Option<SystemTime>) -> Option<Arc<T>> {
        let i = self.entries.get_index_of(path)?;
        let (_, (s, v)) = self.entries.get_index(i).expect("index");
        if *s != stamp || stamp.is_none() {
            self.entries.shift_remove_index(i);
            return None;
        }
        let v = Arc::clone(v);
        let last = self.entries.len() - 1;
        self.entries.move_index(i, last);
        Some(v)
    }

    fn put(&mut self, path: PathBuf, stamp: Option<SystemTime>, value: Arc<T>) {
        self.entries.shift_remove(&path);
        while self.entries.len() >= self.capacity {
            self.entries.shift_remove_index(0);
        }
        self.entries.insert(path, (stamp, value));
    }
}

fn mtime(path: &Path) -> Option<SystemTime> {
    std::fs::metadata(path).and_then(|m| m.modified()).ok()
}

/// Keeps recently used models and table sets in memory. Table sets are
/// large (hundreds of MB at default intervals), so only a couple are kept.
pub struct ModelCache {
    models: Mutex<Lru<Model>>,
    luts: Mutex<Lru<LutSet>>,
}

impl Default for ModelCache {
    fn default() -> Self {
        Self::new(8, 2)
    }
}

impl ModelCache {
    pub fn new(models: usize, lut_sets: usize) -> Self {
        Self {
            models: Mutex::new(Lru::new(models.max(1))),
            luts: Mutex::new(Lru::new(lut_sets.max(1))),
        }
    }

    pub fn model(&self, path: &Path) -> Result<Arc<Model>> {
        let stamp = mtime(path);
        if let Some(m) = self.models.lock().expect("cache lock").get(path, stamp) {
            return Ok(m);
        }
        let model = Arc::new(Model::from_store(&WeightStore::load(path)?)?);
        self.models
            .lock()
            .expect("cache lock")
            .put(path.to_path_buf(), stamp, Arc::clone(&model));
        Ok(model)
    }

    pub fn luts(&self, dir: &Path) -> Result<Arc<LutSet>> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "LUT directory not found"),
            ));
        }
        let stamp = LutKind::ALL
            .iter()
            .map(|k| mtime(&dir.join(k.file_name())))
            .collect::<Option<Vec<_>>>()
            .and_then(|v| v.into_iter().max());
        if let Some(l) = self.luts.lock().expect("cache lock").get(dir, stamp) {
            return Ok(l);
        }
        // release a stale copy before loading the new one
        self.luts.lock().expect("cache lock").entries.shift_remove(dir);
        let set = Arc::new(LutSet::load_dir(dir)?);
        self.luts
            .lock()
            .expect("cache lock")
            .put(dir.to_path_buf(), stamp, Arc::clone(&set));
        Ok(set)
    }
}
