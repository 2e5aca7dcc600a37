//! Page-granular file storage with an optional LRU write-back cache.
//!
//! Every access is counted twice: once as a logical access (a call into the
//! store) and once as a device access (an actual `pread`/`pwrite` on the
//! file). With the cache disabled the two coincide, which is what the
//! page-count tests rely on.

use std::fs::{File, OpenOptions};
use std::num::NonZeroUsize;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use lru::LruCache;

use crate::error::{Error, Result};

pub type PageId = u64;

pub const DEFAULT_PAGE_SIZE: usize = 4096;
pub const MIN_PAGE_SIZE: usize = 512;
pub const DEFAULT_CACHE_PAGES: usize = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoCounters {
    pub logical_reads: u64,
    pub logical_writes: u64,
    pub device_reads: u64,
    pub device_writes: u64,
}

impl IoCounters {
    pub fn device_accesses(&self) -> u64 {
        self.device_reads + self.device_writes
    }

    /// Counter deltas accumulated since `earlier` was sampled.
    pub fn since(&self, earlier: &IoCounters) -> IoCounters {
        IoCounters {
            logical_reads: self.logical_reads - earlier.logical_reads,
            logical_writes: self.logical_writes - earlier.logical_writes,
            device_reads: self.device_reads - earlier.device_reads,
            device_writes: self.device_writes - earlier.device_writes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PagerConfig {
    pub page_size: usize,
    /// Pages held in memory; 0 disables caching entirely.
    pub cache_pages: usize,
}

impl PagerConfig {
    pub fn new(page_size: usize, cache_pages: usize) -> Self {
        PagerConfig { page_size, cache_pages }
    }

    /// Cache disabled: every access reaches the device.
    pub fn uncached(page_size: usize) -> Self {
        PagerConfig { page_size, cache_pages: 0 }
    }
}

impl Default for PagerConfig {
    fn default() -> Self {
        PagerConfig { page_size: DEFAULT_PAGE_SIZE, cache_pages: DEFAULT_CACHE_PAGES }
    }
}

pub fn check_page_size(page_size: usize) -> Result<()> {
    if page_size < MIN_PAGE_SIZE || !page_size.is_power_of_two() {
        return Err(Error::PageSize(format!(
            "page size {page_size} must be a power of two >= {MIN_PAGE_SIZE}"
        )));
    }
    Ok(())
}

struct Frame {
    data: Box<[u8]>,
    dirty: bool,
}

pub struct PageStore {
    file: File,
    path: PathBuf,
    page_size: usize,
    pages: u64,
    cache: Option<LruCache<PageId, Frame>>,
    counters: IoCounters,
    scratch: Box<[u8]>,
}

impl std::fmt::Debug for PageStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PageStore")
            .field("path", &self.path)
            .field("page_size", &self.page_size)
            .field("pages", &self.pages)
            .field("cache_pages", &self.cache_capacity())
            .finish()
    }
}

impl PageStore {
    /// Opens `path`, creating an empty file when absent.
    pub fn open(path: impl AsRef<Path>, page_size: usize, cache_pages: usize) -> Result<Self> {
        check_page_size(page_size)?;
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(&path)?;
        let len = file.metadata()?.len();
        if len % page_size as u64 != 0 {
            return Err(Error::PageSize(format!(
                "{} has length {len}, not a multiple of page size {page_size}",
                path.display()
            )));
        }
        Ok(PageStore {
            file,
            path,
            page_size,
            pages: len / page_size as u64,
            cache: make_cache(cache_pages),
            counters: IoCounters::default(),
            scratch: vec![0; page_size].into_boxed_slice(),
        })
    }

    pub fn open_with(path: impl AsRef<Path>, config: PagerConfig) -> Result<Self> {
        Self::open(path, config.page_size, config.cache_pages)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn page_count(&self) -> u64 {
        self.pages
    }

    pub fn cache_capacity(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.cap().get())
    }

    pub fn counters(&self) -> IoCounters {
        self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = IoCounters::default();
    }

    /// Flushes dirty pages and replaces the cache with one of `cache_pages` pages.
    pub fn set_cache_capacity(&mut self, cache_pages: usize) -> Result<()> {
        self.flush()?;
        self.cache = make_cache(cache_pages);
        Ok(())
    }

    /// Appends `count` zeroed pages and returns the id of the first one.
    pub fn allocate(&mut self, count: u64) -> Result<PageId> {
        let first = self.pages;
        let new_len = (self.pages + count)
            .checked_mul(self.page_size as u64)
            .ok_or_else(|| Error::InvalidParams("page file size overflows u64".into()))?;
        self.file.set_len(new_len)?;
        self.pages += count;
        Ok(first)
    }

    fn check(&self, page: PageId) -> Result<()> {
        if page < self.pages {
            Ok(())
        } else {
            Err(Error::PageOutOfRange { page, pages: self.pages })
        }
    }

    fn device_read(&mut self, page: PageId, buf: &mut [u8]) -> Result<()> {
        self.counters.device_reads += 1;
        self.file.read_exact_at(buf, page * self.page_size as u64)?;
        Ok(())
    }

    fn device_write(&mut self, page: PageId, buf: &[u8]) -> Result<()> {
        self.counters.device_writes += 1;
        self.file.write_all_at(buf, page * self.page_size as u64)?;
        Ok(())
    }

    /// Inserts a frame, writing back whatever it evicts.
    fn install(&mut self, page: PageId, frame: Frame) -> Result<()> {
        let evicted = self.cache.as_mut().and_then(|c| c.push(page, frame));
        if let Some((old, f)) = evicted {
            if old != page && f.dirty {
                self.device_write(old, &f.data)?;
            }
        }
        Ok(())
    }

    /// Makes sure `page` is resident; only valid with caching enabled.
    fn load(&mut self, page: PageId) -> Result<()> {
        let hit = self.cache.as_mut().is_some_and(|c| c.get(&page).is_some());
        if !hit {
            let mut data = vec![0u8; self.page_size].into_boxed_slice();
            self.device_read(page, &mut data)?;
            self.install(page, Frame { data, dirty: false })?;
        }
        Ok(())
    }

    /// Runs `f` over the contents of `page`. One logical read.
    pub fn read<R>(&mut self, page: PageId, f: impl FnOnce(&[u8]) -> R) -> Result<R> {
        self.check(page)?;
        self.counters.logical_reads += 1;
        if self.cache.is_some() {
            self.load(page)?;
            let frame = self.cache.as_mut().and_then(|c| c.peek(&page)).expect("page resident");
            Ok(f(&frame.data))
        } else {
            let mut buf = std::mem::take(&mut self.scratch);
            let res = self.device_read(page, &mut buf);
            let out = res.map(|_| f(&buf));
            self.scratch = buf;
            out
        }
    }

    /// Copies `page` into `buf`, which must be exactly one page long.
    pub fn read_page(&mut self, page: PageId, buf: &mut [u8]) -> Result<()> {
        self.check_len(buf.len())?;
        self.read(page, |data| buf.copy_from_slice(data))
    }

    /// Replaces the whole of `page`. One logical write, no read.
    pub fn write_page(&mut self, page: PageId, buf: &[u8]) -> Result<()> {
        self.check(page)?;
        self.check_len(buf.len())?;
        self.counters.logical_writes += 1;
        match self.cache.as_mut() {
            Some(cache) => {
                if let Some(frame) = cache.get_mut(&page) {
                    frame.data.copy_from_slice(buf);
                    frame.dirty = true;
                    Ok(())
                } else {
                    self.install(page, Frame { data: buf.into(), dirty: true })
                }
            }
            None => self.device_write(page, buf),
        }
    }

    /// Read-modify-write of `page`. `f` returns whether it changed the
    /// contents; only then is a logical write counted and the page written.
    pub fn update(&mut self, page: PageId, f: impl FnOnce(&mut [u8]) -> bool) -> Result<bool> {
        self.check(page)?;
        self.counters.logical_reads += 1;
        let changed = if self.cache.is_some() {
            self.load(page)?;
            let frame = self.cache.as_mut().and_then(|c| c.peek_mut(&page)).expect("page resident");
            let changed = f(&mut frame.data);
            frame.dirty |= changed;
            changed
        } else {
            let mut buf = std::mem::take(&mut self.scratch);
            let res = self.device_read(page, &mut buf).map(|_| f(&mut buf));
            let res = match res {
                Ok(true) => self.device_write(page, &buf).map(|_| true),
                other => other,
            };
            self.scratch = buf;
            res?
        };
        if changed {
            self.counters.logical_writes += 1;
        }
        Ok(changed)
    }

    /// Writes every dirty cached page back to the file.
    pub fn flush(&mut self) -> Result<()> {
        let Some(cache) = self.cache.as_mut() else {
            return Ok(());
        };
        let mut dirty: Vec<(PageId, Box<[u8]>)> = Vec::new();
        for (id, frame) in cache.iter_mut() {
            if frame.dirty {
                frame.dirty = false;
                dirty.push((*id, frame.data.clone()));
            }
        }
        dirty.sort_by_key(|(id, _)| *id);
        for (id, data) in dirty {
            self.device_write(id, &data)?;
        }
        Ok(())
    }

    /// Flushes and asks the OS to persist the file.
    pub fn sync(&mut self) -> Result<()> {
        self.flush()?;
        self.file.sync_data()?;
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.page_size {
            Ok(())
        } else {
            Err(Error::PageSize(format!("buffer of {len} bytes for page size {}", self.page_size)))
        }
    }
}

impl Drop for PageStore {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

fn make_cache(cache_pages: usize) -> Option<LruCache<PageId, Frame>> {
    NonZeroUsize::new(cache_pages).map(LruCache::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn store(dir: &TempDir, cache: usize) -> PageStore {
        PageStore::open(dir.path().join("pages"), 4096, cache).unwrap()
    }

    #[test]
    fn new_store_is_empty() {
        let dir = TempDir::new().unwrap();
        let s = store(&dir, 0);
        assert_eq!(s.page_count(), 0);
        assert_eq!(s.counters(), IoCounters::default());
    }

    #[test]
    fn rejects_bad_page_sizes() {
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("x");
        assert!(PageStore::open(&p, 256, 0).is_err());
        assert!(PageStore::open(&p, 3000, 0).is_err());
    }

    #[test]
    fn reopen_existing_file() {
        let dir = TempDir::new().unwrap();
        {
            let mut s = store(&dir, 0);
            s.allocate(3).unwrap();
        }
        let mut s = store(&dir, 0);
        assert_eq!(s.page_count(), 3);
        assert_eq!(s.allocate(2).unwrap(), 3);
        assert_eq!(s.page_count(), 5);
        let len = std::fs::metadata(dir.path().join("pages")).unwrap().len();
        assert_eq!(len, 5 * 4096);
        // 5 pages of 4096 bytes are not a whole number of 8192-byte pages
        assert!(matches!(PageStore::open(dir.path().join("pages"), 8192, 0), Err(Error::PageSize(_))));
    }

    #[test]
    fn round_trip_and_out_of_range() {
        let dir = TempDir::new().unwrap();
        let mut s = store(&dir, 0);
        s.allocate(2).unwrap();
        let data: Vec<u8> = (0..4096).map(|i| (i % 251) as u8).collect();
        s.write_page(1, &data).unwrap();
        let mut back = vec![0; 4096];
        s.read_page(1, &mut back).unwrap();
        assert_eq!(back, data);
        assert!(matches!(s.read_page(2, &mut back), Err(Error::PageOutOfRange { page: 2, pages: 2 })));
        assert!(s.write_page(0, &data[..100]).is_err());
    }

    #[test]
    fn uncached_reads_hit_the_device_every_time() {
        let dir = TempDir::new().unwrap();
        let mut s = store(&dir, 0);
        s.allocate(4).unwrap();
        for p in 0..4 {
            s.read(p, |_| ()).unwrap();
        }
        s.read(0, |_| ()).unwrap();
        let c = s.counters();
        assert_eq!((c.logical_reads, c.device_reads), (5, 5));
    }

    #[test]
    fn cache_hit_avoids_device_read() {
        let dir = TempDir::new().unwrap();
        let mut s = PageStore::open(dir.path().join("p"), 4096, 1024).unwrap();
        s.allocate(1).unwrap();
        s.read(0, |_| ()).unwrap();
        s.read(0, |_| ()).unwrap();
        assert_eq!(s.counters().device_reads, 1);
        assert_eq!(s.counters().logical_reads, 2);
    }

    #[test]
    fn lru_working_set_stays_resident() {
        let dir = TempDir::new().unwrap();
        let mut s = PageStore::open(dir.path().join("p"), 512, 3).unwrap();
        s.allocate(4).unwrap();
        for p in [0, 1, 2] {
            s.read(p, |_| ()).unwrap();
        }
        s.reset_counters();
        for _ in 0..5 {
            for p in [0, 1, 2] {
                s.read(p, |_| ()).unwrap();
            }
        }
        assert_eq!(s.counters().device_reads, 0);
        // page 3 evicts the least recently used page (0)
        s.read(3, |_| ()).unwrap();
        s.read(2, |_| ()).unwrap();
        assert_eq!(s.counters().device_reads, 1);
        s.read(0, |_| ()).unwrap();
        assert_eq!(s.counters().device_reads, 2);
    }

    #[test]
    fn dirty_pages_written_on_eviction_and_flush() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("p");
        let mut s = PageStore::open(&path, 512, 1).unwrap();
        s.allocate(2).unwrap();
        s.write_page(0, &[7u8; 512]).unwrap();
        assert_eq!(s.counters().device_writes, 0);
        s.write_page(1, &[9u8; 512]).unwrap();
        assert_eq!(s.counters().device_writes, 1);
        s.flush().unwrap();
        assert_eq!(s.counters().device_writes, 2);
        drop(s);
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes[..512].iter().all(|&b| b == 7));
        assert!(bytes[512..].iter().all(|&b| b == 9));
    }

    #[test]
    fn update_writes_only_when_changed() {
        let dir = TempDir::new().unwrap();
        let mut s = store(&dir, 0);
        s.allocate(1).unwrap();
        assert!(!s.update(0, |_| false).unwrap());
        assert!(s.update(0, |b| {
            b[10] = 42;
            true
        })
        .unwrap());
        let c = s.counters();
        assert_eq!((c.device_reads, c.device_writes), (2, 1));
        assert_eq!((c.logical_reads, c.logical_writes), (2, 1));
        assert_eq!(s.read(0, |b| b[10]).unwrap(), 42);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn arbitrary_pages_round_trip(
                pages in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 512), 1..6),
                cache in 0usize..3,
            ) {
                let dir = TempDir::new().unwrap();
                let mut s = PageStore::open(dir.path().join("p"), 512, cache).unwrap();
                s.allocate(pages.len() as u64).unwrap();
                for (i, p) in pages.iter().enumerate() {
                    s.write_page(i as u64, p).unwrap();
                }
                let mut buf = vec![0; 512];
                for (i, p) in pages.iter().enumerate().rev() {
                    s.read_page(i as u64, &mut buf).unwrap();
                    prop_assert_eq!(&buf, p);
                }
                let c = s.counters();
                prop_assert!(c.device_reads <= c.logical_reads);
                prop_assert!(c.device_writes <= c.logical_writes);
            }
        }
    }
}
