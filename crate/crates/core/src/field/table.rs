//! Open-addressed hash table with a bounded probe window and age-based
//! eviction.

use alloc::vec::Vec;

use super::key::Key;

/// Computes `(slot hash, checksum)` for a key.
pub type KeyHasher = fn(&Key) -> (u64, u32);

pub fn default_hasher(key: &Key) -> (u64, u32) {
    (key.hash(), key.checksum())
}

#[derive(Clone, Debug)]
struct Slot<T> {
    key: Key,
    checksum: u32,
    last_touched: u32,
    occupied: bool,
    dirty: bool,
    value: T,
}

#[derive(Clone, Debug)]
pub struct HashTable<T> {
    slots: Vec<Slot<T>>,
    mask: usize,
    window: usize,
    hasher: KeyHasher,
    len: usize,
    evictions: u64,
    dirty: Vec<usize>,
}

impl<T: Default + Clone> HashTable<T> {
    /// `capacity` is rounded up to a power of two.
    pub fn new(capacity: usize, window: usize) -> Self {
        Self::with_hasher(capacity, window, default_hasher)
    }

    pub fn with_hasher(capacity: usize, window: usize, hasher: KeyHasher) -> Self {
        let cap = capacity.max(1).next_power_of_two();
        let empty = Slot {
            key: Key::default(),
            checksum: 0,
            last_touched: 0,
            occupied: false,
            dirty: false,
            value: T::default(),
        };
        HashTable {
            slots: alloc::vec![empty; cap],
            mask: cap - 1,
            window: window.clamp(1, cap),
            hasher,
            len: 0,
            evictions: 0,
            dirty: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    fn find(&self, key: &Key) -> Option<usize> {
        let (h, cs) = (self.hasher)(key);
        (0..self.window).map(|i| (h as usize).wrapping_add(i) & self.mask).find(|&idx| {
            let s = &self.slots[idx];
            s.occupied && s.checksum == cs && s.key == *key
        })
    }

    pub fn get(&self, key: &Key) -> Option<&T> {
        self.find(key).map(|i| &self.slots[i].value)
    }

    pub fn get_mut(&mut self, key: &Key) -> Option<&mut T> {
        self.find(key).map(move |i| &mut self.slots[i].value)
    }

    /// Returns the entry for `key`, inserting a default value if needed.
    /// When the probe window is full the least recently touched entry in it
    /// is evicted.
    pub fn entry(&mut self, key: &Key, frame: u32) -> &mut T {
        let (h, cs) = (self.hasher)(key);
        let mut free = None;
        let mut oldest = (u32::MAX, 0usize);
        let mut found = None;
        for i in 0..self.window {
            let idx = (h as usize).wrapping_add(i) & self.mask;
            let s = &self.slots[idx];
            if s.occupied {
                if s.checksum == cs && s.key == *key {
                    found = Some(idx);
                    break;
                }
                if s.last_touched < oldest.0 {
                    oldest = (s.last_touched, idx);
                }
            } else if free.is_none() {
                free = Some(idx);
            }
        }
        let idx = match (found, free) {
            (Some(i), _) => i,
            (None, Some(i)) => {
                self.len += 1;
                self.claim(i, key, cs);
                i
            }
            (None, None) => {
                self.evictions += 1;
                self.claim(oldest.1, key, cs);
                oldest.1
            }
        };
        let s = &mut self.slots[idx];
        s.last_touched = frame;
        if !s.dirty {
            s.dirty = true;
            self.dirty.push(idx);
        }
        &mut s.value
    }

    /// Visits every entry handed out by [`HashTable::entry`] since the last
    /// call, in first-touch order, and clears the touched set.
    pub fn drain_touched(&mut self, mut f: impl FnMut(&Key, &mut T)) {
        for idx in core::mem::take(&mut self.dirty) {
            let s = &mut self.slots[idx];
            s.dirty = false;
            if s.occupied {
                f(&s.key, &mut s.value);
            }
        }
    }

    fn claim(&mut self, idx: usize, key: &Key, checksum: u32) {
        let s = &mut self.slots[idx];
        s.key = *key;
        s.checksum = checksum;
        s.occupied = true;
        s.value = T::default();
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &T)> {
        self.slots.iter().filter(|s| s.occupied).map(|s| (&s.key, &s.value))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&Key, &mut T)> {
        self.slots.iter_mut().filter(|s| s.occupied).map(|s| (&s.key, &mut s.value))
    }

    pub fn clear(&mut self) {
        self.dirty.clear();
        for s in &mut self.slots {
            s.occupied = false;
            s.dirty = false;
            s.value = T::default();
        }
        self.len = 0;
    }
}
