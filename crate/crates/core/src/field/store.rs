//! Hashed finite-element approximation of one radiance field.

use alloc::collections::BTreeMap;

use super::key::{Grid, Key};
use super::table::{HashTable, KeyHasher};
use crate::math::{Rgb, Vec3};

/// Which field a store approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    /// Outgoing radiance, keyed by outgoing direction.
    Lo,
    /// Outgoing radiance minus emission, keyed by outgoing direction.
    LoMinusE,
    /// Incoming radiance, keyed by incoming direction.
    Li,
    /// BSDF-weighted incoming radiance, keyed by incoming direction.
    FLi,
}

impl FieldKind {
    pub fn keyed_by_incoming(self) -> bool {
        matches!(self, FieldKind::Li | FieldKind::FLi)
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Lo => "Lo",
            FieldKind::LoMinusE => "LoMinusE",
            FieldKind::Li => "Li",
            FieldKind::FLi => "fLi",
        }
    }
}

/// Source of a contribution to a field update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Technique {
    /// Emission at the vertex itself.
    Emission,
    NextEvent,
    Bsdf,
    Guided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TechniqueMask(u8);

impl TechniqueMask {
    pub const ALL: TechniqueMask = TechniqueMask(0b1111);
    pub const NONE: TechniqueMask = TechniqueMask(0);

    fn bit(t: Technique) -> u8 {
        1 << t as u8
    }

    pub fn only(t: Technique) -> Self {
        TechniqueMask(Self::bit(t))
    }

    pub fn with(self, t: Technique) -> Self {
        TechniqueMask(self.0 | Self::bit(t))
    }

    pub fn without(self, t: Technique) -> Self {
        TechniqueMask(self.0 & !Self::bit(t))
    }

    pub fn contains(self, t: Technique) -> bool {
        self.0 & Self::bit(t) != 0
    }
}

/// Update value for the previous vertex from the next one: `(le_next +
/// l_next) * f * ratio` (`f` ignored for [`FieldKind::Li`]).
///
/// `l_next` is the cached radiance leaving the next vertex excluding its
/// emission; `le_next` is that emission already multiplied by the MIS weight
/// of the continuation. `ratio` is `w / p` in projected solid angle,
/// including any Russian-roulette compensation.
pub fn compute_update_value(kind: FieldKind, l_next: Rgb, le_next: Rgb, f: Rgb, ratio: f64) -> Rgb {
    let l = le_next + l_next;
    match kind {
        FieldKind::Li => l * ratio,
        FieldKind::Lo | FieldKind::LoMinusE | FieldKind::FLi => l * f * ratio,
    }
}

/// Temporal blend weight `max(sqrt(c_new / (c_old + c_new)), 1 / t_max)`.
/// With `sqrt_blend` off the square root is dropped, which turns the blend
/// into a count-weighted running mean.
pub fn blend_alpha(c_old: f64, c_new: f64, t_max: f64, sqrt_blend: bool) -> f64 {
    let r = c_new / (c_old + c_new);
    let a = if sqrt_blend { libm::sqrt(r) } else { r };
    a.max(1.0 / t_max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldCell {
    pub value: [f32; 3],
    pub c_old: f32,
    pub live: bool,
    pub accum: [f64; 3],
    pub c_new: f64,
}

impl FieldCell {
    pub fn value(&self) -> Rgb {
        Rgb::new(self.value[0] as f64, self.value[1] as f64, self.value[2] as f64)
    }

    fn touched(&self) -> bool {
        self.c_new != 0.0 || self.accum != [0.0; 3]
    }

    fn reset_frame(&mut self) {
        self.accum = [0.0; 3];
        self.c_new = 0.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig {
    pub grid: Grid,
    pub capacity: usize,
    pub probe_window: usize,
    pub t_max: f64,
    pub sqrt_blend: bool,
}

impl FieldConfig {
    pub fn new(grid: Grid) -> Self {
        FieldConfig { grid, capacity: 1 << 20, probe_window: 16, t_max: 64.0, sqrt_blend: true }
    }
}

/// Result of a field query.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Lookup {
    pub value: Rgb,
    pub level: u8,
    /// False on a miss at every level; `value` is then zero.
    pub valid: bool,
    /// The value came from a coarser level than requested.
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FieldStats {
    pub rejected: u64,
    pub internal_errors: u64,
    pub evictions: u64,
    pub cells: usize,
}

#[derive(Clone, Debug)]
pub struct FieldStore {
    kind: FieldKind,
    config: FieldConfig,
    mask: TechniqueMask,
    table: HashTable<FieldCell>,
    frame: u32,
    rejected: u64,
    internal_errors: u64,
}

impl FieldStore {
    pub fn new(kind: FieldKind, config: FieldConfig, mask: TechniqueMask) -> Self {
        let table = HashTable::new(config.capacity, config.probe_window);
        FieldStore { kind, config, mask, table, frame: 0, rejected: 0, internal_errors: 0 }
    }

    pub fn with_hasher(kind: FieldKind, config: FieldConfig, mask: TechniqueMask, hasher: KeyHasher) -> Self {
        let table = HashTable::with_hasher(config.capacity, config.probe_window, hasher);
        FieldStore { kind, config, mask, table, frame: 0, rejected: 0, internal_errors: 0 }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn mask(&self) -> TechniqueMask {
        self.mask
    }

    pub fn grid(&self) -> &Grid {
        &self.config.grid
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn stats(&self) -> FieldStats {
        FieldStats {
            rejected: self.rejected,
            internal_errors: self.internal_errors,
            evictions: self.table.evictions(),
            cells: self.table.len(),
        }
    }

    pub fn key_for(&self, position: Vec3, direction: Vec3, level: u8) -> Key {
        self.config.grid.key(position, direction, level)
    }

    pub fn select_level(&self, footprint: f64) -> u8 {
        self.config.grid.select_level(footprint)
    }

    pub fn increment_counter(&mut self, key: &Key, w: f64) {
        let w = if w.is_finite() && w > 0.0 { w } else { 0.0 };
        self.table.entry(key, self.frame).c_new += w;
    }

    /// Adds `value * w` to the cell's frame accumulator. Non-finite input is
    /// rejected and counted.
    pub fn accumulate(&mut self, key: &Key, value: Rgb, w: f64) -> bool {
        let v = value * w;
        if !v.is_finite() || !(w >= 0.0) {
            self.rejected += 1;
            return false;
        }
        let cell = self.table.entry(key, self.frame);
        cell.accum[0] += v.r;
        cell.accum[1] += v.g;
        cell.accum[2] += v.b;
        true
    }

    fn masked_sum(&mut self, parts: &[(Technique, Rgb)]) -> Option<Rgb> {
        let mut sum = Rgb::BLACK;
        for &(t, v) in parts {
            if self.mask.contains(t) {
                sum += v;
            }
        }
        if sum.is_finite() {
            Some(sum)
        } else {
            self.rejected += 1;
            None
        }
    }

    /// Records one path vertex at `(position, wo)` on every level. The
    /// counter is always incremented; only parts whose technique is in the
    /// store's mask are accumulated.
    pub fn record_outgoing(&mut self, position: Vec3, wo: Vec3, parts: &[(Technique, Rgb)]) {
        debug_assert!(!self.kind.keyed_by_incoming());
        let sum = self.masked_sum(parts);
        for level in 0..=self.config.grid.max_level {
            let key = self.key_for(position, wo, level);
            let cell = self.table.entry(&key, self.frame);
            cell.c_new += 1.0;
            if let Some(s) = sum {
                cell.accum[0] += s.r;
                cell.accum[1] += s.g;
                cell.accum[2] += s.b;
            }
        }
    }

    /// Records one path vertex for an incoming-direction field. The counter
    /// lives on the direction-free spatial cell, so each directional cell
    /// converges to the integral of the field over that cell.
    pub fn record_incoming(&mut self, position: Vec3, parts: &[(Technique, Vec3, Rgb)]) {
        debug_assert!(self.kind.keyed_by_incoming());
        for level in 0..=self.config.grid.max_level {
            let spatial = self.config.grid.spatial_key(position, level);
            self.table.entry(&spatial, self.frame).c_new += 1.0;
        }
        for &(t, wi, v) in parts {
            if !self.mask.contains(t) {
                continue;
            }
            if !v.is_finite() {
                self.rejected += 1;
                continue;
            }
            for level in 0..=self.config.grid.max_level {
                let key = self.key_for(position, wi, level);
                let cell = self.table.entry(&key, self.frame);
                cell.accum[0] += v.r;
                cell.accum[1] += v.g;
                cell.accum[2] += v.b;
            }
        }
    }

    pub fn cell(&self, key: &Key) -> Option<&FieldCell> {
        self.table.get(key)
    }

    /// Reads the pre-frame value at the footprint's level, falling back to
    /// coarser levels on a miss.
    pub fn query(&self, position: Vec3, direction: Vec3, footprint: f64) -> Lookup {
        let start = self.select_level(footprint);
        for level in start..=self.config.grid.max_level {
            let key = self.key_for(position, direction, level);
            if let Some(c) = self.table.get(&key) {
                if c.live {
                    return Lookup { value: c.value(), level, valid: true, fallback: level != start };
                }
            }
        }
        Lookup { level: start, ..Lookup::default() }
    }

    /// Folds the frame's accumulators into the cell values and advances the
    /// frame counter.
    pub fn end_frame(&mut self) {
        let t_max = self.config.t_max;
        let sqrt_blend = self.config.sqrt_blend;
        if self.kind.keyed_by_incoming() {
            // Directional cells share the spatial cell's counters, so a cell
            // created late blends as if it had held zero all along.
            let mut counts = BTreeMap::new();
            for (k, c) in self.table.iter() {
                if !k.has_direction() && c.c_new > 0.0 {
                    counts.insert(*k, (c.c_new, c.c_old, c.live));
                }
            }
            let mut internal = 0;
            for (k, c) in self.table.iter_mut() {
                if !k.has_direction() {
                    if c.c_new > 0.0 {
                        c.c_old = (c.c_old as f64 + c.c_new) as f32;
                        c.live = true;
                    }
                    c.reset_frame();
                    continue;
                }
                match counts.get(&k.spatial()) {
                    Some(&(n, c_old, live)) => {
                        c.c_new = n;
                        c.c_old = c_old;
                        c.live = live;
                        blend(c, t_max, sqrt_blend);
                    }
                    None => {
                        if c.touched() {
                            internal += 1;
                        }
                        c.reset_frame();
                    }
                }
            }
            self.internal_errors += internal;
            self.table.drain_touched(|_, _| {});
        } else {
            let mut internal = 0;
            self.table.drain_touched(|_, c| {
                if !c.touched() {
                    return;
                }
                if c.c_new > 0.0 {
                    blend(c, t_max, sqrt_blend);
                } else {
                    internal += 1;
                    c.reset_frame();
                }
            });
            self.internal_errors += internal;
        }
        self.frame += 1;
    }

    /// Zeroes `c_old` of every cell whose spatial centre lies inside the box
    /// (every cell when `region` is `None`); optionally drops values too.
    pub fn invalidate(&mut self, region: Option<(Vec3, Vec3)>, clear_values: bool) {
        let grid = self.config.grid;
        for (k, c) in self.table.iter_mut() {
            let inside = match region {
                None => true,
                Some((lo, hi)) => {
                    let p = grid.cell_center(k);
                    (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
                }
            };
            if inside {
                c.c_old = 0.0;
                if clear_values {
                    c.value = [0.0; 3];
                    c.live = false;
                }
            }
        }
    }

    /// `(key, value, c_old)` of every live cell.
    pub fn cells(&self) -> impl Iterator<Item = (Key, Rgb, f64)> + '_ {
        self.table.iter().filter(|(_, c)| c.live).map(|(k, c)| (*k, c.value(), c.c_old as f64))
    }

    /// Inserts a cell with a given state; used to restore snapshots.
    pub fn restore_cell(&mut self, key: &Key, value: Rgb, c_old: f64) {
        let c = self.table.entry(key, self.frame);
        c.value = [value.r as f32, value.g as f32, value.b as f32];
        c.c_old = c_old as f32;
        c.live = true;
    }
}

fn blend(c: &mut FieldCell, t_max: f64, sqrt_blend: bool) {
    let c_old = c.c_old as f64;
    let candidate = [c.accum[0] / c.c_new, c.accum[1] / c.c_new, c.accum[2] / c.c_new];
    let alpha = if c.live { blend_alpha(c_old, c.c_new, t_max, sqrt_blend) } else { 1.0 };
    for (v, cand) in c.value.iter_mut().zip(candidate) {
        *v = ((1.0 - alpha) * *v as f64 + alpha * cand) as f32;
    }
    let mut total = c_old + c.c_new;
    if t_max.is_finite() {
        total = total.min((t_max * t_max - t_max) * c.c_new);
    }
    c.c_old = total as f32;
    c.live = true;
    c.reset_frame();
}
