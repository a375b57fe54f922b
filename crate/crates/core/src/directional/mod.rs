//! Learned incoming-direction distributions over `[0,1]^2`.
//!
//! At a surface vertex the square parameterizes the local hemisphere through
//! the cosine-weighted concentric map, so a square density `m` corresponds to
//! the solid-angle density `m * cos(theta) / pi`.

mod gmm;
mod grid;
mod kdtree;

pub use gmm::{stat_row, Component, Gmm, STAT_COLUMNS};
pub use grid::DirGrid;
pub use kdtree::{KdTree, Node, Rect};

use crate::field::{blend_alpha, Grid, HashTable, Key};
use crate::math::{Vec3, INV_PI};
use crate::sampling::{cosine_hemisphere_to_square, square_to_cosine_hemisphere, Frame, SquarePoint, UniformSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Grid,
    KdTree,
    Gmm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub grid_resolution: usize,
    pub kd_leaves: usize,
    pub kd_split_threshold: f64,
    pub gmm_components: usize,
    pub gmm_alpha: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            kind: ModelKind::KdTree,
            grid_resolution: 16,
            kd_leaves: 64,
            kd_split_threshold: 4.0,
            gmm_components: 4,
            gmm_alpha: 0.7,
        }
    }
}

impl ModelParams {
    pub fn with_kind(kind: ModelKind) -> Self {
        ModelParams { kind, ..Default::default() }
    }
}

/// One directional distribution; the three kinds share one contract.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Grid(DirGrid),
    KdTree(KdTree),
    Gmm(Gmm),
}

impl Model {
    pub fn new(params: &ModelParams) -> Self {
        match params.kind {
            ModelKind::Grid => Model::Grid(DirGrid::new(params.grid_resolution)),
            ModelKind::KdTree => Model::KdTree(KdTree::new(params.kd_leaves)),
            ModelKind::Gmm => Model::Gmm(Gmm::new(params.gmm_components, params.gmm_alpha)),
        }
    }

    pub fn is_trained(&self) -> bool {
        match self {
            Model::Grid(g) => g.is_trained(),
            Model::KdTree(t) => t.is_trained(),
            Model::Gmm(g) => g.is_trained(),
        }
    }

    pub fn record(&mut self, uv: SquarePoint, contribution: f64) -> bool {
        match self {
            Model::Grid(g) => g.record(uv, contribution),
            Model::KdTree(t) => t.record(uv, contribution),
            Model::Gmm(g) => g.record(uv, contribution),
        }
    }

    pub fn end_frame(&mut self, blend: f64, params: &ModelParams) {
        match self {
            Model::Grid(g) => g.end_frame(blend),
            Model::KdTree(t) => t.end_frame(blend, params.kd_split_threshold),
            Model::Gmm(g) => g.end_frame(),
        }
    }

    /// Density on the square.
    pub fn pdf(&self, uv: SquarePoint) -> f64 {
        match self {
            Model::Grid(g) => g.pdf(uv),
            Model::KdTree(t) => t.pdf(uv),
            Model::Gmm(g) => g.pdf(uv),
        }
    }

    pub fn sample<S: UniformSource + ?Sized>(&self, rng: &mut S) -> (SquarePoint, f64) {
        match self {
            Model::Grid(g) => g.sample(rng.next_square()),
            Model::KdTree(t) => t.sample(rng.next_square()),
            Model::Gmm(g) => g.sample(rng),
        }
    }

    /// Solid-angle density of direction `wi` around normal frame `frame`.
    pub fn pdf_direction(&self, frame: &Frame, wi: Vec3) -> f64 {
        let local = frame.to_local(wi);
        if local.z <= 0.0 {
            return 0.0;
        }
        self.pdf(cosine_hemisphere_to_square(local)) * local.z * INV_PI
    }

    /// Direction and its solid-angle density.
    pub fn sample_direction<S: UniformSource + ?Sized>(&self, frame: &Frame, rng: &mut S) -> (Vec3, f64) {
        let (uv, pdf) = self.sample(rng);
        let local = square_to_cosine_hemisphere(uv);
        (frame.to_world(local), pdf * local.z.max(0.0) * INV_PI)
    }

    /// Records a direction in world space; directions below the frame's
    /// hemisphere are ignored.
    pub fn record_direction(&mut self, frame: &Frame, wi: Vec3, contribution: f64) -> bool {
        let local = frame.to_local(wi);
        if local.z <= 0.0 {
            return false;
        }
        self.record(cosine_hemisphere_to_square(local), contribution)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ModelCell {
    pub model: Option<Model>,
    pub c_old: f64,
    pub c_new: f64,
}

/// Directional models hashed by (position, outgoing direction) at one level
/// of the field hierarchy.
#[derive(Clone, Debug)]
pub struct ModelStore {
    params: ModelParams,
    grid: Grid,
    level: u8,
    t_max: f64,
    prototype: Model,
    table: HashTable<ModelCell>,
    frame: u32,
}

impl ModelStore {
    pub fn new(params: ModelParams, grid: Grid, level: u8, t_max: f64, capacity: usize) -> Self {
        ModelStore {
            params,
            grid,
            level: level.min(grid.max_level),
            t_max,
            prototype: Model::new(&params),
            table: HashTable::new(capacity, 16),
            frame: 0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Cell of `(position, wo)`; without `wo` the direction-free spatial
    /// cell, used where the integrand does not depend on `wo`.
    pub fn key(&self, position: Vec3, wo: Option<Vec3>) -> Key {
        match wo {
            Some(wo) => self.grid.key(position, wo, self.level),
            None => self.grid.spatial_key(position, self.level),
        }
    }

    /// Trained model for the cell, if any.
    pub fn get(&self, position: Vec3, wo: Option<Vec3>) -> Option<&Model> {
        self.table.get(&self.key(position, wo)).and_then(|c| c.model.as_ref()).filter(|m| m.is_trained())
    }

    /// Trained model for the cell with its blended record count.
    pub fn get_counted(&self, position: Vec3, wo: Option<Vec3>) -> Option<(&Model, f64)> {
        let c = self.table.get(&self.key(position, wo))?;
        c.model.as_ref().filter(|m| m.is_trained()).map(|m| (m, c.c_old))
    }

    pub fn record(&mut self, position: Vec3, wo: Option<Vec3>, frame: &Frame, wi: Vec3, contribution: f64) {
        let key = self.key(position, wo);
        let cell = self.table.entry(&key, self.frame);
        let model = cell.model.get_or_insert_with(|| self.prototype.clone());
        if model.record_direction(frame, wi, contribution) {
            cell.c_new += 1.0;
        }
    }

    pub fn end_frame(&mut self) {
        let params = self.params;
        let t_max = self.t_max;
        self.table.drain_touched(|_, cell| {
            if cell.c_new == 0.0 {
                return;
            }
            let blend = blend_alpha(cell.c_old, cell.c_new, t_max, true);
            if let Some(m) = &mut cell.model {
                m.end_frame(blend, &params);
            }
            cell.c_old = (cell.c_old + cell.c_new).min((t_max * t_max - t_max) * cell.c_new);
            cell.c_new = 0.0;
        });
        self.frame += 1;
    }

    pub fn models(&self) -> impl Iterator<Item = (&Key, &Model)> {
        self.table.iter().filter_map(|(k, c)| c.model.as_ref().map(|m| (k, m)))
    }

    /// `(key, model, c_old)` of every cell holding a model.
    pub fn entries(&self) -> impl Iterator<Item = (&Key, &Model, f64)> {
        self.table.iter().filter_map(|(k, c)| c.model.as_ref().map(|m| (k, m, c.c_old)))
    }

    /// Inserts a model with a given record count; used to restore snapshots.
    pub fn restore(&mut self, key: &Key, model: Model, c_old: f64) {
        let cell = self.table.entry(key, self.frame);
        cell.model = Some(model);
        cell.c_old = c_old;
        cell.c_new = 0.0;
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}
