//! Binary dumps of field stores and directional models. Byte layouts are
//! documented in `docs/formats.md`; all integers and floats are
//! little-endian.

use pstf_core::directional::{Component, DirGrid, Gmm, KdTree, Model, ModelStore, Node, STAT_COLUMNS};
use pstf_core::field::{FieldKind, FieldStore, Key};
use pstf_core::math::Rgb;

pub const FIELD_MAGIC: &[u8; 8] = b"PSTFFLD\0";
pub const MODEL_MAGIC: &[u8; 8] = b"PSTFMDL\0";
pub const VERSION: u32 = 1;
pub const FIELD_RECORD_BYTES: usize = 32;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SnapshotError {
    #[error("not a {0} snapshot")]
    Magic(&'static str),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("truncated snapshot")]
    Truncated,
    #[error("invalid record {index}: {reason}")]
    Record { index: u64, reason: &'static str },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

fn kind_code(k: FieldKind) -> u8 {
    match k {
        FieldKind::Lo => 0,
        FieldKind::LoMinusE => 1,
        FieldKind::Li => 2,
        FieldKind::FLi => 3,
    }
}

fn kind_from(c: u8) -> Option<FieldKind> {
    Some(match c {
        0 => FieldKind::Lo,
        1 => FieldKind::LoMinusE,
        2 => FieldKind::Li,
        3 => FieldKind::FLi,
        _ => return None,
    })
}

fn put_key(out: &mut Vec<u8>, k: &Key) {
    out.push(k.level);
    out.extend_from_slice(&k.dir);
    out.push(0);
    for c in k.cell {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

/// Header, then one 32-byte record per live cell in key order.
pub fn write_field(store: &FieldStore) -> Vec<u8> {
    let mut cells: Vec<(Key, Rgb, f64)> = store.cells().collect();
    cells.sort_by_key(|c| c.0);
    let mut out = Vec::with_capacity(24 + cells.len() * FIELD_RECORD_BYTES);
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&[kind_code(store.kind()), 0, 0, 0]);
    out.extend_from_slice(&(cells.len() as u64).to_le_bytes());
    for (k, v, c_old) in &cells {
        put_key(&mut out, k);
        for x in v.channels() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out.extend_from_slice(&(*c_old as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or(SnapshotError::Truncated)?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, SnapshotError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f64, SnapshotError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }
    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn key(&mut self) -> Result<Key, SnapshotError> {
        let level = self.u8()?;
        let dir = [self.u8()?, self.u8()?];
        self.u8()?;
        Ok(Key { level, dir, cell: [self.i32()?, self.i32()?, self.i32()?] })
    }
    fn header(&mut self, magic: &[u8; 8], what: &'static str) -> Result<(), SnapshotError> {
        if self.take(8).map_err(|_| SnapshotError::Magic(what))? != magic {
            return Err(SnapshotError::Magic(what));
        }
        match self.u32()? {
            VERSION => Ok(()),
            v => Err(SnapshotError::Version(v)),
        }
    }
    fn finish(&self) -> Result<(), SnapshotError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(SnapshotError::Trailing(n)),
        }
    }
}

pub struct FieldSnapshot {
    pub kind: FieldKind,
    pub cells: Vec<(Key, Rgb, f64)>,
}

pub fn read_field(bytes: &[u8]) -> Result<FieldSnapshot, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(FIELD_MAGIC, "field")?;
    let kind = kind_from(r.u8()?).ok_or(SnapshotError::Record { index: 0, reason: "unknown field kind" })?;
    r.take(3)?;
    let n = r.u64()?;
    if (bytes.len() as u64).saturating_sub(24) / (FIELD_RECORD_BYTES as u64) < n {
        return Err(SnapshotError::Truncated);
    }
    let mut cells = Vec::with_capacity(n as usize);
    for index in 0..n {
        let key = r.key()?;
        let v = Rgb::new(r.f32()?, r.f32()?, r.f32()?);
        let c_old = r.f32()?;
        if !v.is_finite() || !c_old.is_finite() || c_old < 0.0 {
            return Err(SnapshotError::Record { index, reason: "value not finite or count negative" });
        }
        cells.push((key, v, c_old));
    }
    r.finish()?;
    Ok(FieldSnapshot { kind, cells })
}

/// Restores every cell of a snapshot into `store`.
pub fn restore_field(store: &mut FieldStore, snapshot: &FieldSnapshot) {
    for (k, v, c) in &snapshot.cells {
        store.restore_cell(k, *v, *c);
    }
}

const GRID: u8 = 0;
const KDTREE: u8 = 1;
const GMM: u8 = 2;

/// Header, then one variable-length record per model in key order.
pub fn write_models(store: &ModelStore) -> Vec<u8> {
    let mut entries: Vec<(Key, &Model, f64)> = store.entries().map(|(k, m, c)| (*k, m, c)).collect();
    entries.sort_by_key(|e| e.0);
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (k, m, c_old) in entries {
        put_key(&mut out, &k);
        out.extend_from_slice(&c_old.to_le_bytes());
        match m {
            Model::Grid(g) => {
                out.extend_from_slice(&[GRID, g.is_trained() as u8, 0, 0]);
                out.extend_from_slice(&(g.resolution() as u32).to_le_bytes());
                if g.is_trained() {
                    for p in g.probabilities() {
                        out.extend_from_slice(&p.to_le_bytes());
                    }
                }
            }
            Model::KdTree(t) => {
                out.extend_from_slice(&[KDTREE, t.is_trained() as u8, 0, 0]);
                out.extend_from_slice(&(t.nodes().len() as u32).to_le_bytes());
                for n in t.nodes() {
                    let (tag, axis, right, a, b) = match *n {
                        Node::Leaf { prob, accum } => (0u8, 0u8, 0u32, prob, accum),
                        Node::Inner { axis, split, right } => (1, axis, right, split, 0.0),
                    };
                    out.extend_from_slice(&[tag, axis, 0, 0]);
                    out.extend_from_slice(&right.to_le_bytes());
                    out.extend_from_slice(&a.to_le_bytes());
                    out.extend_from_slice(&b.to_le_bytes());
                }
            }
            Model::Gmm(g) => {
                out.extend_from_slice(&[GMM, g.is_trained() as u8, 0, 0]);
                out.extend_from_slice(&(g.components().len() as u32).to_le_bytes());
                out.extend_from_slice(&g.step().to_le_bytes());
                out.extend_from_slice(&g.alpha().to_le_bytes());
                for c in g.components() {
                    for x in [c.weight, c.mean[0], c.mean[1], c.cov[0], c.cov[1], c.cov[2]] {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                for row in g.stats() {
                    for x in row {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
    }
    out
}

pub fn read_models(bytes: &[u8]) -> Result<Vec<(Key, Model, f64)>, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(MODEL_MAGIC, "model")?;
    let n = r.u64()?;
    let mut out = Vec::new();
    for index in 0..n {
        let bad = |reason| SnapshotError::Record { index, reason };
        let key = r.key()?;
        let c_old = r.f64()?;
        let tag = r.take(4)?;
        let (kind, trained) = (tag[0], tag[1] != 0);
        let count = r.u32()? as usize;
        let model = match kind {
            GRID => {
                let probs = if trained {
                    let cells = count.checked_mul(count).ok_or(bad("grid too large"))?;
                    if cells > (bytes.len() - r.pos) / 8 {
                        return Err(SnapshotError::Truncated);
                    }
                    (0..cells).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?
                } else {
                    Vec::new()
                };
                Model::Grid(DirGrid::from_probabilities(count, probs).ok_or(bad("grid probabilities"))?)
            }
            KDTREE => {
                if count > (bytes.len() - r.pos) / 24 {
                    return Err(SnapshotError::Truncated);
                }
                let mut nodes = Vec::with_capacity(count);
                for _ in 0..count {
                    let h = r.take(4)?;
                    let (tag, axis) = (h[0], h[1]);
                    let right = r.u32()?;
                    let (a, b) = (r.f64()?, r.f64()?);
                    nodes.push(match tag {
                        0 => Node::Leaf { prob: a, accum: b },
                        1 => Node::Inner { axis, split: a, right },
                        _ => return Err(bad("unknown node tag")),
                    });
                }
                Model::KdTree(KdTree::from_nodes(nodes, trained).ok_or(bad("tree topology"))?)
            }
            GMM => {
                let step = r.u64()?;
                let alpha = r.f64()?;
                if count > (bytes.len() - r.pos) / (8 * (6 + STAT_COLUMNS)) {
                    return Err(SnapshotError::Truncated);
                }
                let mut comps = Vec::with_capacity(count);
                for _ in 0..count {
                    let v: Vec<f64> = (0..6).map(|_| r.f64()).collect::<Result<_, _>>()?;
                    let c = Component { weight: v[0], mean: [v[1], v[2]], cov: [v[3], v[4], v[5]] };
                    if v.iter().any(|x| !x.is_finite()) || c.cov[0] <= 0.0 || c.cov[0] * c.cov[2] <= c.cov[1] * c.cov[1]
                    {
                        return Err(bad("component not finite or covariance not positive definite"));
                    }
                    comps.push(c);
                }
                let mut stats = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut row = [0.0; STAT_COLUMNS];
                    for x in &mut row {
                        *x = r.f64()?;
                    }
                    stats.push(row);
                }
                Model::Gmm(Gmm::restore(comps, stats, step, alpha, trained))
            }
            _ => return Err(bad("unknown model kind")),
        };
        out.push((key, model, c_old));
    }
    r.finish()?;
    Ok(out)
}

pub fn restore_models(store: &mut ModelStore, models: Vec<(Key, Model, f64)>) {
    for (k, m, c) in models {
        store.restore(&k, m, c);
    }
}
