//! Progressive spatio-temporal approximation of radiance fields on a
//! hierarchical spatio-directional hash grid.

mod key;
mod store;
mod table;

pub use key::{Grid, Key, NO_DIRECTION};
pub use store::{
    blend_alpha, compute_update_value, FieldCell, FieldConfig, FieldKind, FieldStats, FieldStore, Lookup, Technique,
    TechniqueMask,
};
pub use table::{default_hasher, HashTable, KeyHasher};
