//! Quantization of (position, direction, level) into hash keys.

use crate::math::Vec3;
use crate::sampling::sphere_to_square;

/// Direction-cell value marking a key that ignores direction.
pub const NO_DIRECTION: u8 = u8::MAX;

/// One finite element of the spatio-directional hierarchy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    pub level: u8,
    pub dir: [u8; 2],
    pub cell: [i32; 3],
}

impl Key {
    pub fn has_direction(&self) -> bool {
        self.dir[0] != NO_DIRECTION
    }

    /// Same spatial cell with the direction dropped.
    pub fn spatial(&self) -> Key {
        Key { dir: [NO_DIRECTION; 2], ..*self }
    }

    /// 64-bit slot hash.
    pub fn hash(&self) -> u64 {
        let a = (self.cell[0] as u32 as u64) | ((self.cell[1] as u32 as u64) << 32);
        let b = (self.cell[2] as u32 as u64)
            | ((self.level as u64) << 32)
            | ((self.dir[0] as u64) << 40)
            | ((self.dir[1] as u64) << 48);
        mix64(a ^ mix64(b ^ 0x9e37_79b9_7f4a_7c15))
    }

    /// Independent 32-bit verification hash.
    pub fn checksum(&self) -> u32 {
        let mut h: u32 = 0x811c_9dc5;
        let mut feed = |x: u32| {
            for byte in x.to_le_bytes() {
                h ^= byte as u32;
                h = h.wrapping_mul(0x0100_0193);
            }
        };
        feed(self.cell[0] as u32);
        feed(self.cell[1] as u32);
        feed(self.cell[2] as u32);
        feed(self.level as u32 | (self.dir[0] as u32) << 8 | (self.dir[1] as u32) << 16);
        h
    }
}

fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Cell sizes and directional resolutions of the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub base_cell_size: f64,
    pub max_level: u8,
    /// Directional cells per square axis at level 0.
    pub base_dir_resolution: u32,
    /// Footprint multiplier used by [`Grid::select_level`].
    pub footprint_scale: f64,
}

impl Grid {
    /// Defaults relative to the scene extent.
    pub fn for_scene_diameter(diameter: f64) -> Grid {
        Grid { base_cell_size: diameter.max(1e-6) / 256.0, max_level: 4, base_dir_resolution: 8, footprint_scale: 4.0 }
    }

    pub fn cell_size(&self, level: u8) -> f64 {
        self.base_cell_size * (1u64 << level) as f64
    }

    pub fn dir_resolution(&self, level: u8) -> u32 {
        (self.base_dir_resolution >> level.min(2)).max(1)
    }

    pub fn key(&self, position: Vec3, direction: Vec3, level: u8) -> Key {
        let size = self.cell_size(level);
        let q = |x: f64| libm::floor(x / size) as i32;
        let d = self.dir_resolution(level);
        let s = sphere_to_square(direction);
        let qd = |x: f64| ((x * d as f64) as u32).min(d - 1) as u8;
        Key { level, dir: [qd(s.u), qd(s.v)], cell: [q(position.x), q(position.y), q(position.z)] }
    }

    pub fn spatial_key(&self, position: Vec3, level: u8) -> Key {
        self.key(position, Vec3::Z, level).spatial()
    }

    /// `clamp(floor(log2(footprint * K / base)), 0, max_level)`.
    pub fn select_level(&self, footprint: f64) -> u8 {
        let x = footprint * self.footprint_scale / self.base_cell_size;
        if !(x >= 2.0) {
            return 0;
        }
        let l = libm::floor(libm::log2(x));
        if l >= self.max_level as f64 {
            self.max_level
        } else {
            l as u8
        }
    }

    pub fn cell_center(&self, key: &Key) -> Vec3 {
        let s = self.cell_size(key.level);
        Vec3::new((key.cell[0] as f64 + 0.5) * s, (key.cell[1] as f64 + 0.5) * s, (key.cell[2] as f64 + 0.5) * s)
    }
}
