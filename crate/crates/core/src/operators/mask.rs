use std::collections::BTreeSet;
use std::f64::consts::PI;

use crate::error::{LpsError, Result};

/// Golden-angle increment `pi (sqrt(5) - 1) / 2` (about 111.246 degrees).
pub const GOLDEN_ANGLE: f64 = 1.941_611_038_725_466_5;

/// Sampled k-space grid points of one frame, in centered coordinates: the DC
/// sample sits at `(n_x / 2, n_y / 2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    pub frame_index: usize,
    pub indices: Vec<(u32, u32)>,
}

impl SamplingMask {
    pub fn new(frame_index: usize, indices: Vec<(u32, u32)>, shape: (usize, usize)) -> Result<Self> {
        let m = Self { frame_index, indices };
        m.validate(shape)?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// In bounds and free of duplicates.
    pub fn validate(&self, (nx, ny): (usize, usize)) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(kx, ky) in &self.indices {
            if kx as usize >= nx || ky as usize >= ny {
                return Err(LpsError::InvalidArgument(format!(
                    "frame {}: mask index ({kx}, {ky}) outside {nx}x{ny} grid",
                    self.frame_index
                )));
            }
            if !seen.insert((kx, ky)) {
                return Err(LpsError::InvalidArgument(format!(
                    "frame {}: duplicate mask index ({kx}, {ky})",
                    self.frame_index
                )));
            }
        }
        Ok(())
    }
}

/// Grid points hit by a line through the center at angle `theta` (radians
/// from the `k_y` axis), traced in half-pixel steps with nearest-point rounding.
fn rasterize_line(nx: usize, ny: usize, theta: f64, out: &mut BTreeSet<(u32, u32)>) {
    let (cx, cy) = ((nx / 2) as f64, (ny / 2) as f64);
    let (s, c) = theta.sin_cos();
    let reach = nx.max(ny) as i64;
    for step in -2 * reach..=2 * reach {
        let t = step as f64 * 0.5;
        let row = (cx + t * s).round();
        let col = (cy + t * c).round();
        if row >= 0.0 && col >= 0.0 && (row as usize) < nx && (col as usize) < ny {
            out.insert((row as u32, col as u32));
        }
    }
}

/// Pseudo-radial masks: `lines_per_frame` spokes per frame at golden-angle
/// increments that continue across frames. The angle schedule starts `seed`
/// increments in, so `seed = 0` makes the very first spoke horizontal.
pub fn make_pseudo_radial_masks(
    nx: usize,
    ny: usize,
    q: usize,
    lines_per_frame: usize,
    seed: u64,
) -> Result<Vec<SamplingMask>> {
    if lines_per_frame == 0 {
        return Err(LpsError::InvalidArgument("lines_per_frame must be at least 1".into()));
    }
    if nx == 0 || ny == 0 {
        return Err(LpsError::InvalidArgument("grid must be nonempty".into()));
    }
    let mut masks = Vec::with_capacity(q);
    for k in 0..q {
        let mut pts = BTreeSet::new();
        pts.insert(((nx / 2) as u32, (ny / 2) as u32));
        for j in 0..lines_per_frame {
            let spoke = seed + (k * lines_per_frame + j) as u64;
            let theta = (spoke as f64 * GOLDEN_ANGLE).rem_euclid(PI);
            rasterize_line(nx, ny, theta, &mut pts);
        }
        masks.push(SamplingMask { frame_index: k, indices: pts.into_iter().collect() });
    }
    Ok(masks)
}
