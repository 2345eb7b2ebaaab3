//! Rasterisation of scene layouts into canvas-sized condition maps.

use serde::{Deserialize, Serialize};

use super::{ConditionSet, DensePair, Dims};
use crate::layout::{BoundingBox, InstanceKind, Keypoints, SceneLayout, LIMBS};
use crate::tensor::{LatentTensor, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum HumanMask {
    /// Filled instance box.
    Bbox,
    /// Skeleton dilated by `radius` cells; falls back to the box without keypoints.
    Skeleton { radius: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Disk radius, in cells, stamped along every limb and joint.
    pub line_radius: usize,
    /// 1 for a binary map; 3 replicates it across channels.
    pub keypoint_channels: usize,
    pub human_mask: HumanMask,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            line_radius: 0,
            keypoint_channels: 1,
            human_mask: HumanMask::Bbox,
        }
    }
}

/// Target raster and its pixel-to-cell scale along each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterGrid {
    pub dims: Dims,
    /// Layout pixels per cell.
    pub scale_y: f64,
    pub scale_x: f64,
}

impl RasterGrid {
    /// `ceil(pixels / scale)` cells per axis.
    pub fn for_latent_scale(layout: &SceneLayout, latent_scale: u32) -> Self {
        let s = latent_scale.max(1);
        Self {
            dims: Dims::new(
                layout.canvas.height.div_ceil(s) as usize,
                layout.canvas.width.div_ceil(s) as usize,
            ),
            scale_y: s as f64,
            scale_x: s as f64,
        }
    }

    /// Stretch the layout canvas onto an arbitrary grid.
    pub fn fit(layout: &SceneLayout, dims: Dims) -> Self {
        Self {
            dims,
            scale_y: layout.canvas.height as f64 / dims.height as f64,
            scale_x: layout.canvas.width as f64 / dims.width as f64,
        }
    }

    fn cell(&self, x: f64, y: f64) -> (i64, i64) {
        let r = ((y / self.scale_y).floor() as i64).clamp(0, self.dims.height as i64 - 1);
        let c = ((x / self.scale_x).floor() as i64).clamp(0, self.dims.width as i64 - 1);
        (r, c)
    }

    /// Half-open cell range of a box: floor at the origin, ceil at the extent.
    fn cell_rect(&self, b: &BoundingBox) -> (usize, usize, usize, usize) {
        let r0 = (b.y0 / self.scale_y).floor().max(0.0) as usize;
        let c0 = (b.x0 / self.scale_x).floor().max(0.0) as usize;
        let r1 = ((b.y1 / self.scale_y).ceil() as usize).min(self.dims.height);
        let c1 = ((b.x1 / self.scale_x).ceil() as usize).min(self.dims.width);
        (r0, c0, r1.max(r0 + 1).min(self.dims.height), c1.max(c0 + 1).min(self.dims.width))
    }
}

/// `round(num / den)` with halves away from zero; `den > 0`.
fn round_div(num: i64, den: i64) -> i64 {
    if num >= 0 {
        (2 * num + den) / (2 * den)
    } else {
        -((-2 * num + den) / (2 * den))
    }
}

/// Cells of the digital segment from `a` to `b`: one cell per step along the
/// major axis, minor coordinate rounded to nearest.
pub fn line_cells(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let n = dr.abs().max(dc.abs());
    if n == 0 {
        return vec![a];
    }
    (0..=n)
        .map(|i| (a.0 + round_div(i * dr, n), a.1 + round_div(i * dc, n)))
        .collect()
}

fn stamp(mask: &mut Mask, (r, c): (i64, i64), radius: usize) {
    let rad = radius as i64;
    for dr in -rad..=rad {
        for dc in -rad..=rad {
            if dr * dr + dc * dc > rad * rad {
                continue;
            }
            let (rr, cc) = (r + dr, c + dc);
            if rr >= 0 && cc >= 0 && (rr as usize) < mask.height() && (cc as usize) < mask.width() {
                mask.set(rr as usize, cc as usize, true);
            }
        }
    }
}

/// Draw a skeleton into `mask`: every visible joint, and every limb whose
/// endpoints are both visible.
pub fn draw_skeleton(mask: &mut Mask, grid: &RasterGrid, keypoints: &Keypoints, radius: usize) {
    let joints = keypoints.joints();
    for (_, j) in keypoints.visible() {
        stamp(mask, grid.cell(j.x, j.y), radius);
    }
    for &(a, b) in &LIMBS {
        let (ja, jb) = (&joints[a], &joints[b]);
        if ja.visible && jb.visible {
            for cell in line_cells(grid.cell(ja.x, ja.y), grid.cell(jb.x, jb.y)) {
                stamp(mask, cell, radius);
            }
        }
    }
}

pub fn rasterize_to_grid(layout: &SceneLayout, grid: &RasterGrid, cfg: &RasterConfig) -> ConditionSet {
    let Dims { height, width } = grid.dims;
    let mut skeletons = Mask::new(height, width);
    let mut dense_pairs = Vec::with_capacity(layout.instances.len());
    for inst in &layout.instances {
        if let Some(kp) = &inst.keypoints {
            draw_skeleton(&mut skeletons, grid, kp, cfg.line_radius);
        }
        let mut mask = Mask::new(height, width);
        match (inst.kind, cfg.human_mask, &inst.keypoints) {
            (InstanceKind::Human, HumanMask::Skeleton { radius }, Some(kp)) => {
                draw_skeleton(&mut mask, grid, kp, radius);
            }
            _ => {
                let (r0, c0, r1, c1) = grid.cell_rect(&inst.bbox);
                mask.fill_rect(r0, c0, r1, c1);
            }
        }
        dense_pairs.push(DensePair {
            caption: inst.caption.clone(),
            mask,
        });
    }
    let channels = cfg.keypoint_channels.max(1);
    let keypoint_map = LatentTensor::from_fn(height, width, channels, |r, c, _| {
        if skeletons.get(r, c) {
            1.0
        } else {
            0.0
        }
    });
    ConditionSet {
        global_caption: layout.global_caption.clone(),
        keypoint_map,
        dense_pairs,
    }
}

/// Conditions at `ceil(canvas / latent_scale)` resolution.
pub fn rasterize_conditions(layout: &SceneLayout, latent_scale: u32, cfg: &RasterConfig) -> ConditionSet {
    rasterize_to_grid(layout, &RasterGrid::for_latent_scale(layout, latent_scale), cfg)
}
