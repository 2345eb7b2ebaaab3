//! Views over the latent canvas.
//!
//! A [`WindowPlan`] tiles the canvas with fixed-size windows. [`crop`] maps
//! the canvas onto one view, [`embed`] places a view back on a zero canvas,
//! and [`stitch`] averages every view into the canvas, dividing each cell by
//! the number of windows covering it. [`crop_condition`] does for the
//! conditioning what [`crop`] does for latents.

mod condition;
mod ops;
mod plan;
mod raster;

pub use condition::{crop_condition, crop_mask, ConditionSet, DensePair, ViewCondition};
pub use ops::{crop, embed, stitch};
pub use plan::{plan_windows, Dims, PlanSpec, Window, WindowPlan};
pub use raster::{
    draw_skeleton, line_cells, rasterize_conditions, rasterize_to_grid, HumanMask, RasterConfig, RasterGrid,
};
