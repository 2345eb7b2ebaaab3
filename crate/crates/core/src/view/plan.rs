use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height × width of a raster, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// One view's rectangle on the latent canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Window {
    pub fn full(canvas: Dims) -> Self {
        Self {
            index: 0,
            row: 0,
            col: 0,
            height: canvas.height,
            width: canvas.width,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.height, self.width)
    }

    pub fn fits(&self, canvas: Dims) -> bool {
        self.height > 0 && self.width > 0 && self.row + self.height <= canvas.height && self.col + self.width <= canvas.width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.height && col >= self.col && col < self.col + self.width
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    canvas: Dims,
    windows: Vec<Window>,
}

impl WindowPlan {
    /// Accepts any window set that stays inside the canvas and covers it.
    /// Windows are re-indexed in list order.
    pub fn new(canvas: Dims, windows: Vec<Window>) -> Result<Self> {
        let windows: Vec<Window> = windows
            .into_iter()
            .enumerate()
            .map(|(i, w)| Window { index: i, ..w })
            .collect();
        for w in &windows {
            if !w.fits(canvas) {
                return Err(Error::WindowTooLarge {
                    window_h: w.row + w.height,
                    window_w: w.col + w.width,
                    canvas_h: canvas.height,
                    canvas_w: canvas.width,
                });
            }
        }
        let plan = Self { canvas, windows };
        let counts = plan.coverage_counts();
        if let Some(pos) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Coverage {
                row: pos / canvas.width,
                col: pos % canvas.width,
            });
        }
        Ok(plan)
    }

    pub fn single(canvas: Dims) -> Self {
        Self {
            canvas,
            windows: vec![Window::full(canvas)],
        }
    }

    pub fn canvas(&self) -> Dims {
        self.canvas
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Number of windows covering each canvas cell, row-major.
    pub fn coverage_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.canvas.area()];
        for w in &self.windows {
            for r in w.row..w.row + w.height {
                let base = r * self.canvas.width;
                for c in &mut counts[base + w.col..base + w.col + w.width] {
                    *c += 1;
                }
            }
        }
        counts
    }
}

fn axis_origins(len: usize, win: usize, stride: usize) -> Vec<usize> {
    let mut origins = vec![0];
    let mut last = 0;
    while last + win < len {
        last = (last + stride).min(len - win);
        origins.push(last);
    }
    origins
}

/// Regular grid of `window`-sized views at `stride` cells, with the final row
/// and column clamped flush to the canvas edge.
pub fn plan_windows(canvas: Dims, window: Dims, stride: usize) -> Result<WindowPlan> {
    if window.height == 0 || window.width == 0 || window.height > canvas.height || window.width > canvas.width {
        return Err(Error::WindowTooLarge {
            window_h: window.height,
            window_w: window.width,
            canvas_h: canvas.height,
            canvas_w: canvas.width,
        });
    }
    let max_stride = window.height.min(window.width);
    if stride == 0 || stride > max_stride {
        return Err(Error::InvalidStride {
            stride,
            window: max_stride,
        });
    }
    let rows = axis_origins(canvas.height, window.height, stride);
    let cols = axis_origins(canvas.width, window.width, stride);
    let windows = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .enumerate()
        .map(|(index, (row, col))| Window {
            index,
            row,
            col,
            height: window.height,
            width: window.width,
        })
        .collect();
    Ok(WindowPlan { canvas, windows })
}

/// Window/stride settings that produce a plan for any canvas; the window is
/// shrunk to the canvas when the canvas is smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub window: Dims,
    pub stride: usize,
}

impl Default for PlanSpec {
    fn default() -> Self {
        Self {
            window: Dims::new(64, 64),
            stride: 32,
        }
    }
}

impl PlanSpec {
    pub fn plan_for(&self, canvas: Dims) -> Result<WindowPlan> {
        let window = Dims::new(self.window.height.min(canvas.height), self.window.width.min(canvas.width));
        let stride = self.stride.min(window.height).min(window.width);
        plan_windows(canvas, window, stride)
    }
}
