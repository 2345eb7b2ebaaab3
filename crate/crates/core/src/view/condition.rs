use super::{crop, Dims, Window};
use crate::error::{Error, Result};
use crate::tensor::{LatentTensor, Mask};

/// Per-instance caption with its binary spatial support.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePair {
    pub caption: String,
    pub mask: Mask,
}

/// Canvas-wide conditioning: full text, keypoint map, dense caption pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    pub global_caption: String,
    pub keypoint_map: LatentTensor,
    pub dense_pairs: Vec<DensePair>,
}

impl ConditionSet {
    /// No captions, blank keypoint map.
    pub fn empty(canvas: Dims, keypoint_channels: usize) -> Self {
        Self {
            global_caption: String::new(),
            keypoint_map: LatentTensor::zeros(canvas.height, canvas.width, keypoint_channels),
            dense_pairs: Vec::new(),
        }
    }

    pub fn canvas(&self) -> Dims {
        Dims::new(self.keypoint_map.height(), self.keypoint_map.width())
    }

    pub fn validate(&self) -> Result<()> {
        let canvas = self.canvas();
        for (n, pair) in self.dense_pairs.iter().enumerate() {
            if (pair.mask.height(), pair.mask.width()) != (canvas.height, canvas.width) {
                return Err(Error::DimMismatch(format!(
                    "mask {n} is {}x{}, keypoint map is {canvas}",
                    pair.mask.height(),
                    pair.mask.width()
                )));
            }
        }
        Ok(())
    }
}

/// Conditioning seen by one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewCondition {
    pub window: Window,
    pub full_text: String,
    pub keypoint_map: LatentTensor,
    pub dense_pairs: Vec<DensePair>,
}

impl ViewCondition {
    /// Empty condition for a window, for condition-blind backends.
    pub fn blank(window: Window) -> Self {
        Self {
            window,
            full_text: String::new(),
            keypoint_map: LatentTensor::zeros(window.height, window.width, 1),
            dense_pairs: Vec::new(),
        }
    }
}

pub fn crop_mask(mask: &Mask, w: &Window) -> Result<Mask> {
    if !w.fits(Dims::new(mask.height(), mask.width())) {
        return Err(Error::DimMismatch(format!(
            "window exceeds mask {}x{}",
            mask.height(),
            mask.width()
        )));
    }
    let mut out = Mask::new(w.height, w.width);
    for r in 0..w.height {
        for c in 0..w.width {
            out.set(r, c, mask.get(w.row + r, w.col + c));
        }
    }
    Ok(out)
}

/// Restrict the canvas conditions to one window. The full text is kept
/// verbatim; dense pairs whose mask vanishes inside the window are dropped.
pub fn crop_condition(conditions: &ConditionSet, w: &Window) -> Result<ViewCondition> {
    conditions.validate()?;
    let keypoint_map = crop(&conditions.keypoint_map, w)?;
    let mut dense_pairs = Vec::new();
    for pair in &conditions.dense_pairs {
        let mask = crop_mask(&pair.mask, w)?;
        if !mask.is_empty() {
            dense_pairs.push(DensePair {
                caption: pair.caption.clone(),
                mask,
            });
        }
    }
    Ok(ViewCondition {
        window: *w,
        full_text: conditions.global_caption.clone(),
        keypoint_map,
        dense_pairs,
    })
}
