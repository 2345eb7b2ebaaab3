//! Deterministic procedural layouts, used where a grounding model would
//! otherwise produce the keypoint-box layout.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    assign_instances_to_groups, BoundingBox, Canvas, GroupLayout, InstanceKind, InstanceLayout, Joint, Keypoints,
    SceneLayout, JOINT_COUNT,
};
use crate::error::{Error, Result};

/// Smallest slot edge, in pixels, that an instance may be placed into.
const MIN_SLOT: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRequest {
    pub groups: usize,
    pub humans: usize,
    pub objects: usize,
    pub canvas: Canvas,
    pub seed: u64,
}

// Standing pose as fractions of the instance box, in joint order.
const POSE_TEMPLATE: [(f64, f64); JOINT_COUNT] = [
    (0.50, 0.08),
    (0.46, 0.06),
    (0.54, 0.06),
    (0.42, 0.08),
    (0.58, 0.08),
    (0.34, 0.22),
    (0.66, 0.22),
    (0.28, 0.40),
    (0.72, 0.40),
    (0.24, 0.56),
    (0.76, 0.56),
    (0.40, 0.56),
    (0.60, 0.56),
    (0.40, 0.76),
    (0.60, 0.76),
    (0.40, 0.94),
    (0.60, 0.94),
];

const COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "black", "white"];
const GARMENTS: [&str; 4] = ["jacket", "dress", "t-shirt", "coat"];
const THINGS: [&str; 5] = ["umbrella", "bicycle", "backpack", "chair", "dog"];

struct Region {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

pub fn synthesize_layout_procedural(req: &SynthRequest) -> Result<SceneLayout> {
    let Canvas { width, height } = req.canvas;
    if width == 0 || height == 0 {
        return Err(Error::Infeasible("empty canvas".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);

    let regions: Vec<Region> = if req.groups == 0 {
        vec![Region {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }]
    } else {
        let g = req.groups as u32;
        if width / g < 2 * MIN_SLOT || height < 2 * MIN_SLOT {
            return Err(Error::Infeasible(format!(
                "{} groups do not fit a {width}x{height} canvas",
                req.groups
            )));
        }
        (0..g)
            .map(|k| {
                let (x0, x1) = (k * width / g, (k + 1) * width / g);
                let margin = ((x1 - x0).min(height) / 16).max(1);
                Region {
                    x0: x0 + margin,
                    y0: margin,
                    x1: x1 - margin,
                    y1: height - margin,
                }
            })
            .collect()
    };

    let mut kinds: Vec<InstanceKind> = std::iter::repeat_n(InstanceKind::Human, req.humans)
        .chain(std::iter::repeat_n(InstanceKind::Object, req.objects))
        .collect();
    kinds.shuffle(&mut rng);
    let mut per_region: Vec<Vec<InstanceKind>> = (0..regions.len()).map(|_| Vec::new()).collect();
    for (i, kind) in kinds.into_iter().enumerate() {
        per_region[i % regions.len()].push(kind);
    }

    let mut instances = Vec::new();
    let (mut n_h, mut n_o) = (0usize, 0usize);
    for (region, items) in regions.iter().zip(&per_region) {
        if items.is_empty() {
            continue;
        }
        let n = items.len() as u32;
        let cols = (n as f64).sqrt().ceil() as u32;
        let rows = n.div_ceil(cols);
        let slot_w = (region.x1 - region.x0) / cols;
        let slot_h = (region.y1 - region.y0) / rows;
        if slot_w < MIN_SLOT || slot_h < MIN_SLOT {
            return Err(Error::Infeasible(format!(
                "{n} instances leave {slot_w}x{slot_h} px slots (minimum {MIN_SLOT})"
            )));
        }
        for (k, kind) in items.iter().enumerate() {
            let (sr, sc) = (k as u32 / cols, k as u32 % cols);
            let bw = ((slot_w as f64 * rng.random_range(0.6..0.9)) as u32).max(MIN_SLOT / 2);
            let bh = ((slot_h as f64 * rng.random_range(0.6..0.9)) as u32).max(MIN_SLOT / 2);
            let x0 = region.x0 + sc * slot_w + rng.random_range(0..=slot_w - bw);
            let y0 = region.y0 + sr * slot_h + rng.random_range(0..=slot_h - bh);
            let bbox = BoundingBox::new(x0 as f64, y0 as f64, (x0 + bw) as f64, (y0 + bh) as f64)?;
            let color = COLORS[rng.random_range(0..COLORS.len())];
            let inst = match kind {
                InstanceKind::Human => {
                    n_h += 1;
                    let joints = POSE_TEMPLATE.map(|(fx, fy)| Joint {
                        x: (x0 as f64 + fx * bw as f64).floor(),
                        y: (y0 as f64 + fy * bh as f64).floor(),
                        visible: true,
                    });
                    InstanceLayout {
                        id: format!("h{}", n_h - 1),
                        kind: InstanceKind::Human,
                        bbox,
                        caption: format!(
                            "a person wearing a {color} {}",
                            GARMENTS[rng.random_range(0..GARMENTS.len())]
                        ),
                        keypoints: Some(Keypoints::new(joints)),
                    }
                }
                InstanceKind::Object => {
                    n_o += 1;
                    InstanceLayout {
                        id: format!("o{}", n_o - 1),
                        kind: InstanceKind::Object,
                        bbox,
                        caption: format!("a {color} {}", THINGS[rng.random_range(0..THINGS.len())]),
                        keypoints: None,
                    }
                }
            };
            instances.push(inst);
        }
    }

    let groups = if req.groups == 0 {
        Vec::new()
    } else {
        regions
            .iter()
            .zip(&per_region)
            .enumerate()
            .map(|(k, (r, items))| {
                let people = items.iter().filter(|&&i| i == InstanceKind::Human).count();
                Ok(GroupLayout {
                    id: format!("g{k}"),
                    bbox: BoundingBox::new(r.x0 as f64, r.y0 as f64, r.x1 as f64, r.y1 as f64)?,
                    caption: format!("a group of {people} people and {} things", items.len() - people),
                    member_ids: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?
    };

    let layout = SceneLayout {
        canvas: req.canvas,
        global_caption: format!(
            "a large scene with {} people and {} objects in {} groups",
            req.humans, req.objects, req.groups
        ),
        groups,
        instances,
    };
    let layout = assign_instances_to_groups(&layout);
    layout.validate()?;
    Ok(layout)
}
