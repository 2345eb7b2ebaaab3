//! Hierarchical keypoint-box scene layouts.
//!
//! A [`SceneLayout`] is a global caption over a pixel canvas, a set of group
//! boxes, and a set of instances (humans with optional 17-joint skeletons, or
//! objects). Instances that no group claims form the non-group bucket.

mod geometry;
mod io;
mod metrics;
mod prompts;
mod synth;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use geometry::{assign_instances_to_groups, iou, match_captions_to_poses, Pairing, DEFAULT_PAIRING_IOU};
pub use io::parse_scene_layout;
pub use metrics::{
    inclusion_check, numerical_matching, spatial_matching, CategoryMatch, ExpectedCounts, MatchReport,
    SpatialCondition,
};
pub use prompts::{build_instruction_prompts, parse_grounding_reply, GroupSummary, HierarchySummary, InstructionPrompts};
pub use synth::{synthesize_layout_procedural, SynthRequest};

use crate::error::{Error, Result};

pub const JOINT_COUNT: usize = 17;

/// Joint order of the 17-keypoint pose convention.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Limb connectivity over [`JOINT_NAMES`] indices.
pub const LIMBS: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }
}

/// Axis-aligned box in canvas pixels, origin top-left, y down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    /// Rejects degenerate boxes.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        b.check()?;
        Ok(b)
    }

    fn check(&self) -> Result<()> {
        let finite = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        if !finite || self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(Error::Geometry(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// `(x, y)` of the box center.
    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Closed-rectangle containment.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn within(&self, canvas: Canvas) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= canvas.width as f64 && self.y1 <= canvas.height as f64
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Exactly 17 joints in [`JOINT_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints([Joint; JOINT_COUNT]);

impl Keypoints {
    pub fn new(joints: [Joint; JOINT_COUNT]) -> Self {
        Self(joints)
    }

    pub fn from_slice(joints: &[Joint]) -> Result<Self> {
        let arr: [Joint; JOINT_COUNT] = joints
            .try_into()
            .map_err(|_| Error::Schema(format!("expected {JOINT_COUNT} joints, got {}", joints.len())))?;
        Ok(Self(arr))
    }

    pub fn joints(&self) -> &[Joint; JOINT_COUNT] {
        &self.0
    }

    pub fn visible(&self) -> impl Iterator<Item = (usize, &Joint)> {
        self.0.iter().enumerate().filter(|(_, j)| j.visible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstanceKind {
    Human,
    Object,
}

impl InstanceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InstanceKind::Human => "human",
            InstanceKind::Object => "object",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLayout {
    pub id: String,
    pub kind: InstanceKind,
    pub bbox: BoundingBox,
    pub caption: String,
    pub keypoints: Option<Keypoints>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout {
    pub id: String,
    pub bbox: BoundingBox,
    pub caption: String,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayout {
    pub canvas: Canvas,
    pub global_caption: String,
    pub groups: Vec<GroupLayout>,
    pub instances: Vec<InstanceLayout>,
}

impl SceneLayout {
    pub fn empty(canvas: Canvas) -> Self {
        Self {
            canvas,
            global_caption: String::new(),
            groups: Vec::new(),
            instances: Vec::new(),
        }
    }

    /// Check every structural and geometric invariant.
    pub fn validate(&self) -> Result<()> {
        if self.canvas.width == 0 || self.canvas.height == 0 {
            return Err(Error::Geometry(format!("empty canvas {:?}", self.canvas)));
        }
        let mut ids = HashSet::new();
        for inst in &self.instances {
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Schema(format!("duplicate id {:?}", inst.id)));
            }
            if inst.caption.trim().is_empty() {
                return Err(Error::Schema(format!("instance {:?} has an empty caption", inst.id)));
            }
            inst.bbox.check()?;
            if !inst.bbox.within(self.canvas) {
                return Err(Error::Geometry(format!("instance {:?} box leaves the canvas", inst.id)));
            }
            if let Some(kp) = &inst.keypoints {
                if inst.kind == InstanceKind::Object {
                    return Err(Error::Schema(format!("object {:?} carries keypoints", inst.id)));
                }
                for (j, joint) in kp.visible() {
                    let inside = joint.x >= 0.0
                        && joint.y >= 0.0
                        && joint.x < self.canvas.width as f64
                        && joint.y < self.canvas.height as f64;
                    if !inside {
                        return Err(Error::Geometry(format!(
                            "instance {:?} joint {} at ({}, {}) is off-canvas",
                            inst.id, JOINT_NAMES[j], joint.x, joint.y
                        )));
                    }
                }
            }
        }
        let mut claimed: HashMap<&str, &str> = HashMap::new();
        for group in &self.groups {
            if !ids.insert(group.id.as_str()) {
                return Err(Error::Schema(format!("duplicate id {:?}", group.id)));
            }
            group.bbox.check()?;
            if !group.bbox.within(self.canvas) {
                return Err(Error::Geometry(format!("group {:?} box leaves the canvas", group.id)));
            }
            for member in &group.member_ids {
                if self.instance(member).is_none() {
                    return Err(Error::Schema(format!(
                        "group {:?} references unknown instance {member:?}",
                        group.id
                    )));
                }
                if let Some(prev) = claimed.insert(member.as_str(), group.id.as_str()) {
                    return Err(Error::Schema(format!(
                        "instance {member:?} belongs to both {prev:?} and {:?}",
                        group.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn instance(&self, id: &str) -> Option<&InstanceLayout> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Index of the group that lists `instance_id`, if any.
    pub fn group_of(&self, instance_id: &str) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.member_ids.iter().any(|m| m == instance_id))
    }

    /// The non-group bucket.
    pub fn ungrouped(&self) -> Vec<&InstanceLayout> {
        self.instances
            .iter()
            .filter(|i| self.group_of(&i.id).is_none())
            .collect()
    }

    pub fn count(&self, kind: InstanceKind) -> usize {
        self.instances.iter().filter(|i| i.kind == kind).count()
    }

    /// Canonical JSON form; byte-stable under parse.
    pub fn to_json(&self) -> String {
        io::to_canonical_json(self)
    }
}
