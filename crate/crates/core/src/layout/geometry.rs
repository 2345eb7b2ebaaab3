use super::{BoundingBox, SceneLayout};

/// Default IoU threshold for caption-to-pose pairing.
pub const DEFAULT_PAIRING_IOU: f64 = 0.5;

/// Intersection over union of two valid boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// One-to-one pairing between caption boxes and pose boxes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pairing {
    /// `(caption index, pose index, iou)`, in the order they were accepted.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_captions: Vec<usize>,
    pub unmatched_poses: Vec<usize>,
}

impl Pairing {
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|&(c, p, _)| (c, p)).collect()
    }
}

/// Greedy descending-IoU matching; ties break on the lower caption index,
/// then the lower pose index.
pub fn match_captions_to_poses(caption_boxes: &[BoundingBox], pose_boxes: &[BoundingBox], threshold: f64) -> Pairing {
    debug_assert!(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
    let mut candidates: Vec<(f64, usize, usize)> = caption_boxes
        .iter()
        .enumerate()
        .flat_map(|(ci, cb)| {
            pose_boxes
                .iter()
                .enumerate()
                .map(move |(pi, pb)| (iou(cb, pb), ci, pi))
        })
        .filter(|(v, _, _)| *v >= threshold)
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut caption_used = vec![false; caption_boxes.len()];
    let mut pose_used = vec![false; pose_boxes.len()];
    let mut pairs = Vec::new();
    for (v, ci, pi) in candidates {
        if !caption_used[ci] && !pose_used[pi] {
            caption_used[ci] = true;
            pose_used[pi] = true;
            pairs.push((ci, pi, v));
        }
    }
    Pairing {
        pairs,
        unmatched_captions: (0..caption_boxes.len()).filter(|&i| !caption_used[i]).collect(),
        unmatched_poses: (0..pose_boxes.len()).filter(|&i| !pose_used[i]).collect(),
    }
}

/// Recompute group membership from geometry: each instance joins the group
/// whose box contains its box center. Overlapping candidates resolve to the
/// smallest group by area, then the earliest listed. Centers outside every
/// group land in the non-group bucket.
pub fn assign_instances_to_groups(layout: &SceneLayout) -> SceneLayout {
    let mut out = layout.clone();
    for g in &mut out.groups {
        g.member_ids.clear();
    }
    for inst in &layout.instances {
        let (cx, cy) = inst.bbox.center();
        let owner = layout
            .groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.bbox.contains_point(cx, cy))
            .min_by(|(ia, a), (ib, b)| a.bbox.area().total_cmp(&b.bbox.area()).then(ia.cmp(ib)))
            .map(|(i, _)| i);
        if let Some(gi) = owner {
            out.groups[gi].member_ids.push(inst.id.clone());
        }
    }
    out
}
