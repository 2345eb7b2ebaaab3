//! Layout-quality metrics: count matching, left/right placement, and
//! keypoint-in-group inclusion.

use serde::{Deserialize, Serialize};

use super::{InstanceKind, SceneLayout};

/// Requested counts per category; `None` leaves a category unscored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub groups: Option<usize>,
    pub humans: Option<usize>,
    pub objects: Option<usize>,
}

impl ExpectedCounts {
    pub fn all(groups: usize, humans: usize, objects: usize) -> Self {
        Self {
            groups: Some(groups),
            humans: Some(humans),
            objects: Some(objects),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMatch {
    pub expected: usize,
    pub generated: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CategoryMatch {
    pub fn from_counts(expected: usize, generated: usize) -> Self {
        let matched = expected.min(generated);
        let (precision, recall, f1) = prf(matched, generated, expected);
        Self {
            expected,
            generated,
            matched,
            precision,
            recall,
            f1,
        }
    }
}

/// Empty denominators score 1 (nothing was wrongly generated, nothing was missed).
fn prf(matched: usize, generated: usize, expected: usize) -> (f64, f64, f64) {
    let precision = if generated == 0 { 1.0 } else { matched as f64 / generated as f64 };
    let recall = if expected == 0 { 1.0 } else { matched as f64 / expected as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Micro-averaged over the scored categories.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub groups: Option<CategoryMatch>,
    pub humans: Option<CategoryMatch>,
    pub objects: Option<CategoryMatch>,
}

pub fn numerical_matching(expected: &ExpectedCounts, layout: &SceneLayout) -> MatchReport {
    let score = |want: Option<usize>, have: usize| want.map(|e| CategoryMatch::from_counts(e, have));
    let groups = score(expected.groups, layout.groups.len());
    let humans = score(expected.humans, layout.count(InstanceKind::Human));
    let objects = score(expected.objects, layout.count(InstanceKind::Object));
    let (m, g, e) = [groups, humans, objects]
        .iter()
        .flatten()
        .fold((0, 0, 0), |(m, g, e), c| (m + c.matched, g + c.generated, e + c.expected));
    let (precision, recall, f1) = prf(m, g, e);
    MatchReport {
        precision,
        recall,
        f1,
        groups,
        humans,
        objects,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialCondition {
    Left,
    Right,
}

impl std::str::FromStr for SpatialCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            other => Err(format!("unknown spatial condition {other:?}")),
        }
    }
}

/// Fraction of groups whose box center falls strictly on the requested half.
/// A center exactly on the vertical midline satisfies neither side.
/// `None` when the layout has no groups.
pub fn spatial_matching(layout: &SceneLayout, condition: SpatialCondition) -> Option<f64> {
    if layout.groups.is_empty() {
        return None;
    }
    let mid = layout.canvas.width as f64 / 2.0;
    let ok = layout
        .groups
        .iter()
        .filter(|g| {
            let (cx, _) = g.bbox.center();
            match condition {
                SpatialCondition::Left => cx < mid,
                SpatialCondition::Right => cx > mid,
            }
        })
        .count();
    Some(ok as f64 / layout.groups.len() as f64)
}

/// Fraction of grouped, keypointed instances whose visible joints all lie
/// inside their group's box. `None` when no such instance exists.
pub fn inclusion_check(layout: &SceneLayout) -> Option<f64> {
    let mut assigned = 0usize;
    let mut passing = 0usize;
    for (gi, group) in layout.groups.iter().enumerate() {
        for id in &group.member_ids {
            let Some(inst) = layout.instance(id) else { continue };
            let Some(kp) = &inst.keypoints else { continue };
            debug_assert_eq!(layout.group_of(id), Some(gi));
            assigned += 1;
            if kp.visible().all(|(_, j)| group.bbox.contains_point(j.x, j.y)) {
                passing += 1;
            }
        }
    }
    (assigned > 0).then(|| passing as f64 / assigned as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{BoundingBox, Canvas, GroupLayout, InstanceLayout, Joint, Keypoints};

    fn human(id: &str) -> InstanceLayout {
        InstanceLayout {
            id: id.into(),
            kind: InstanceKind::Human,
            bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            caption: "a person".into(),
            keypoints: None,
        }
    }

    fn object(id: &str) -> InstanceLayout {
        InstanceLayout {
            kind: InstanceKind::Object,
            ..human(id)
        }
    }

    fn scene(instances: Vec<InstanceLayout>) -> SceneLayout {
        SceneLayout {
            canvas: Canvas::new(100, 100),
            global_caption: String::new(),
            groups: vec![],
            instances,
        }
    }

    #[test]
    fn exact_counts_score_one() {
        let r = numerical_matching(
            &ExpectedCounts {
                humans: Some(2),
                objects: Some(1),
                groups: None,
            },
            &scene(vec![human("a"), human("b"), object("c")]),
        );
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn missing_human_scores_point_eight() {
        let r = numerical_matching(
            &ExpectedCounts {
                humans: Some(3),
                ..Default::default()
            },
            &scene(vec![human("a"), human("b")]),
        );
        let h = r.humans.unwrap();
        assert_eq!(h.precision, 1.0);
        assert!((h.recall - 2.0 / 3.0).abs() < 1e-15);
        // 2 * 1 * (2/3) / (1 + 2/3) = 0.8
        assert!((h.f1 - 0.8).abs() < 1e-12);
        assert!((r.f1 - 0.8).abs() < 1e-12);
    }

    fn groups_at(centers_x: &[f64]) -> SceneLayout {
        let mut s = scene(vec![]);
        s.groups = centers_x
            .iter()
            .enumerate()
            .map(|(i, &cx)| GroupLayout {
                id: format!("g{i}"),
                bbox: BoundingBox::new(cx - 5.0, 10.0, cx + 5.0, 20.0).unwrap(),
                caption: "g".into(),
                member_ids: vec![],
            })
            .collect();
        s
    }

    #[test]
    fn spatial_cases() {
        assert_eq!(spatial_matching(&groups_at(&[25.0]), SpatialCondition::Left), Some(1.0));
        assert_eq!(spatial_matching(&groups_at(&[25.0]), SpatialCondition::Right), Some(0.0));
        assert_eq!(spatial_matching(&groups_at(&[50.0]), SpatialCondition::Left), Some(0.0));
        assert_eq!(spatial_matching(&groups_at(&[50.0]), SpatialCondition::Right), Some(0.0));
        assert_eq!(spatial_matching(&groups_at(&[]), SpatialCondition::Left), None);
    }

    #[test]
    fn inclusion_cases() {
        let mut s = scene(vec![]);
        s.groups.push(GroupLayout {
            id: "g".into(),
            bbox: BoundingBox::new(0.0, 0.0, 50.0, 50.0).unwrap(),
            caption: "g".into(),
            member_ids: vec!["in".into(), "out".into()],
        });
        let joints_at = |x: f64| {
            Keypoints::new(
                [Joint {
                    x: 10.0,
                    y: 10.0,
                    visible: true,
                }; 17],
            )
            .joints()
            .iter()
            .enumerate()
            .map(|(k, j)| if k == 16 { Joint { x, ..*j } } else { *j })
            .collect::<Vec<_>>()
        };
        let mut inside = human("in");
        inside.keypoints = Some(Keypoints::from_slice(&joints_at(50.0)).unwrap());
        let mut outside = human("out");
        outside.keypoints = Some(Keypoints::from_slice(&joints_at(51.0)).unwrap());
        s.instances = vec![inside, outside];
        assert_eq!(inclusion_check(&s), Some(0.5));
        s.groups[0].member_ids.truncate(1);
        assert_eq!(inclusion_check(&s), Some(1.0));
    }
}
