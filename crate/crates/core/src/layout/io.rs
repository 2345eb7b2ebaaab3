//! JSON interchange form of [`SceneLayout`].

use serde::{Deserialize, Serialize, Serializer};

use super::{BoundingBox, Canvas, GroupLayout, InstanceKind, InstanceLayout, Joint, Keypoints, SceneLayout};
use crate::error::{Error, Result};

/// Pixel coordinate; integral values serialize without a fractional part.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(transparent)]
struct Px(f64);

impl Serialize for Px {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.fract() == 0.0 && self.0.abs() < 9.0e15 {
            s.serialize_i64(self.0 as i64)
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCanvas {
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    id: String,
    bbox: [Px; 4],
    caption: String,
    members: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Human,
    Object,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    id: String,
    kind: RawKind,
    bbox: [Px; 4],
    caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoints: Option<Vec<(Px, Px, u8)>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    canvas: RawCanvas,
    global_caption: String,
    groups: Vec<RawGroup>,
    instances: Vec<RawInstance>,
}

fn to_box(raw: &[Px; 4]) -> BoundingBox {
    BoundingBox {
        x0: raw[0].0,
        y0: raw[1].0,
        x1: raw[2].0,
        y1: raw[3].0,
    }
}

fn from_box(b: &BoundingBox) -> [Px; 4] {
    [Px(b.x0), Px(b.y0), Px(b.x1), Px(b.y1)]
}

/// Parse and validate a layout interchange document.
pub fn parse_scene_layout(doc: &str) -> Result<SceneLayout> {
    let raw: RawDoc = serde_json::from_str(doc).map_err(|e| Error::Schema(e.to_string()))?;
    let instances = raw
        .instances
        .into_iter()
        .map(|ri| {
            let keypoints = match ri.keypoints {
                None => None,
                Some(list) => {
                    let joints = list
                        .iter()
                        .map(|&(x, y, v)| match v {
                            0 | 1 => Ok(Joint {
                                x: x.0,
                                y: y.0,
                                visible: v == 1,
                            }),
                            other => Err(Error::Schema(format!(
                                "instance {:?}: visibility flag {other} is not 0 or 1",
                                ri.id
                            ))),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(Keypoints::from_slice(&joints).map_err(|e| match e {
                        Error::Schema(m) => Error::Schema(format!("instance {:?}: {m}", ri.id)),
                        other => other,
                    })?)
                }
            };
            Ok(InstanceLayout {
                kind: match ri.kind {
                    RawKind::Human => InstanceKind::Human,
                    RawKind::Object => InstanceKind::Object,
                },
                bbox: to_box(&ri.bbox),
                caption: ri.caption,
                keypoints,
                id: ri.id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let groups = raw
        .groups
        .into_iter()
        .map(|rg| GroupLayout {
            bbox: to_box(&rg.bbox),
            id: rg.id,
            caption: rg.caption,
            member_ids: rg.members,
        })
        .collect();
    let layout = SceneLayout {
        canvas: Canvas::new(raw.canvas.width, raw.canvas.height),
        global_caption: raw.global_caption,
        groups,
        instances,
    };
    layout.validate()?;
    Ok(layout)
}

pub(super) fn to_canonical_json(layout: &SceneLayout) -> String {
    let raw = RawDoc {
        canvas: RawCanvas {
            width: layout.canvas.width,
            height: layout.canvas.height,
        },
        global_caption: layout.global_caption.clone(),
        groups: layout
            .groups
            .iter()
            .map(|g| RawGroup {
                id: g.id.clone(),
                bbox: from_box(&g.bbox),
                caption: g.caption.clone(),
                members: g.member_ids.clone(),
            })
            .collect(),
        instances: layout
            .instances
            .iter()
            .map(|i| RawInstance {
                id: i.id.clone(),
                kind: match i.kind {
                    InstanceKind::Human => RawKind::Human,
                    InstanceKind::Object => RawKind::Object,
                },
                bbox: from_box(&i.bbox),
                caption: i.caption.clone(),
                keypoints: i.keypoints.as_ref().map(|k| {
                    k.joints()
                        .iter()
                        .map(|j| (Px(j.x), Px(j.y), j.visible as u8))
                        .collect()
                }),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&raw).expect("layout serialization is infallible");
    out.push('\n');
    out
}
