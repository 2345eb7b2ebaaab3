//! Instruction prompts for the three grounding stages (description to
//! hierarchy, global group-box grounding, local instance grounding) and the
//! parser for replies written in the same hierarchy block format.
//!
//! Every prompt ends with a `### Hierarchy` block of one record per line:
//!
//! ```text
//! canvas 1280x960
//! global "two teams playing football"
//! totals groups=2 humans=5 objects=1
//! group "g0" humans=3 objects=1 caption="the red team"
//! group "g1" humans=2 objects=0 box=[640,0,1280,960] caption="the blue team"
//! member "h0" group="g1" kind="human" box=[700,100,800,500] caption="a goalkeeper"
//! non-group humans=0 objects=0
//! ```
//!
//! Strings are JSON-encoded, so captions may contain any character.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Canvas, InstanceKind, SceneLayout};
use crate::error::{Error, Result};

pub const HIERARCHY_MARKER: &str = "### Hierarchy";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPrompts {
    pub nat2hier: String,
    pub global_grounding: String,
    pub local_grounding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub id: String,
    pub caption: String,
    pub humans: usize,
    pub objects: usize,
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HierarchySummary {
    pub canvas: Option<Canvas>,
    pub global_caption: Option<String>,
    pub total_groups: Option<usize>,
    pub total_humans: Option<usize>,
    pub total_objects: Option<usize>,
    pub groups: Vec<GroupSummary>,
    pub ungrouped_humans: usize,
    pub ungrouped_objects: usize,
}

impl HierarchySummary {
    pub fn from_layout(layout: &SceneLayout) -> Self {
        let groups = layout
            .groups
            .iter()
            .map(|g| {
                let kinds: Vec<InstanceKind> = g
                    .member_ids
                    .iter()
                    .filter_map(|id| layout.instance(id).map(|i| i.kind))
                    .collect();
                GroupSummary {
                    id: g.id.clone(),
                    caption: g.caption.clone(),
                    humans: kinds.iter().filter(|&&k| k == InstanceKind::Human).count(),
                    objects: kinds.iter().filter(|&&k| k == InstanceKind::Object).count(),
                    bbox: Some(g.bbox.as_array()),
                }
            })
            .collect();
        let ungrouped = layout.ungrouped();
        Self {
            canvas: Some(layout.canvas),
            global_caption: Some(layout.global_caption.clone()),
            total_groups: Some(layout.groups.len()),
            total_humans: Some(layout.count(InstanceKind::Human)),
            total_objects: Some(layout.count(InstanceKind::Object)),
            groups,
            ungrouped_humans: ungrouped.iter().filter(|i| i.kind == InstanceKind::Human).count(),
            ungrouped_objects: ungrouped.iter().filter(|i| i.kind == InstanceKind::Object).count(),
        }
    }

    /// The same summary with group boxes dropped.
    pub fn without_boxes(mut self) -> Self {
        for g in &mut self.groups {
            g.bbox = None;
        }
        self
    }
}

fn js(s: &str) -> String {
    serde_json::to_string(s).expect("string encoding is infallible")
}

fn box_str(b: &[f64; 4]) -> String {
    format!("[{},{},{},{}]", b[0], b[1], b[2], b[3])
}

fn header_lines(layout: &SceneLayout) -> Vec<String> {
    vec![
        format!("canvas {}x{}", layout.canvas.width, layout.canvas.height),
        format!("global {}", js(&layout.global_caption)),
        format!(
            "totals groups={} humans={} objects={}",
            layout.groups.len(),
            layout.count(InstanceKind::Human),
            layout.count(InstanceKind::Object)
        ),
    ]
}

fn group_lines(summary: &HierarchySummary, with_boxes: bool) -> Vec<String> {
    summary
        .groups
        .iter()
        .map(|g| {
            let bbox = match (&g.bbox, with_boxes) {
                (Some(b), true) => format!(" box={}", box_str(b)),
                _ => String::new(),
            };
            format!(
                "group {} humans={} objects={}{bbox} caption={}",
                js(&g.id),
                g.humans,
                g.objects,
                js(&g.caption)
            )
        })
        .collect()
}

fn non_group_line(summary: &HierarchySummary) -> String {
    format!(
        "non-group humans={} objects={}",
        summary.ungrouped_humans, summary.ungrouped_objects
    )
}

pub fn build_instruction_prompts(layout: &SceneLayout) -> InstructionPrompts {
    let summary = HierarchySummary::from_layout(layout);
    let block = |lines: Vec<String>| format!("{HIERARCHY_MARKER}\n{}\n", lines.join("\n"));

    let mut nat = header_lines(layout);
    nat.extend(group_lines(&summary, false));
    nat.push(non_group_line(&summary));
    let nat2hier = format!(
        "Rewrite the scene description as a hierarchy: one global caption, then one line per group \
         with its caption and the number of humans and objects it contains, then the instances that \
         belong to no group.\nDescription: {}\n{}",
        layout.global_caption.replace('\n', " "),
        block(nat)
    );

    let mut glob = header_lines(layout);
    glob.extend(group_lines(&summary, false));
    glob.push(non_group_line(&summary));
    let global_grounding = format!(
        "Place one bounding box [x0,y0,x1,y1] in canvas pixels for every group listed below. \
         Reply with the same lines, adding box=[...] to each group.\n{}",
        block(glob)
    );

    let mut local = header_lines(layout);
    local.extend(group_lines(&summary, true));
    local.push(non_group_line(&summary));
    let local_grounding = format!(
        "For every group box below, place a bounding box for each of its instances and 17 keypoints \
         for each human, keeping every keypoint inside the group box. Reply with one member line per \
         instance.\n{}",
        block(local)
    );

    InstructionPrompts {
        nat2hier,
        global_grounding,
        local_grounding,
    }
}

/// Scanned `key=value` fields following a record keyword.
struct Record {
    positional: Option<String>,
    fields: Vec<(String, Value)>,
}

impl Record {
    fn get(&self, key: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn count(&self, key: &str, line: &str) -> Result<usize> {
        self.get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Schema(format!("missing or invalid {key} in {line:?}")))
    }

    fn string(&self, key: &str) -> Option<String> {
        self.get(key).and_then(Value::as_str).map(str::to_owned)
    }
}

/// Length of the JSON string literal at the start of `s`.
fn json_string_len(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'"') {
        return None;
    }
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(i + 1),
            _ => i += 1,
        }
    }
    None
}

fn scan_record(rest: &str, line: &str) -> Result<Record> {
    let bad = || Error::Schema(format!("malformed hierarchy line {line:?}"));
    let mut s = rest.trim_start();
    let mut positional = None;
    if let Some(n) = json_string_len(s) {
        positional = Some(serde_json::from_str::<String>(&s[..n]).map_err(|_| bad())?);
        s = s[n..].trim_start();
    }
    let mut fields = Vec::new();
    while !s.is_empty() {
        let eq = s.find('=').ok_or_else(bad)?;
        let key = s[..eq].trim().to_owned();
        let v = &s[eq + 1..];
        let n = if v.starts_with('"') {
            json_string_len(v).ok_or_else(bad)?
        } else if v.starts_with('[') {
            v.find(']').ok_or_else(bad)? + 1
        } else {
            v.find(char::is_whitespace).unwrap_or(v.len())
        };
        let value: Value = serde_json::from_str(&v[..n]).map_err(|_| bad())?;
        fields.push((key, value));
        s = v[n..].trim_start();
    }
    Ok(Record { positional, fields })
}

/// Parse the hierarchy block of a prompt or a model reply.
pub fn parse_grounding_reply(text: &str) -> Result<HierarchySummary> {
    let body = match text.find(HIERARCHY_MARKER) {
        Some(pos) => &text[pos + HIERARCHY_MARKER.len()..],
        None => text,
    };
    let mut out = HierarchySummary::default();
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (keyword, rest) = line.split_once(' ').unwrap_or((line, ""));
        match keyword {
            "canvas" => {
                let (w, h) = rest
                    .trim()
                    .split_once('x')
                    .and_then(|(w, h)| Some((w.parse().ok()?, h.parse().ok()?)))
                    .ok_or_else(|| Error::Schema(format!("bad canvas line {line:?}")))?;
                out.canvas = Some(Canvas::new(w, h));
            }
            "global" => {
                let rec = scan_record(rest, line)?;
                out.global_caption = rec.positional;
            }
            "totals" => {
                let rec = scan_record(rest, line)?;
                out.total_groups = Some(rec.count("groups", line)?);
                out.total_humans = Some(rec.count("humans", line)?);
                out.total_objects = Some(rec.count("objects", line)?);
            }
            "group" => {
                let rec = scan_record(rest, line)?;
                let bbox = match rec.get("box") {
                    None => None,
                    Some(v) => Some(
                        serde_json::from_value::<[f64; 4]>(v.clone())
                            .map_err(|_| Error::Schema(format!("bad box in {line:?}")))?,
                    ),
                };
                out.groups.push(GroupSummary {
                    id: rec
                        .positional
                        .clone()
                        .ok_or_else(|| Error::Schema(format!("group without id: {line:?}")))?,
                    caption: rec.string("caption").unwrap_or_default(),
                    humans: rec.count("humans", line)?,
                    objects: rec.count("objects", line)?,
                    bbox,
                });
            }
            "non-group" => {
                let rec = scan_record(rest, line)?;
                out.ungrouped_humans = rec.count("humans", line)?;
                out.ungrouped_objects = rec.count("objects", line)?;
            }
            // free text or member records are not part of the summary
            _ => {}
        }
    }
    Ok(out)
}
