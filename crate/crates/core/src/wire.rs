//! Wire protocol for external denoiser services.
//!
//! Each message is one line of UTF-8 JSON (the header) terminated by `\n`,
//! followed by a raw binary section whose layout the header describes.
//!
//! A denoise request header carries
//! `{"op","t","T","alpha_bar","shape","global_caption","segments":[{"caption","mask_ref"}],"keypoint_map_ref"}`
//! and its binary section holds, in order: the keypoint map (`f32` LE), each
//! segment mask (`u8`, one byte per cell) in segment order, then the `x_t`
//! payload (`f32` LE, `product(shape) * 4` bytes). Every `*_ref` is
//! `{"offset": bytes from the start of the binary section, "shape": [...]}`.
//!
//! Responses are `{"status":"ok","shape":[h,w,d]}` followed by the `f32`
//! epsilon payload, `{"status":"ok","capabilities":{...}}` with no binary
//! section, or `{"status":"error","message":"..."}`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::diffusion::Capabilities;
use crate::error::{Error, Result};
use crate::tensor::{LatentTensor, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRef {
    pub offset: u64,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentHeader {
    pub caption: String,
    pub mask_ref: BlobRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestHeader {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_caption: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentHeader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoint_map_ref: Option<BlobRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHeader {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<Capabilities>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRequest {
    pub t: usize,
    pub total: usize,
    pub alpha_bar: f64,
    pub global_caption: String,
    pub segments: Vec<(String, Mask)>,
    pub keypoint_map: LatentTensor,
    pub x_t: LatentTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Capabilities,
    Denoise(DenoiseRequest),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Capabilities(Capabilities),
    Epsilon(LatentTensor),
    Error(String),
}

fn proto(msg: impl Into<String>) -> Error {
    Error::backend(format!("protocol: {}", msg.into()))
}

fn push_f32(out: &mut Vec<u8>, t: &LatentTensor) {
    for v in t.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn shape3(t: &LatentTensor) -> Vec<usize> {
    vec![t.height(), t.width(), t.channels()]
}

fn write_header(w: &mut impl Write, header: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(header).map_err(|e| proto(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Read one header line; `None` on a clean end of stream.
fn read_header_line(r: &mut impl BufRead) -> Result<Option<String>> {
    let mut buf = Vec::new();
    let n = r.read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') {
        return Err(proto("truncated header"));
    }
    buf.pop();
    String::from_utf8(buf).map(Some).map_err(|_| proto("header is not UTF-8"))
}

fn read_f32_tensor(r: &mut impl Read, shape: &[usize]) -> Result<LatentTensor> {
    let (h, w, d) = match shape {
        [h, w] => (*h, *w, 1),
        [h, w, d] => (*h, *w, *d),
        _ => return Err(proto(format!("unsupported tensor shape {shape:?}"))),
    };
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(d))
        .ok_or_else(|| proto("shape overflow"))?;
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    LatentTensor::from_vec(h, w, d, data).map_err(|e| proto(e.to_string()))
}

pub fn write_request(w: &mut impl Write, req: &Request) -> Result<()> {
    match req {
        Request::Capabilities => write_header(
            w,
            &RequestHeader {
                op: "capabilities".into(),
                t: None,
                total: None,
                alpha_bar: None,
                shape: None,
                global_caption: None,
                segments: vec![],
                keypoint_map_ref: None,
            },
        ),
        Request::Denoise(d) => {
            let mut binary = Vec::new();
            let keypoint_map_ref = BlobRef {
                offset: 0,
                shape: shape3(&d.keypoint_map),
            };
            push_f32(&mut binary, &d.keypoint_map);
            let mut segments = Vec::with_capacity(d.segments.len());
            for (caption, mask) in &d.segments {
                segments.push(SegmentHeader {
                    caption: caption.clone(),
                    mask_ref: BlobRef {
                        offset: binary.len() as u64,
                        shape: vec![mask.height(), mask.width()],
                    },
                });
                binary.extend_from_slice(mask.as_bytes());
            }
            push_f32(&mut binary, &d.x_t);
            write_header(
                w,
                &RequestHeader {
                    op: "denoise".into(),
                    t: Some(d.t),
                    total: Some(d.total),
                    alpha_bar: Some(d.alpha_bar),
                    shape: Some(shape3(&d.x_t)),
                    global_caption: Some(d.global_caption.clone()),
                    segments,
                    keypoint_map_ref: Some(keypoint_map_ref),
                },
            )?;
            w.write_all(&binary)?;
            Ok(())
        }
    }
}

/// Decode the next request; `None` when the peer closed the stream.
pub fn read_request(r: &mut impl BufRead) -> Result<Option<Request>> {
    let Some(line) = read_header_line(r)? else {
        return Ok(None);
    };
    let header: RequestHeader = serde_json::from_str(&line).map_err(|e| proto(e.to_string()))?;
    match header.op.as_str() {
        "capabilities" => Ok(Some(Request::Capabilities)),
        "denoise" => {
            let missing = |f: &str| proto(format!("denoise request without {f}"));
            let shape = header.shape.ok_or_else(|| missing("shape"))?;
            let kref = header.keypoint_map_ref.ok_or_else(|| missing("keypoint_map_ref"))?;
            if kref.offset != 0 {
                return Err(proto("keypoint map must start the binary section"));
            }
            let keypoint_map = read_f32_tensor(r, &kref.shape)?;
            let mut offset = (keypoint_map.len() * 4) as u64;
            let mut segments = Vec::with_capacity(header.segments.len());
            for seg in header.segments {
                let [h, w] = seg.mask_ref.shape[..] else {
                    return Err(proto("mask shape must be [h, w]"));
                };
                if seg.mask_ref.offset != offset {
                    return Err(proto(format!(
                        "mask offset {} out of sequence (expected {offset})",
                        seg.mask_ref.offset
                    )));
                }
                let mut bytes = vec![0u8; h * w];
                r.read_exact(&mut bytes)?;
                offset += bytes.len() as u64;
                let mask = Mask::from_vec(h, w, bytes).map_err(|e| proto(e.to_string()))?;
                segments.push((seg.caption, mask));
            }
            let x_t = read_f32_tensor(r, &shape)?;
            Ok(Some(Request::Denoise(DenoiseRequest {
                t: header.t.ok_or_else(|| missing("t"))?,
                total: header.total.ok_or_else(|| missing("T"))?,
                alpha_bar: header.alpha_bar.ok_or_else(|| missing("alpha_bar"))?,
                global_caption: header.global_caption.unwrap_or_default(),
                segments,
                keypoint_map,
                x_t,
            })))
        }
        other => Err(proto(format!("unknown op {other:?}"))),
    }
}

pub fn write_response(w: &mut impl Write, resp: &Response) -> Result<()> {
    let header = |status: &str| ResponseHeader {
        status: status.into(),
        shape: None,
        capabilities: None,
        message: None,
    };
    match resp {
        Response::Capabilities(c) => write_header(
            w,
            &ResponseHeader {
                capabilities: Some(c.clone()),
                ..header("ok")
            },
        ),
        Response::Epsilon(eps) => {
            write_header(
                w,
                &ResponseHeader {
                    shape: Some(shape3(eps)),
                    ..header("ok")
                },
            )?;
            let mut binary = Vec::with_capacity(eps.len() * 4);
            push_f32(&mut binary, eps);
            w.write_all(&binary)?;
            Ok(())
        }
        Response::Error(m) => write_header(
            w,
            &ResponseHeader {
                message: Some(m.clone()),
                ..header("error")
            },
        ),
    }
}

pub fn read_response(r: &mut impl BufRead) -> Result<Response> {
    let line = read_header_line(r)?.ok_or_else(|| proto("connection closed"))?;
    let header: ResponseHeader = serde_json::from_str(&line).map_err(|e| proto(e.to_string()))?;
    match header.status.as_str() {
        "ok" => {
            if let Some(c) = header.capabilities {
                Ok(Response::Capabilities(c))
            } else if let Some(shape) = header.shape {
                Ok(Response::Epsilon(read_f32_tensor(r, &shape)?))
            } else {
                Err(proto("ok response without shape or capabilities"))
            }
        }
        "error" => Ok(Response::Error(header.message.unwrap_or_default())),
        other => Err(proto(format!("unknown status {other:?}"))),
    }
}

/// Serve requests from `reader` until end of stream. Handler results are
/// written back; a malformed request yields an error response and the loop
/// continues when the stream is still in sync, which is always the case for
/// header-level errors.
pub fn serve<R: BufRead, W: Write>(
    reader: &mut R,
    writer: &mut W,
    mut handler: impl FnMut(&Request) -> Response,
) -> Result<()> {
    loop {
        match read_request(reader) {
            Ok(None) => return Ok(()),
            Ok(Some(req)) => write_response(writer, &handler(&req))?,
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(e) => write_response(writer, &Response::Error(e.to_string()))?,
        }
        writer.flush()?;
    }
}

/// Reference handler for the mock rule `eps = tanh(x_t) sqrt(1 - alpha_bar)`.
pub fn mock_response(req: &Request) -> Response {
    match req {
        Request::Capabilities => Response::Capabilities(Capabilities {
            name: "mock-service".into(),
            accepts_conditions: true,
            deterministic: true,
            max_concurrency: Some(1),
            condition_kinds: vec!["global_caption".into(), "segments".into(), "keypoint_map".into()],
        }),
        Request::Denoise(d) => {
            if !(0.0..=1.0).contains(&d.alpha_bar) {
                return Response::Error(format!("alpha_bar {} outside [0, 1]", d.alpha_bar));
            }
            Response::Epsilon(crate::diffusion::mock_epsilon(&d.x_t, d.alpha_bar))
        }
    }
}
