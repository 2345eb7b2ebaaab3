//! Segment-aware attention modulation.
//!
//! Scores `raw = Q K^T` are biased before the softmax by
//! `M = lambda R (.) M_pos (.) (1 - S) - lambda (1 - R) (.) M_neg (.) (1 - S)`,
//! where `R` marks query/key pairs of the same segment, `S` is the relative
//! area of the query's segment, and the range maps measure each score's
//! distance to its row maximum (`M_pos`) or row minimum (`M_neg`). Rows whose
//! query lies in no segment are left as they are. For `lambda <= 1` a
//! positive pair never rises above its row maximum and a negative pair never
//! falls below its row minimum.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One segment: which query positions and which key tokens it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpec {
    pub query: Vec<bool>,
    pub key: Vec<bool>,
}

impl SegmentSpec {
    pub fn new(query: Vec<bool>, key: Vec<bool>) -> Self {
        Self { query, key }
    }

    /// Segment from index lists; out-of-range indices are ignored.
    pub fn from_indices(nq: usize, nk: usize, query: &[usize], key: &[usize]) -> Self {
        let mut q = vec![false; nq];
        let mut k = vec![false; nk];
        for &i in query.iter().filter(|&&i| i < nq) {
            q[i] = true;
        }
        for &j in key.iter().filter(|&&j| j < nk) {
            k[j] = true;
        }
        Self { query: q, key: k }
    }

    /// Query positions covered; the segment's area for size weighting.
    pub fn area(&self) -> usize {
        self.query.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationParams {
    /// Base strength, `>= 0`.
    pub w: f64,
    pub t: usize,
    pub total: usize,
}

impl ModulationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w >= 0.0) {
            return Err(Error::Config(format!("modulation strength {} must be finite and >= 0", self.w)));
        }
        if self.total == 0 || self.t > self.total {
            return Err(Error::StepOutOfRange {
                t: self.t,
                max: self.total,
            });
        }
        Ok(())
    }
}

/// `lambda_t = w t / T`: full strength at the noisiest step, zero at the end.
pub fn lambda_schedule(params: &ModulationParams) -> Result<f64> {
    params.validate()?;
    Ok(params.w * params.t as f64 / params.total as f64)
}

fn check_inner(q: &Array2<f64>, k: &Array2<f64>) -> Result<()> {
    if q.ncols() != k.ncols() || q.ncols() == 0 {
        return Err(Error::DimMismatch(format!(
            "query dim {} vs key dim {}",
            q.ncols(),
            k.ncols()
        )));
    }
    Ok(())
}

/// `Q K^T`, unscaled, in row-major layout so row reductions see the same
/// summation order whether or not a bias was added.
pub fn raw_scores(q: &Array2<f64>, k: &Array2<f64>) -> Result<Array2<f64>> {
    check_inner(q, k)?;
    Ok(q.dot(&k.t()).as_standard_layout().into_owned())
}

/// Row softmax of `scores / sqrt(d)` with max subtraction.
pub fn scaled_softmax(scores: &Array2<f64>, d: usize) -> Array2<f64> {
    let scale = (d as f64).sqrt();
    let mut out = scores.mapv(|s| s / scale);
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let sum = row.iter().sum::<f64>();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// `softmax(Q K^T / sqrt(d))`; rows sum to 1.
pub fn base_attention(q: &Array2<f64>, k: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(scaled_softmax(&raw_scores(q, k)?, q.ncols()))
}

fn check_segment(n: usize, seg: &SegmentSpec, nq: usize, nk: usize) -> Result<()> {
    if seg.query.len() != nq || seg.key.len() != nk {
        return Err(Error::DimMismatch(format!(
            "segment {n} masks are {}x{}, attention is {nq}x{nk}",
            seg.query.len(),
            seg.key.len()
        )));
    }
    Ok(())
}

/// Owning segment per key token; errors when two segments claim one key.
fn key_owners(segments: &[SegmentSpec], nq: usize, nk: usize) -> Result<Vec<Option<usize>>> {
    let mut owner = vec![None; nk];
    for (n, seg) in segments.iter().enumerate() {
        check_segment(n, seg, nq, nk)?;
        for (j, _) in seg.key.iter().enumerate().filter(|(_, &b)| b) {
            if let Some(first) = owner[j] {
                return Err(Error::Overlap { key: j, first, second: n });
            }
            owner[j] = Some(n);
        }
    }
    Ok(owner)
}

/// `R[i, j]` iff query `i` and key `j` belong to the same segment.
pub fn build_condition_map(segments: &[SegmentSpec], nq: usize, nk: usize) -> Result<Array2<bool>> {
    let owner = key_owners(segments, nq, nk)?;
    Ok(Array2::from_shape_fn((nq, nk), |(i, j)| {
        owner[j].is_some_and(|n| segments[n].query[i])
    }))
}

/// Relative area of the query's segment, repeated across the row; 0 on rows
/// no segment covers. On a positive pair the segment is the key's owner.
pub fn build_size_map(segments: &[SegmentSpec], canvas_area: usize, nq: usize, nk: usize) -> Result<Array2<f64>> {
    let owner = key_owners(segments, nq, nk)?;
    if canvas_area == 0 {
        return Err(Error::Config("canvas area must be positive".into()));
    }
    let mut ratio = Vec::with_capacity(segments.len());
    for (n, seg) in segments.iter().enumerate() {
        let area = seg.area();
        if area > canvas_area {
            return Err(Error::Config(format!(
                "segment {n} covers {area} positions, canvas has {canvas_area}"
            )));
        }
        ratio.push(area as f64 / canvas_area as f64);
    }
    let row_segment: Vec<Option<usize>> = (0..nq)
        .map(|i| segments.iter().position(|s| s.query[i]))
        .collect();
    Ok(Array2::from_shape_fn((nq, nk), |(i, j)| match (owner[j], row_segment[i]) {
        (Some(n), _) if segments[n].query[i] => ratio[n],
        (_, Some(n)) => ratio[n],
        _ => 0.0,
    }))
}

/// Queries covered by at least one segment.
pub fn covered_queries(segments: &[SegmentSpec], nq: usize) -> Vec<bool> {
    (0..nq)
        .map(|i| segments.iter().any(|s| s.query.get(i).copied().unwrap_or(false)))
        .collect()
}

/// Per-row distances to the row maximum and from the row minimum; both >= 0.
pub fn build_range_maps(raw: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut m_pos = raw.clone();
    let mut m_neg = raw.clone();
    for ((mut p, mut n), row) in m_pos
        .axis_iter_mut(Axis(0))
        .zip(m_neg.axis_iter_mut(Axis(0)))
        .zip(raw.axis_iter(Axis(0)))
    {
        let hi = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lo = row.fold(f64::INFINITY, |a, &b| a.min(b));
        p.mapv_inplace(|v| hi - v);
        n.mapv_inplace(|v| v - lo);
    }
    (m_pos, m_neg)
}

/// The additive bias `M` for a given `lambda`; zero on uncovered rows.
pub fn modulation_bias(
    raw: &Array2<f64>,
    r: &Array2<bool>,
    s: &Array2<f64>,
    covered: &[bool],
    lambda: f64,
) -> Array2<f64> {
    let (m_pos, m_neg) = build_range_maps(raw);
    Array2::from_shape_fn(raw.dim(), |ij| {
        let keep = 1.0 - s[ij];
        if !covered[ij.0] {
            0.0
        } else if r[ij] {
            lambda * m_pos[ij] * keep
        } else {
            -(lambda * m_neg[ij] * keep)
        }
    })
}

/// Modulated attention at an explicit `lambda`.
pub fn modulate_with_lambda(
    q: &Array2<f64>,
    k: &Array2<f64>,
    segments: &[SegmentSpec],
    lambda: f64,
    canvas_area: usize,
) -> Result<Array2<f64>> {
    let raw = raw_scores(q, k)?;
    let (nq, nk) = raw.dim();
    let r = build_condition_map(segments, nq, nk)?;
    let s = build_size_map(segments, canvas_area, nq, nk)?;
    let biased = &raw + &modulation_bias(&raw, &r, &s, &covered_queries(segments, nq), lambda);
    Ok(scaled_softmax(&biased, q.ncols()))
}

/// `softmax((Q K^T + M) / sqrt(d))` with `lambda` from the step schedule.
/// At `lambda = 0` this equals [`base_attention`] bit for bit.
pub fn modulate(
    q: &Array2<f64>,
    k: &Array2<f64>,
    segments: &[SegmentSpec],
    params: &ModulationParams,
    canvas_area: usize,
) -> Result<Array2<f64>> {
    modulate_with_lambda(q, k, segments, lambda_schedule(params)?, canvas_area)
}
