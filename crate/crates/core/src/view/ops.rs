//! Crop, zero-embed and averaging stitch between the canvas and its views.

use super::{Dims, Window};
use crate::error::{Error, Result};
use crate::tensor::LatentTensor;

fn check_canvas(z: &LatentTensor, w: &Window) -> Result<()> {
    let canvas = Dims::new(z.height(), z.width());
    if !w.fits(canvas) {
        return Err(Error::DimMismatch(format!(
            "window {}x{} at ({}, {}) exceeds canvas {canvas}",
            w.height, w.width, w.row, w.col
        )));
    }
    Ok(())
}

/// Copy the window's sub-array out of a canvas tensor.
pub fn crop(z: &LatentTensor, w: &Window) -> Result<LatentTensor> {
    check_canvas(z, w)?;
    let ch = z.channels();
    let mut data = Vec::with_capacity(w.height * w.width * ch);
    for r in w.row..w.row + w.height {
        let start = z.offset(r, w.col, 0);
        data.extend_from_slice(&z.as_slice()[start..start + w.width * ch]);
    }
    LatentTensor::from_vec(w.height, w.width, ch, data)
}

/// Place a view on a zero canvas.
pub fn embed(x: &LatentTensor, w: &Window, canvas: Dims) -> Result<LatentTensor> {
    if (x.height(), x.width()) != (w.height, w.width) {
        return Err(Error::DimMismatch(format!(
            "view {}x{} does not match window {}x{}",
            x.height(),
            x.width(),
            w.height,
            w.width
        )));
    }
    if !w.fits(canvas) {
        return Err(Error::DimMismatch(format!("window exceeds canvas {canvas}")));
    }
    let ch = x.channels();
    let mut out = LatentTensor::zeros(canvas.height, canvas.width, ch);
    for r in 0..w.height {
        let src = x.offset(r, 0, 0);
        let dst = out.offset(w.row + r, w.col, 0);
        out.as_mut_slice()[dst..dst + w.width * ch].copy_from_slice(&x.as_slice()[src..src + w.width * ch]);
    }
    Ok(out)
}

/// Average the embedded views: each canvas cell becomes the mean of every
/// view covering it. Cells on which all covering views agree keep that value
/// exactly.
pub fn stitch<'a, I>(views: I, canvas: Dims) -> Result<LatentTensor>
where
    I: IntoIterator<Item = (&'a LatentTensor, &'a Window)>,
{
    let mut channels = None;
    let mut sum: Vec<f64> = Vec::new();
    let mut first: Vec<f64> = Vec::new();
    let mut agree: Vec<bool> = Vec::new();
    let mut count = vec![0u32; canvas.area()];

    for (x, w) in views {
        let ch = x.channels();
        match channels {
            None => {
                channels = Some(ch);
                sum = vec![0.0; canvas.area() * ch];
                first = vec![0.0; canvas.area() * ch];
                agree = vec![true; canvas.area() * ch];
            }
            Some(c) if c != ch => {
                return Err(Error::DimMismatch(format!("views carry {c} and {ch} channels")));
            }
            Some(_) => {}
        }
        if (x.height(), x.width()) != (w.height, w.width) || !w.fits(canvas) {
            return Err(Error::DimMismatch(format!(
                "view {}x{} does not fit window {}x{} at ({}, {}) on {canvas}",
                x.height(),
                x.width(),
                w.height,
                w.width,
                w.row,
                w.col
            )));
        }
        let src = x.as_slice();
        for r in 0..w.height {
            let cell0 = (w.row + r) * canvas.width + w.col;
            for c in 0..w.width {
                let cell = cell0 + c;
                let seen = count[cell] > 0;
                count[cell] += 1;
                let s = (r * w.width + c) * ch;
                for k in 0..ch {
                    let v = src[s + k];
                    let i = cell * ch + k;
                    sum[i] += v;
                    if !seen {
                        first[i] = v;
                    } else if v != first[i] {
                        agree[i] = false;
                    }
                }
            }
        }
    }

    let ch = channels.ok_or(Error::Coverage { row: 0, col: 0 })?;
    if let Some(pos) = count.iter().position(|&n| n == 0) {
        return Err(Error::Coverage {
            row: pos / canvas.width,
            col: pos % canvas.width,
        });
    }
    let data = sum
        .iter()
        .enumerate()
        .map(|(i, &s)| if agree[i] { first[i] } else { s / count[i / ch] as f64 })
        .collect();
    LatentTensor::from_vec(canvas.height, canvas.width, ch, data)
}
