//! Grayscale conditioning: normalization, ROI segmentation, local-mean
//! binarization, and thinning down to a one-pixel-wide ridge skeleton.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::raster::{RasterImage, RasterKind, RoiMask};

/// Output of [`normalize`]. `zero_variance` marks inputs with no contrast at
/// all; such prints carry no ridge structure and are rejected later by ROI
/// segmentation.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub image: RasterImage,
    pub zero_variance: bool,
}

/// Remap intensities so the image mean and variance land on the targets.
///
/// Pixels above the input mean move above `target_mean` and vice versa, each
/// displaced by `sqrt(target_var * (I - mean)^2 / var)`. A constant input has
/// no structure to stretch; it comes back as a constant image at
/// `target_mean` with the `zero_variance` flag set.
pub fn normalize(img: &RasterImage, target_mean: f64, target_var: f64) -> Normalized {
    let n = (img.width() * img.height()) as f64;
    let mean = img.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
    let var = img
        .pixels()
        .iter()
        .map(|&p| (p as f64 - mean).powi(2))
        .sum::<f64>()
        / n;

    if var == 0.0 {
        let value = target_mean.round().clamp(0.0, 255.0) as u8;
        return Normalized {
            image: RasterImage::filled(img.width(), img.height(), RasterKind::Grayscale, value),
            zero_variance: true,
        };
    }

    let scale = (target_var / var).sqrt();
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| {
            let d = p as f64 - mean;
            let out = target_mean + scale * d.abs() * d.signum();
            out.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Normalized {
        image: RasterImage::new(img.width(), img.height(), RasterKind::Grayscale, pixels),
        zero_variance: false,
    }
}

/// Block grid over a raster: `ceil(dim / block_size)` cells per axis, with
/// partial cells at the right/bottom edges.
fn block_grid(width: usize, height: usize, block_size: usize) -> (usize, usize) {
    (width.div_ceil(block_size), height.div_ceil(block_size))
}

fn block_bounds(
    bx: usize,
    by: usize,
    block_size: usize,
    width: usize,
    height: usize,
) -> (usize, usize, usize, usize) {
    let x0 = bx * block_size;
    let y0 = by * block_size;
    (x0, y0, (x0 + block_size).min(width), (y0 + block_size).min(height))
}

/// Mark ridge-bearing area by per-block intensity variance, then keep only
/// the largest 4-connected group of foreground blocks. Ties between equally
/// large groups go to the one found first in row-major scan order.
pub fn segment_roi(img: &RasterImage, block_size: usize, var_threshold: f64) -> Result<RoiMask> {
    assert!(block_size >= 1, "block_size must be positive");
    let (w, h) = (img.width(), img.height());
    let (bw, bh) = block_grid(w, h, block_size);

    let mut fg = vec![false; bw * bh];
    for by in 0..bh {
        for bx in 0..bw {
            let (x0, y0, x1, y1) = block_bounds(bx, by, block_size, w, h);
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = img.get(x, y) as f64;
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            fg[by * bw + bx] = var >= var_threshold;
        }
    }
    if !fg.iter().any(|&b| b) {
        return Err(Error::EmptyRoi);
    }

    // Largest 4-connected component over the block grid.
    let mut label = vec![0u32; bw * bh];
    let mut best_label = 0u32;
    let mut best_size = 0usize;
    let mut next = 1u32;
    let mut stack = Vec::new();
    for start in 0..bw * bh {
        if !fg[start] || label[start] != 0 {
            continue;
        }
        let id = next;
        next += 1;
        let mut size = 0usize;
        stack.push(start);
        label[start] = id;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (bx, by) = (idx % bw, idx / bw);
            let mut visit = |nx: usize, ny: usize| {
                let nidx = ny * bw + nx;
                if fg[nidx] && label[nidx] == 0 {
                    label[nidx] = id;
                    stack.push(nidx);
                }
            };
            if bx > 0 {
                visit(bx - 1, by);
            }
            if bx + 1 < bw {
                visit(bx + 1, by);
            }
            if by > 0 {
                visit(bx, by - 1);
            }
            if by + 1 < bh {
                visit(bx, by + 1);
            }
        }
        if size > best_size {
            best_size = size;
            best_label = id;
        }
    }

    let mut mask = vec![false; w * h];
    for by in 0..bh {
        for bx in 0..bw {
            if label[by * bw + bx] != best_label {
                continue;
            }
            let (x0, y0, x1, y1) = block_bounds(bx, by, block_size, w, h);
            for y in y0..y1 {
                for x in x0..x1 {
                    mask[y * w + x] = true;
                }
            }
        }
    }
    Ok(RoiMask::new(w, h, block_size, mask))
}

/// Threshold against the local block mean: inside the ROI a pixel becomes
/// ridge (1) iff it is strictly darker than its block's mean intensity, so a
/// flat block yields no ridge at all. Outside the ROI everything is 0.
pub fn binarize(img: &RasterImage, roi: &RoiMask, block_size: usize) -> RasterImage {
    assert!(block_size >= 1, "block_size must be positive");
    let (w, h) = (img.width(), img.height());
    let (bw, bh) = block_grid(w, h, block_size);

    let mut means = vec![0.0f64; bw * bh];
    for by in 0..bh {
        for bx in 0..bw {
            let (x0, y0, x1, y1) = block_bounds(bx, by, block_size, w, h);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += img.get(x, y) as f64;
                }
            }
            means[by * bw + bx] = sum / ((x1 - x0) * (y1 - y0)) as f64;
        }
    }

    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            if roi.is_foreground(x, y) && (img.get(x, y) as f64) < means[(y / block_size) * bw + x / block_size]
            {
                out[y * w + x] = 1;
            }
        }
    }
    RasterImage::new(w, h, RasterKind::Binary, out)
}

/// Number of 0 -> 1 transitions around the circular neighbor sequence.
#[inline]
fn transitions(v: &[u8; 8]) -> u32 {
    let mut a = 0;
    for i in 0..8 {
        if v[i] == 0 && v[(i + 1) % 8] == 1 {
            a += 1;
        }
    }
    a
}

/// One parallel thinning subcycle; `first` picks the boundary-orientation
/// conditions. Returns the number of pixels deleted.
fn thin_subcycle(img: &mut RasterImage, first: bool) -> usize {
    let mut doomed = Vec::new();
    for y in 0..img.height() as i64 {
        for x in 0..img.width() as i64 {
            if img.ridge_at(x, y) == 0 {
                continue;
            }
            let v = img.neighborhood8(x, y);
            let b: u32 = v.iter().map(|&p| p as u32).sum();
            if !(2..=6).contains(&b) || transitions(&v) != 1 {
                continue;
            }
            // v indices: 0 N, 2 E, 4 S, 6 W.
            let ok = if first {
                v[0] * v[2] * v[4] == 0 && v[2] * v[4] * v[6] == 0
            } else {
                v[0] * v[2] * v[6] == 0 && v[0] * v[4] * v[6] == 0
            };
            if ok {
                doomed.push((x as usize, y as usize));
            }
        }
    }
    for &(x, y) in &doomed {
        img.set(x, y, 0);
    }
    doomed.len()
}

/// Delete one redundant pixel from any remaining 2x2 all-ridge square, as
/// long as removal is locally safe (a single neighbor run, so connectivity
/// is preserved). Returns the number of pixels deleted.
fn dissolve_squares(img: &mut RasterImage) -> usize {
    let mut removed = 0;
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let corners = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            if corners.iter().any(|&(cx, cy)| img.ridge_at(cx, cy) == 0) {
                continue;
            }
            for &(cx, cy) in &corners {
                let v = img.neighborhood8(cx, cy);
                if transitions(&v) == 1 {
                    img.set(cx as usize, cy as usize, 0);
                    removed += 1;
                    break;
                }
            }
        }
    }
    removed
}

/// Top-left corner of the first all-ridge 2x2 square, in row-major order.
fn first_square(img: &RasterImage) -> Option<(usize, usize)> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            if [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]
                .iter()
                .all(|&(cx, cy)| img.ridge_at(cx, cy) == 1)
            {
                return Some((x as usize, y as usize));
            }
        }
    }
    None
}

/// Thin a binary raster to its skeleton: alternate the two deletion
/// subcycles until a full pass changes nothing, then dissolve any 2x2 ridge
/// squares the schedule left behind and repeat. Pixels are only ever
/// deleted, so the skeleton is a subset of the input ridge set, and the
/// fixpoint construction makes the whole operation idempotent.
pub fn thin(img: &RasterImage) -> RasterImage {
    assert!(
        img.kind() != RasterKind::Grayscale,
        "thinning needs a binary raster"
    );
    let mut out = RasterImage::new(
        img.width(),
        img.height(),
        RasterKind::Skeleton,
        img.pixels().to_vec(),
    );
    loop {
        loop {
            let deleted = thin_subcycle(&mut out, true) + thin_subcycle(&mut out, false);
            if deleted == 0 {
                break;
            }
        }
        if dissolve_squares(&mut out) == 0 {
            // A square can survive the safe pass when every corner anchors
            // its own diagonal stub (e.g. two one-pixel strokes crossing).
            // The one-pixel-wide output guarantee outranks connectivity in
            // that corner case: force one deletion and re-settle.
            match first_square(&out) {
                Some((x, y)) => out.set(x, y, 0),
                None => break,
            }
        }
    }
    out
}

/// Everything the minutiae stages need from a raw grayscale partial.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub skeleton: RasterImage,
    pub roi: RoiMask,
    pub zero_variance: bool,
}

/// Full conditioning chain: normalize, segment, binarize, thin.
pub fn preprocess(img: &RasterImage, cfg: &Config) -> Result<Preprocessed> {
    let normalized = normalize(img, cfg.target_mean, cfg.target_var);
    let roi = segment_roi(&normalized.image, cfg.roi_block_size, cfg.roi_var_threshold)?;
    let binary = binarize(&normalized.image, &roi, cfg.binarize_block_size);
    let skeleton = thin(&binary);
    Ok(Preprocessed {
        skeleton,
        roi,
        zero_variance: normalized.zero_variance,
    })
}
