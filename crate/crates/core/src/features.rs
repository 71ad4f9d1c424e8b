//! Per-minutia feature tuples and templates.
//!
//! Each minutia becomes a 12-element tuple: a quality bit, eight ridge
//! counts measured along fixed-length axes ordered by the minutia's own
//! direction (which makes them invariant to grid rotation), and the squared
//! distances to its three nearest neighbors (invariant to translation and
//! rotation outright). Distances stay squared integers so downstream
//! equality tests are exact.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::minutiae::{extract_minutiae, Minutia};
use crate::preprocess::preprocess;
use crate::raster::{RasterImage, RoiMask};

/// The eight axis directions at 45-degree spacing, in increasing-angle
/// order under the raster convention (x right, y down, angles from
/// `atan2(dy, dx)`): +X, X=Y, +Y, -X=Y, -X, -X=-Y, -Y, -Y=X.
pub const AXIS_DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Samples walked along each axis.
pub const AXIS_SAMPLES: i64 = 18;

/// Minimum good-quality tuples for a template to be enrollable.
pub const ENROLL_MIN_TUPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MinutiaTuple {
    /// 1 when every axis count is non-negative, else 0.
    pub mq: u8,
    /// Ridge-crossing counts per axis, -1 where the axis was truncated.
    pub rcr: [i32; 8],
    /// Squared distances to the three nearest minutiae, ascending.
    pub dsq: [u32; 3],
}

impl MinutiaTuple {
    /// The 11 integers compared during matching.
    pub fn vector(&self) -> ([i32; 8], [u32; 3]) {
        (self.rcr, self.dsq)
    }
}

/// Identity of one partial print within a dataset.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct TemplateKey {
    pub subject: u32,
    pub finger: u32,
    pub impression: u32,
    pub crop_row: u32,
    pub crop_col: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Template {
    pub subject: u32,
    pub finger: u32,
    pub impression: u32,
    pub crop_row: u32,
    pub crop_col: u32,
    /// Good-quality tuples only; matching operates on these.
    pub tuples: Vec<MinutiaTuple>,
    /// All surviving minutiae, kept for provenance and inspection.
    pub minutiae: Vec<Minutia>,
}

impl Template {
    pub fn key(&self) -> TemplateKey {
        TemplateKey {
            subject: self.subject,
            finger: self.finger,
            impression: self.impression,
            crop_row: self.crop_row,
            crop_col: self.crop_col,
        }
    }
}

/// Axis index whose direction is closest to `theta`; each axis owns a
/// 45-degree sector centered on it.
pub fn start_axis(theta: u16) -> usize {
    ((theta as usize + 22) / 45) % 8
}

/// Ridge count along one axis: walk `AXIS_SAMPLES` steps from (x, y)
/// exclusive, skip the leading run of ridge pixels (the minutia's own
/// ridge), then count maximal ridge runs. -1 when any sample leaves the
/// raster or the ROI foreground.
fn crossings_along(
    skel: &RasterImage,
    roi: Option<&RoiMask>,
    x: i64,
    y: i64,
    dx: i64,
    dy: i64,
) -> i32 {
    let mut vals = [0u8; AXIS_SAMPLES as usize];
    for k in 1..=AXIS_SAMPLES {
        let (nx, ny) = (x + k * dx, y + k * dy);
        if !skel.in_bounds(nx, ny) {
            return -1;
        }
        if let Some(roi) = roi {
            if !roi.foreground_at(nx, ny) {
                return -1;
            }
        }
        vals[(k - 1) as usize] = skel.get(nx as usize, ny as usize);
    }
    let mut it = vals.iter().copied().peekable();
    if vals[0] == 1 {
        while it.next_if(|&v| v == 1).is_some() {}
    }
    let mut runs = 0;
    let mut prev = 0u8;
    for v in it {
        if v == 1 && prev == 0 {
            runs += 1;
        }
        prev = v;
    }
    runs
}

/// The eight ridge counts around a minutia, starting at the axis selected
/// by its direction and proceeding in increasing-angle order.
pub fn ridge_crossings(skel: &RasterImage, roi: Option<&RoiMask>, m: &Minutia) -> [i32; 8] {
    let start = start_axis(m.theta);
    let mut out = [0i32; 8];
    for (i, slot) in out.iter_mut().enumerate() {
        let (dx, dy) = AXIS_DIRS[(start + i) % 8];
        *slot = crossings_along(skel, roi, m.x as i64, m.y as i64, dx, dy);
    }
    out
}

/// Squared distances from `ms[k]` to its three nearest peers, ascending.
/// Equidistant peers are taken in (x, y) order, which keeps the selection
/// deterministic.
pub fn neighbor_distances(ms: &[Minutia], k: usize) -> Result<[u32; 3]> {
    if ms.len() < 4 {
        return Err(Error::TooFewMinutiae { count: ms.len() });
    }
    let (cx, cy) = (ms[k].x as i64, ms[k].y as i64);
    let mut dists: Vec<(u32, u32, u32)> = ms
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, p)| {
            let (dx, dy) = (p.x as i64 - cx, p.y as i64 - cy);
            ((dx * dx + dy * dy) as u32, p.x, p.y)
        })
        .collect();
    dists.sort_unstable();
    Ok([dists[0].0, dists[1].0, dists[2].0])
}

fn quality_bit(rcr: &[i32; 8]) -> u8 {
    let sum_abs: i64 = rcr.iter().map(|&v| (v as i64).abs()).sum();
    let sum: i64 = rcr.iter().map(|&v| v as i64).sum();
    u8::from(sum_abs - sum == 0)
}

/// Assemble the 12-element tuple for `ms[k]`.
pub fn build_tuple(
    skel: &RasterImage,
    roi: Option<&RoiMask>,
    ms: &[Minutia],
    k: usize,
) -> Result<MinutiaTuple> {
    let rcr = ridge_crossings(skel, roi, &ms[k]);
    let dsq = neighbor_distances(ms, k)?;
    Ok(MinutiaTuple {
        mq: quality_bit(&rcr),
        rcr,
        dsq,
    })
}

/// Build a template from surviving minutiae: tuples for every minutia,
/// filtered down to good quality. Fails as `NotEnrollable` when fewer than
/// [`ENROLL_MIN_TUPLES`] good tuples remain (or too few minutiae exist to
/// measure neighbor distances at all).
pub fn build_template(
    skel: &RasterImage,
    roi: &RoiMask,
    minutiae: &[Minutia],
    key: TemplateKey,
) -> Result<Template> {
    if minutiae.len() < 4 {
        return Err(Error::NotEnrollable {
            good: 0,
            min: ENROLL_MIN_TUPLES,
        });
    }
    let mut tuples = Vec::new();
    for k in 0..minutiae.len() {
        let t = build_tuple(skel, Some(roi), minutiae, k)?;
        if t.mq == 1 {
            tuples.push(t);
        }
    }
    if tuples.len() < ENROLL_MIN_TUPLES {
        return Err(Error::NotEnrollable {
            good: tuples.len(),
            min: ENROLL_MIN_TUPLES,
        });
    }
    Ok(Template {
        subject: key.subject,
        finger: key.finger,
        impression: key.impression,
        crop_row: key.crop_row,
        crop_col: key.crop_col,
        tuples,
        minutiae: minutiae.to_vec(),
    })
}

/// Full extraction pipeline for one grayscale partial print.
pub fn extract_template(img: &RasterImage, cfg: &Config, key: TemplateKey) -> Result<Template> {
    let pre = preprocess(img, cfg)?;
    let minutiae = extract_minutiae(&pre.skeleton, &pre.roi, cfg.trace_len, &cfg.false_minutiae);
    build_template(&pre.skeleton, &pre.roi, &minutiae, key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::MinutiaType;
    use crate::raster::RasterKind;

    fn minutia(x: u32, y: u32, theta: u16) -> Minutia {
        Minutia {
            x,
            y,
            theta,
            kind: MinutiaType::Ending,
        }
    }

    #[test]
    fn start_axis_sector_boundaries() {
        let table = [
            (0, 0),
            (22, 0),
            (23, 1),
            (67, 1),
            (68, 2),
            (90, 2),
            (112, 2),
            (113, 3),
            (157, 3),
            (158, 4),
            (202, 4),
            (203, 5),
            (247, 5),
            (248, 6),
            (292, 6),
            (293, 7),
            (337, 7),
            (338, 0),
            (345, 0),
            (359, 0),
        ];
        for (theta, axis) in table {
            assert_eq!(start_axis(theta), axis, "theta {}", theta);
        }
    }

    #[test]
    fn axis_directions_step_by_45_degrees() {
        for (i, &(dx, dy)) in AXIS_DIRS.iter().enumerate() {
            let angle = (dy as f64).atan2(dx as f64).to_degrees().rem_euclid(360.0);
            assert_eq!(angle.round() as usize, 45 * i);
        }
    }

    #[test]
    fn neighbor_distances_right_triangles() {
        let ms: Vec<Minutia> = [(0, 0), (3, 4), (6, 8), (0, 10), (20, 20)]
            .iter()
            .map(|&(x, y)| minutia(x, y, 0))
            .collect();
        assert_eq!(neighbor_distances(&ms, 0).unwrap(), [25, 100, 100]);
    }

    #[test]
    fn neighbor_distances_colinear() {
        let ms: Vec<Minutia> = (0..4).map(|x| minutia(x, 0, 0)).collect();
        assert_eq!(neighbor_distances(&ms, 0).unwrap(), [1, 4, 9]);
    }

    #[test]
    fn neighbor_distances_needs_four_minutiae() {
        let ms: Vec<Minutia> = (0..3).map(|x| minutia(x, 0, 0)).collect();
        assert!(matches!(
            neighbor_distances(&ms, 0),
            Err(Error::TooFewMinutiae { count: 3 })
        ));
    }

    #[test]
    fn quality_bit_matches_the_sign_rule() {
        assert_eq!(quality_bit(&[2, 1, 0, 3, 2, 1, 0, 1]), 1);
        assert_eq!(quality_bit(&[0; 8]), 1);
        assert_eq!(quality_bit(&[2, 1, 0, -1, 2, 1, 0, 1]), 0);
    }

    #[test]
    fn isolated_interior_ending_counts_zero_everywhere() {
        let mut img = RasterImage::filled(60, 60, RasterKind::Skeleton, 0);
        for x in 21..=39 {
            img.set(x, 30, 1);
        }
        let m = minutia(21, 30, 0);
        assert_eq!(ridge_crossings(&img, None, &m), [0; 8]);
    }

    #[test]
    fn parallel_ridges_are_counted_across_the_flow() {
        // Ending at (30, 20) pointing +x; two long ridges 6 and 12 px away
        // in +y. The +Y axis and both adjacent diagonals cross each ridge
        // once; the own-ridge axis skips its leading run down to zero.
        let mut img = RasterImage::filled(60, 60, RasterKind::Skeleton, 0);
        for x in 30..=50 {
            img.set(x, 20, 1);
        }
        for x in 10..=50 {
            img.set(x, 26, 1);
            img.set(x, 32, 1);
        }
        let m = minutia(30, 20, 0);
        assert_eq!(ridge_crossings(&img, None, &m), [0, 2, 2, 2, 0, 0, 0, 0]);
    }

    #[test]
    fn own_ridge_run_is_skipped_only_at_the_start() {
        // Along +X: own ridge for 5 samples, a gap, then two more ridges.
        let mut img = RasterImage::filled(60, 60, RasterKind::Skeleton, 0);
        for x in 20..=25 {
            img.set(x, 30, 1);
        }
        img.set(28, 30, 1);
        for x in 33..=35 {
            img.set(x, 30, 1);
        }
        let m = minutia(20, 30, 0);
        let rcr = ridge_crossings(&img, None, &m);
        assert_eq!(rcr[0], 2);
    }

    #[test]
    fn truncated_axes_get_minus_one_and_spoil_quality() {
        // 5 px from the right edge of a 60-wide raster: every axis with a
        // +x component runs out of bounds within 18 samples.
        let mut img = RasterImage::filled(60, 60, RasterKind::Skeleton, 0);
        for x in 40..=54 {
            img.set(x, 30, 1);
        }
        let ms = vec![
            minutia(54, 30, 180),
            minutia(40, 30, 0),
            minutia(41, 28, 0),
            minutia(42, 33, 0),
        ];
        let rcr = ridge_crossings(&img, None, &ms[0]);
        // start_axis(180) = 4 (-X); +x-component axes land at offsets 3..5.
        assert_eq!(rcr[0], 0);
        assert_eq!(&rcr[3..6], &[-1, -1, -1]);
        let t = build_tuple(&img, None, &ms, 0).unwrap();
        assert_eq!(t.mq, 0);
    }

    #[test]
    fn roi_background_truncates_like_the_raster_edge() {
        let img = RasterImage::filled(60, 60, RasterKind::Skeleton, 0);
        let mask: Vec<bool> = (0..60 * 60).map(|i| i % 60 < 40).collect();
        let roi = RoiMask::new(60, 60, 4, mask);
        let m = minutia(30, 30, 0);
        let rcr = ridge_crossings(&img, Some(&roi), &m);
        // +X reaches x=48 in the background half.
        assert_eq!(rcr[0], -1);
        assert_eq!(rcr[4], 0);
    }

    #[test]
    fn crossing_count_saturates_at_nine() {
        // Ridges at every even offset along +Y: 9 isolated runs, and the
        // first sample is background so nothing is skipped.
        let mut img = RasterImage::filled(60, 60, RasterKind::Skeleton, 0);
        for k in 1..=9 {
            img.set(30, 20 + 2 * k, 1);
        }
        let m = minutia(30, 20, 90);
        let rcr = ridge_crossings(&img, None, &m);
        assert_eq!(rcr[0], 9);
        assert!(rcr.iter().all(|&v| v <= 9));
    }

    #[test]
    fn build_template_enforces_the_quality_floor() {
        let img = RasterImage::filled(200, 200, RasterKind::Skeleton, 0);
        let roi = RoiMask::all_foreground(200, 200);
        let key = TemplateKey {
            subject: 1,
            finger: 1,
            impression: 1,
            crop_row: 0,
            crop_col: 0,
        };
        // Twelve isolated minutiae, far from borders: all axes count 0,
        // every tuple is good quality.
        let ms: Vec<Minutia> = (0..12)
            .map(|i| minutia(40 + 10 * (i % 4), 40 + 13 * (i / 4), 0))
            .collect();
        let t = build_template(&img, &roi, &ms, key).unwrap();
        assert_eq!(t.tuples.len(), 12);
        assert!(t.tuples.iter().all(|u| u.mq == 1));
        assert_eq!(t.minutiae.len(), 12);

        assert!(matches!(
            build_template(&img, &roi, &ms[..9], key),
            Err(Error::NotEnrollable { good: 9, min: 10 })
        ));
        assert!(matches!(
            build_template(&img, &roi, &ms[..3], key),
            Err(Error::NotEnrollable { good: 0, .. })
        ));
    }

    #[test]
    fn near_boundary_minutiae_drop_out_as_bad_quality() {
        // 26 isolated minutiae; two of them close enough to the border for
        // truncated axes. The template keeps the 24 interior ones.
        let img = RasterImage::filled(200, 200, RasterKind::Skeleton, 0);
        let roi = RoiMask::all_foreground(200, 200);
        let key = TemplateKey {
            subject: 1,
            finger: 1,
            impression: 1,
            crop_row: 0,
            crop_col: 0,
        };
        let mut ms: Vec<Minutia> = (0..24)
            .map(|i| minutia(40 + 11 * (i % 6), 40 + 17 * (i / 6), 0))
            .collect();
        ms.push(minutia(5, 100, 0));
        ms.push(minutia(100, 195, 0));
        let t = build_template(&img, &roi, &ms, key).unwrap();
        assert_eq!(t.tuples.len(), 24);
        assert_eq!(t.minutiae.len(), 26);
    }

    /// Rotate raster, ROI, and minutiae a quarter turn together.
    fn rotate_scene(
        img: &RasterImage,
        roi: &RoiMask,
        ms: &[Minutia],
    ) -> (RasterImage, RoiMask, Vec<Minutia>) {
        let h = img.height() as u32;
        let rimg = img.rotated90();
        let rroi = roi.rotated90();
        let rms = ms
            .iter()
            .map(|m| Minutia {
                x: h - 1 - m.y,
                y: m.x,
                theta: (m.theta + 90) % 360,
                kind: m.kind,
            })
            .collect();
        (rimg, rroi, rms)
    }

    #[test]
    fn tuples_are_invariant_under_quarter_turns() {
        let mut img = RasterImage::filled(80, 80, RasterKind::Skeleton, 0);
        for x in 30..=50 {
            img.set(x, 20, 1);
        }
        for x in 24..=56 {
            img.set(x, 26, 1);
            img.set(x, 32, 1);
        }
        let roi = RoiMask::all_foreground(80, 80);
        let ms = vec![
            minutia(30, 20, 0),
            minutia(50, 20, 180),
            minutia(24, 26, 45),
            minutia(56, 32, 280),
        ];
        let tuples = |img: &RasterImage, roi: &RoiMask, ms: &[Minutia]| -> Vec<MinutiaTuple> {
            let mut out: Vec<MinutiaTuple> = (0..ms.len())
                .map(|k| build_tuple(img, Some(roi), ms, k).unwrap())
                .collect();
            out.sort_unstable();
            out
        };
        let base = tuples(&img, &roi, &ms);
        let (mut ri, mut rr, mut rm) = rotate_scene(&img, &roi, &ms);
        for _ in 0..3 {
            assert_eq!(tuples(&ri, &rr, &rm), base);
            let next = rotate_scene(&ri, &rr, &rm);
            ri = next.0;
            rr = next.1;
            rm = next.2;
        }
    }

    #[test]
    fn tuples_are_invariant_under_translation() {
        let build = |ox: u32, oy: u32| -> Vec<MinutiaTuple> {
            let mut img = RasterImage::filled(120, 120, RasterKind::Skeleton, 0);
            for x in 0..=20 {
                img.set((ox + 10 + x) as usize, (oy + 30) as usize, 1);
            }
            for x in 0..=30 {
                img.set((ox + 5 + x) as usize, (oy + 36) as usize, 1);
            }
            let ms = vec![
                minutia(ox + 10, oy + 30, 0),
                minutia(ox + 30, oy + 30, 180),
                minutia(ox + 5, oy + 36, 0),
                minutia(ox + 35, oy + 36, 180),
            ];
            (0..ms.len())
                .map(|k| build_tuple(&img, None, &ms, k).unwrap())
                .collect()
        };
        assert_eq!(build(25, 25), build(32, 40));
    }

    #[test]
    fn template_json_shape_is_stable() {
        let t = Template {
            subject: 3,
            finger: 1,
            impression: 2,
            crop_row: 0,
            crop_col: 4,
            tuples: vec![MinutiaTuple {
                mq: 1,
                rcr: [0, 1, 2, 0, 0, 1, 0, 0],
                dsq: [4, 9, 25],
            }],
            minutiae: vec![minutia(10, 12, 45)],
        };
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            "{\"subject\":3,\"finger\":1,\"impression\":2,\"cropRow\":0,\"cropCol\":4,\
             \"tuples\":[{\"mq\":1,\"rcr\":[0,1,2,0,0,1,0,0],\"dsq\":[4,9,25]}],\
             \"minutiae\":[{\"x\":10,\"y\":12,\"theta\":45,\"type\":\"ending\"}]}"
        );
        let back: Template = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
