//! Minutiae on a ridge skeleton: crossing-number detection, direction
//! estimation by tracing, and removal of false detections.
//!
//! The crossing number of a skeleton pixel is half the sum of absolute
//! differences around its circular 8-neighborhood; value 1 marks a ridge
//! ending and 3 a bifurcation. Directions are integer degrees in [0, 360),
//! measured with the x axis pointing right and y down, pointing from the
//! minutia into the ridge.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterImage, RoiMask, NBR8};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinutiaType {
    Ending,
    Bifurcation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Minutia {
    pub x: u32,
    pub y: u32,
    /// Integer degrees in [0, 360); 0 until estimated.
    pub theta: u16,
    #[serde(rename = "type")]
    pub kind: MinutiaType,
}

/// Thresholds for the false-minutiae stages, in the order they run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalseMinutiaeConfig {
    /// Endings closer than this (Chebyshev) to the raster or ROI edge go.
    pub edge_dist: u32,
    /// Maximum gap between the two endings of a broken ridge.
    pub break_dist: f64,
    /// Angular tolerance (degrees) for the broken-ridge opposition test.
    pub break_angle: f64,
    /// Maximum ridge-path length of a spur or short isolated ridge.
    pub spur_len: u32,
    /// Maximum ridge-path length between bridged bifurcations.
    pub bridge_len: u32,
    /// Minimum deviation (degrees, axial) of a bridge from the ridge flow.
    pub bridge_angle: f64,
    /// Maximum per-path length for hole loops and triangle sides.
    pub hole_len: u32,
}

impl Default for FalseMinutiaeConfig {
    fn default() -> Self {
        FalseMinutiaeConfig {
            edge_dist: 8,
            break_dist: 6.0,
            break_angle: 30.0,
            spur_len: 9,
            bridge_len: 9,
            bridge_angle: 70.0,
            hole_len: 16,
        }
    }
}

/// Crossing number of an interior pixel: half the sum of absolute
/// differences between circularly consecutive neighbors. 0, 1, 2, 3 or 4.
pub fn crossing_number(skel: &RasterImage, x: u32, y: u32) -> Result<u8> {
    if !skel.is_interior(x as usize, y as usize) {
        return Err(Error::OutOfBounds {
            x: x as i64,
            y: y as i64,
            width: skel.width(),
            height: skel.height(),
        });
    }
    let v = skel.neighborhood8(x as i64, y as i64);
    let sum: u8 = (0..8).map(|i| v[i].abs_diff(v[(i + 1) % 8])).sum();
    Ok(sum / 2)
}

/// Every interior ridge pixel inside the ROI whose crossing number is 1
/// (ending) or 3 (bifurcation), in row-major order. Directions are not yet
/// estimated.
pub fn detect_minutiae(skel: &RasterImage, roi: &RoiMask) -> Vec<Minutia> {
    let mut out = Vec::new();
    for y in 1..skel.height().saturating_sub(1) {
        for x in 1..skel.width().saturating_sub(1) {
            if skel.get(x, y) == 0 || !roi.is_foreground(x, y) {
                continue;
            }
            let cn = crossing_number(skel, x as u32, y as u32).expect("interior by loop bounds");
            let kind = match cn {
                1 => MinutiaType::Ending,
                3 => MinutiaType::Bifurcation,
                _ => continue,
            };
            out.push(Minutia {
                x: x as u32,
                y: y as u32,
                theta: 0,
                kind,
            });
        }
    }
    out
}

/// Angle of the vector (dx, dy) as integer degrees in [0, 360).
fn angle_deg(dx: i64, dy: i64) -> u16 {
    let mut a = (dy as f64).atan2(dx as f64).to_degrees();
    if a < 0.0 {
        a += 360.0;
    }
    (a.round() as u32 % 360) as u16
}

/// Distance between two directions on the circle, in [0, 180].
fn ang_dist(a: u16, b: u16) -> u16 {
    let d = (a as i32 - b as i32).rem_euclid(360) as u16;
    d.min(360 - d)
}

/// Distance between two undirected axes, in [0, 90].
fn axial_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Circular mean of two directions treated as undirected axes, in [0, 180).
fn axial_mean(a: u16, b: u16) -> f64 {
    let (a2, b2) = ((a as f64).to_radians() * 2.0, (b as f64).to_radians() * 2.0);
    let mean = (a2.sin() + b2.sin()).atan2(a2.cos() + b2.cos()) / 2.0;
    mean.to_degrees().rem_euclid(180.0)
}

/// Ridge neighbors of (x, y) grouped into circularly contiguous runs; each
/// run is one branch leaving the pixel. A run wrapping past NW-N is merged.
fn neighbor_runs(skel: &RasterImage, x: i64, y: i64) -> Vec<Vec<(i64, i64)>> {
    let v = skel.neighborhood8(x, y);
    let mut runs: Vec<Vec<(i64, i64)>> = Vec::new();
    for i in 0..8 {
        if v[i] == 0 {
            continue;
        }
        let cell = (x + NBR8[i].0, y + NBR8[i].1);
        if i > 0 && v[i - 1] == 1 {
            runs.last_mut().expect("previous neighbor opened a run").push(cell);
        } else {
            runs.push(vec![cell]);
        }
    }
    if runs.len() > 1 && v[0] == 1 && v[7] == 1 {
        let first = runs.remove(0);
        runs.last_mut().expect("len checked").extend(first);
    }
    runs
}

/// Pick the branch entry pixel out of a run, preferring a 4-adjacent cell.
fn run_entry(run: &[(i64, i64)], x: i64, y: i64) -> (i64, i64) {
    run.iter()
        .copied()
        .find(|&(cx, cy)| (cx - x).abs() + (cy - y).abs() == 1)
        .unwrap_or(run[0])
}

/// Walk along the ridge starting at `entry` for at most `max_steps` moves.
/// `seeds` (the minutia and its other branches) are off limits, so the walk
/// cannot double back or wander into a sibling branch. Stops early at a
/// junction or dead end. Returns the pixel reached and the number of moves
/// made (the entry counts as one).
fn trace_ridge(
    skel: &RasterImage,
    seeds: &HashSet<(i64, i64)>,
    entry: (i64, i64),
    max_steps: u32,
) -> ((i64, i64), u32) {
    let mut visited = seeds.clone();
    visited.insert(entry);
    let mut cur = entry;
    let mut steps = 1u32;
    while steps < max_steps {
        let mut cand: Vec<(i64, i64)> = Vec::new();
        for (dx, dy) in NBR8 {
            let nxt = (cur.0 + dx, cur.1 + dy);
            if skel.ridge_at(nxt.0, nxt.1) == 1 && !visited.contains(&nxt) {
                cand.push(nxt);
            }
        }
        let next = match cand.len() {
            0 => break,
            1 => cand[0],
            2 => {
                // A corner pair (two mutually adjacent candidates, exactly
                // one of them 4-adjacent) is still a single ridge; anything
                // else is a genuine junction.
                let adjacent = (cand[0].0 - cand[1].0).abs() <= 1
                    && (cand[0].1 - cand[1].1).abs() <= 1;
                let four: Vec<(i64, i64)> = cand
                    .iter()
                    .copied()
                    .filter(|&(cx, cy)| (cx - cur.0).abs() + (cy - cur.1).abs() == 1)
                    .collect();
                if adjacent && four.len() == 1 {
                    four[0]
                } else {
                    break;
                }
            }
            _ => break,
        };
        visited.insert(next);
        cur = next;
        steps += 1;
    }
    (cur, steps)
}

/// Estimate the direction of a minutia by tracing up to `trace_len` steps.
///
/// For an ending the direction points from the minutia to the pixel the
/// single branch reaches. For a bifurcation each branch is traced and the
/// stem — the branch farthest in summed angular distance from the other two
/// — gives the direction. Fails with `TruncatedRidge` when any required
/// branch supports fewer than 3 steps.
pub fn estimate_theta(skel: &RasterImage, m: &Minutia, trace_len: u32) -> Result<u16> {
    let (x, y) = (m.x as i64, m.y as i64);
    let runs = neighbor_runs(skel, x, y);
    let truncated = Err(Error::TruncatedRidge { x: m.x, y: m.y });

    let mut branch_angles = Vec::with_capacity(runs.len());
    for (ri, run) in runs.iter().enumerate() {
        let entry = run_entry(run, x, y);
        // Block the minutia and every sibling branch, so the first step
        // away from a bifurcation is not mistaken for a junction.
        let mut seeds: HashSet<(i64, i64)> = HashSet::new();
        seeds.insert((x, y));
        for (rj, other) in runs.iter().enumerate() {
            if rj != ri {
                seeds.extend(other.iter().copied());
            }
        }
        let (reached, steps) = trace_ridge(skel, &seeds, entry, trace_len);
        if steps < 3 {
            return truncated;
        }
        branch_angles.push(angle_deg(reached.0 - x, reached.1 - y));
    }

    match branch_angles.len() {
        1 => Ok(branch_angles[0]),
        3 => {
            let spread = |i: usize| -> u32 {
                (0..3)
                    .filter(|&j| j != i)
                    .map(|j| ang_dist(branch_angles[i], branch_angles[j]) as u32)
                    .sum()
            };
            let spreads = [spread(0), spread(1), spread(2)];
            let max = *spreads.iter().max().expect("three branches");
            let tied: Vec<usize> = (0..3).filter(|&i| spreads[i] == max).collect();
            let stem = if tied.len() == 2 {
                // Break the tie by relative geometry only, so the choice
                // commutes with grid rotations: take the tied branch with
                // the smaller counter-clockwise angle from the third one.
                let other = (0..3).find(|i| !tied.contains(i)).expect("one untied");
                let ccw = |i: usize| {
                    (branch_angles[i] as i32 - branch_angles[other] as i32).rem_euclid(360)
                };
                if ccw(tied[0]) <= ccw(tied[1]) {
                    tied[0]
                } else {
                    tied[1]
                }
            } else {
                tied[0]
            };
            Ok(branch_angles[stem])
        }
        _ => truncated,
    }
}

/// Breadth-first distances (in moves) along ridge pixels from `start`, out
/// to `max_steps`. Optionally records parents for path recovery.
fn bfs_ridge(
    skel: &RasterImage,
    start: (i64, i64),
    max_steps: u32,
    blocked: &HashSet<(i64, i64)>,
    mut parents: Option<&mut HashMap<(i64, i64), (i64, i64)>>,
) -> HashMap<(i64, i64), u32> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(start, 0u32);
    queue.push_back(start);
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur];
        if d == max_steps {
            continue;
        }
        for (dx, dy) in NBR8 {
            let nxt = (cur.0 + dx, cur.1 + dy);
            if skel.ridge_at(nxt.0, nxt.1) == 0
                || dist.contains_key(&nxt)
                || blocked.contains(&nxt)
            {
                continue;
            }
            dist.insert(nxt, d + 1);
            if let Some(p) = parents.as_deref_mut() {
                p.insert(nxt, cur);
            }
            queue.push_back(nxt);
        }
    }
    dist
}

fn shortest_path(
    skel: &RasterImage,
    from: (i64, i64),
    to: (i64, i64),
    max_steps: u32,
    blocked: &HashSet<(i64, i64)>,
) -> Option<Vec<(i64, i64)>> {
    let mut parents = HashMap::new();
    let dist = bfs_ridge(skel, from, max_steps, blocked, Some(&mut parents));
    dist.get(&to)?;
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parents[&cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// True when any pixel within Chebyshev radius `r` of (x, y) is background
/// to the ROI or lies outside the raster.
fn near_boundary(skel: &RasterImage, roi: Option<&RoiMask>, x: i64, y: i64, r: i64) -> bool {
    for dy in -r..=r {
        for dx in -r..=r {
            let (nx, ny) = (x + dx, y + dy);
            if !skel.in_bounds(nx, ny) {
                return true;
            }
            if let Some(roi) = roi {
                if !roi.foreground_at(nx, ny) {
                    return true;
                }
            }
        }
    }
    false
}

/// Drop spurious minutiae in a fixed stage order: boundary endings, broken
/// ridges, spurs/short ridges, bridges, holes, triangles. Each stage marks
/// its victims over the survivors of the previous stage and removes them as
/// a batch, so a second application changes nothing. The output is always a
/// subset of the input list; the skeleton itself is untouched.
pub fn remove_false_minutiae(
    skel: &RasterImage,
    roi: Option<&RoiMask>,
    minutiae: &[Minutia],
    cfg: &FalseMinutiaeConfig,
) -> Vec<Minutia> {
    let mut alive: Vec<Minutia> = minutiae.to_vec();

    // (a) Endings too close to the raster or ROI boundary.
    alive.retain(|m| {
        m.kind != MinutiaType::Ending
            || !near_boundary(skel, roi, m.x as i64, m.y as i64, cfg.edge_dist as i64)
    });

    // (b) Broken ridges: facing, opposed ending pairs across a small gap.
    let opposed = |a: &Minutia, b: &Minutia| -> bool {
        let gap_sq = (a.x as f64 - b.x as f64).powi(2) + (a.y as f64 - b.y as f64).powi(2);
        if gap_sq > cfg.break_dist * cfg.break_dist {
            return false;
        }
        let back = |t: u16| (t + 180) % 360;
        if f64::from(ang_dist(a.theta, back(b.theta))) > cfg.break_angle {
            return false;
        }
        let a_to_b = angle_deg(b.x as i64 - a.x as i64, b.y as i64 - a.y as i64);
        let b_to_a = (a_to_b + 180) % 360;
        f64::from(ang_dist(a_to_b, back(a.theta))) <= cfg.break_angle
            && f64::from(ang_dist(b_to_a, back(b.theta))) <= cfg.break_angle
    };
    let mut marked = vec![false; alive.len()];
    for i in 0..alive.len() {
        for j in i + 1..alive.len() {
            if alive[i].kind == MinutiaType::Ending
                && alive[j].kind == MinutiaType::Ending
                && opposed(&alive[i], &alive[j])
            {
                marked[i] = true;
                marked[j] = true;
            }
        }
    }
    retain_unmarked(&mut alive, &marked);

    // (c) Spurs and short ridges: an ending whose ridge path reaches another
    // minutia within spur_len takes that minutia down with it.
    let position_index = |alive: &[Minutia]| -> HashMap<(i64, i64), usize> {
        alive
            .iter()
            .enumerate()
            .map(|(i, m)| ((m.x as i64, m.y as i64), i))
            .collect()
    };
    let index = position_index(&alive);
    let mut marked = vec![false; alive.len()];
    let none = HashSet::new();
    for (i, m) in alive.iter().enumerate() {
        if m.kind != MinutiaType::Ending {
            continue;
        }
        let dist = bfs_ridge(skel, (m.x as i64, m.y as i64), cfg.spur_len, &none, None);
        let reached = dist
            .iter()
            .filter_map(|(pos, &d)| {
                let &j = index.get(pos)?;
                (j != i).then_some((d, alive[j].y, alive[j].x, j))
            })
            .min();
        if let Some((_, _, _, j)) = reached {
            marked[i] = true;
            marked[j] = true;
        }
    }
    retain_unmarked(&mut alive, &marked);

    // Ridge-path distances between surviving bifurcations, used by the
    // bridge, hole and triangle stages.
    let bif_pair_dists = |alive: &[Minutia], radius: u32| -> HashMap<(usize, usize), u32> {
        let index = position_index(alive);
        let mut dists = HashMap::new();
        for (i, m) in alive.iter().enumerate() {
            if m.kind != MinutiaType::Bifurcation {
                continue;
            }
            let dist = bfs_ridge(skel, (m.x as i64, m.y as i64), radius, &none, None);
            for (pos, &d) in &dist {
                if let Some(&j) = index.get(pos) {
                    if j > i && alive[j].kind == MinutiaType::Bifurcation {
                        dists.insert((i, j), d);
                    }
                }
            }
        }
        dists
    };

    // (d) Bridges: a short connection running against the ridge flow.
    let mut marked = vec![false; alive.len()];
    for (&(i, j), &d) in &bif_pair_dists(&alive, cfg.bridge_len) {
        if d > cfg.bridge_len {
            continue;
        }
        let (a, b) = (&alive[i], &alive[j]);
        let path_angle =
            f64::from(angle_deg(b.x as i64 - a.x as i64, b.y as i64 - a.y as i64));
        if axial_dist(path_angle, axial_mean(a.theta, b.theta)) >= cfg.bridge_angle {
            marked[i] = true;
            marked[j] = true;
        }
    }
    retain_unmarked(&mut alive, &marked);

    // (e) Holes: two vertex-disjoint short paths between a bifurcation pair.
    let mut marked = vec![false; alive.len()];
    for (&(i, j), _) in &bif_pair_dists(&alive, cfg.hole_len) {
        let from = (alive[i].x as i64, alive[i].y as i64);
        let to = (alive[j].x as i64, alive[j].y as i64);
        let Some(first) = shortest_path(skel, from, to, cfg.hole_len, &none) else {
            continue;
        };
        let interior: HashSet<(i64, i64)> =
            first[1..first.len() - 1].iter().copied().collect();
        if shortest_path(skel, from, to, cfg.hole_len, &interior).is_some() {
            marked[i] = true;
            marked[j] = true;
        }
    }
    retain_unmarked(&mut alive, &marked);

    // (f) Triangles: three bifurcations pairwise joined by short paths.
    let dists = bif_pair_dists(&alive, cfg.hole_len);
    let mut marked = vec![false; alive.len()];
    let bifs: Vec<usize> = alive
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == MinutiaType::Bifurcation)
        .map(|(i, _)| i)
        .collect();
    for (a, &i) in bifs.iter().enumerate() {
        for (b, &j) in bifs.iter().enumerate().skip(a + 1) {
            for &k in bifs.iter().skip(b + 1) {
                if dists.contains_key(&(i, j))
                    && dists.contains_key(&(i, k))
                    && dists.contains_key(&(j, k))
                {
                    marked[i] = true;
                    marked[j] = true;
                    marked[k] = true;
                }
            }
        }
    }
    retain_unmarked(&mut alive, &marked);

    alive
}

fn retain_unmarked(alive: &mut Vec<Minutia>, marked: &[bool]) {
    let mut it = marked.iter();
    alive.retain(|_| !*it.next().expect("marks match survivors"));
}

/// Detection pipeline for one skeleton: find candidates, estimate their
/// directions (dropping any whose ridge is too short to trace), then strip
/// false minutiae.
pub fn extract_minutiae(
    skel: &RasterImage,
    roi: &RoiMask,
    trace_len: u32,
    cfg: &FalseMinutiaeConfig,
) -> Vec<Minutia> {
    let mut with_theta = Vec::new();
    for mut m in detect_minutiae(skel, roi) {
        match estimate_theta(skel, &m, trace_len) {
            Ok(theta) => {
                m.theta = theta;
                with_theta.push(m);
            }
            Err(_) => {}
        }
    }
    remove_false_minutiae(skel, Some(roi), &with_theta, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterKind;

    fn skel(art: &str) -> RasterImage {
        RasterImage::from_art(RasterKind::Skeleton, art)
    }

    fn full_roi(img: &RasterImage) -> RoiMask {
        RoiMask::all_foreground(img.width(), img.height())
    }

    /// Apply a neighborhood given in NBR8 circular order to a 3x3 raster.
    fn raster_with_neighbors(bits: [u8; 8]) -> RasterImage {
        let mut img = RasterImage::filled(3, 3, RasterKind::Skeleton, 0);
        img.set(1, 1, 1);
        for (i, &(dx, dy)) in NBR8.iter().enumerate() {
            if bits[i] == 1 {
                img.set((1 + dx) as usize, (1 + dy) as usize, 1);
            }
        }
        img
    }

    #[test]
    fn crossing_number_matches_known_patterns() {
        // Exactly one neighbor: ridge ending.
        let one = raster_with_neighbors([1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(crossing_number(&one, 1, 1).unwrap(), 1);
        // Three isolated branches: bifurcation.
        let three = raster_with_neighbors([1, 0, 1, 0, 1, 0, 0, 0]);
        assert_eq!(crossing_number(&three, 1, 1).unwrap(), 3);
        // Interior of a blob and an isolated pixel both give 0.
        let full = raster_with_neighbors([1; 8]);
        assert_eq!(crossing_number(&full, 1, 1).unwrap(), 0);
        let empty = raster_with_neighbors([0; 8]);
        assert_eq!(crossing_number(&empty, 1, 1).unwrap(), 0);
    }

    #[test]
    fn crossing_number_needs_an_interior_pixel() {
        let img = RasterImage::filled(3, 3, RasterKind::Skeleton, 1);
        assert!(matches!(
            crossing_number(&img, 0, 1),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            crossing_number(&img, 2, 2),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn open_segment_has_two_endings() {
        let img = skel("
            ........
            .######.
            ........
        ");
        let ms = detect_minutiae(&img, &full_roi(&img));
        assert_eq!(ms.len(), 2);
        assert!(ms.iter().all(|m| m.kind == MinutiaType::Ending));
        assert_eq!((ms[0].x, ms[0].y), (1, 1));
        assert_eq!((ms[1].x, ms[1].y), (6, 1));
    }

    #[test]
    fn y_shape_has_one_bifurcation_and_three_endings() {
        let img = skel("
            .........
            .#...#...
            ..#.#....
            ...#.....
            ...#.....
            ...#.....
            .........
        ");
        let ms = detect_minutiae(&img, &full_roi(&img));
        let bifs: Vec<_> = ms
            .iter()
            .filter(|m| m.kind == MinutiaType::Bifurcation)
            .collect();
        let ends: Vec<_> = ms.iter().filter(|m| m.kind == MinutiaType::Ending).collect();
        assert_eq!(bifs.len(), 1);
        assert_eq!((bifs[0].x, bifs[0].y), (3, 3));
        assert_eq!(ends.len(), 3);
    }

    #[test]
    fn closed_loop_has_no_minutiae() {
        let img = skel("
            ......
            ..##..
            .#..#.
            .#..#.
            ..##..
            ......
        ");
        assert!(detect_minutiae(&img, &full_roi(&img)).is_empty());
    }

    #[test]
    fn detection_respects_the_roi() {
        let img = skel("........\n.######.\n........");
        let (w, h) = (img.width(), img.height());
        // Background on the right half hides the ending at x = 6.
        let mask: Vec<bool> = (0..w * h).map(|i| i % w < 4).collect();
        let roi = RoiMask::new(w, h, 4, mask);
        let ms = detect_minutiae(&img, &roi);
        assert_eq!(ms.len(), 1);
        assert_eq!((ms[0].x, ms[0].y), (1, 1));
    }

    #[test]
    fn theta_of_vertical_ridge_points_down_the_ridge() {
        // Ending at the top; the ridge extends toward +y, so theta = 90.
        let img = skel("
            .#.
            .#.
            .#.
            .#.
            .#.
            .#.
        ");
        let m = Minutia {
            x: 1,
            y: 0,
            theta: 0,
            kind: MinutiaType::Ending,
        };
        assert_eq!(estimate_theta(&img, &m, 10).unwrap(), 90);
    }

    #[test]
    fn theta_of_symmetric_y_picks_the_stem() {
        // Stem runs toward -x; the two arms leave at roughly 45 and 315
        // degrees. Expected spread (hand-derived): stem 270 vs arms 225.
        let img = skel("
            ...........#
            ..........#.
            .........#..
            ########X...
            .........#..
            ..........#.
            ...........#
        ");
        let m = Minutia {
            x: 8,
            y: 3,
            theta: 0,
            kind: MinutiaType::Bifurcation,
        };
        // The X above marks the bifurcation; make it ridge.
        let mut img = img;
        img.set(8, 3, 1);
        assert_eq!(estimate_theta(&img, &m, 10).unwrap(), 180);
    }

    #[test]
    fn theta_fails_on_a_stub() {
        let img = skel("
            ....
            .##.
            ....
        ");
        let m = Minutia {
            x: 1,
            y: 1,
            theta: 0,
            kind: MinutiaType::Ending,
        };
        assert!(matches!(
            estimate_theta(&img, &m, 10),
            Err(Error::TruncatedRidge { .. })
        ));
    }

    #[test]
    fn trace_follows_corners_without_stopping() {
        // An L-bend: the corner produces two candidates once, and the
        // 4-adjacent one must be taken so the trace continues.
        let img = skel("
            .....
            .#...
            .#...
            .####
            .....
        ");
        let m = Minutia {
            x: 1,
            y: 1,
            theta: 0,
            kind: MinutiaType::Ending,
        };
        // 10-step budget, path has 5 moves; reached pixel is (4, 3).
        let theta = estimate_theta(&img, &m, 10).unwrap();
        assert_eq!(theta, angle_deg(3, 2));
    }

    fn thetas(img: &RasterImage, ms: Vec<Minutia>) -> Vec<Minutia> {
        ms.into_iter()
            .map(|mut m| {
                m.theta = estimate_theta(img, &m, 10).unwrap();
                m
            })
            .collect()
    }

    fn positions(ms: &[Minutia]) -> Vec<(u32, u32)> {
        ms.iter().map(|m| (m.x, m.y)).collect()
    }

    #[test]
    fn boundary_stage_drops_edge_endings_only() {
        let mut img = RasterImage::filled(40, 40, RasterKind::Skeleton, 0);
        // Horizontal ridge from the left edge to mid-raster at y = 20.
        for x in 0..=20 {
            img.set(x, 20, 1);
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        // Only (20, 20) is interior and detectable; (0, 20) sits on the
        // border. Add a second ridge whose both endings are interior.
        assert_eq!(positions(&ms), vec![(20, 20)]);
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert_eq!(positions(&kept), vec![(20, 20)]);

        // An ending within 8 px of the border goes away.
        let mut img2 = RasterImage::filled(40, 40, RasterKind::Skeleton, 0);
        for x in 5..=25 {
            img2.set(x, 20, 1);
        }
        let ms2 = thetas(&img2, detect_minutiae(&img2, &full_roi(&img2)));
        assert_eq!(positions(&ms2), vec![(5, 20), (25, 20)]);
        let kept2 = remove_false_minutiae(&img2, None, &ms2, &FalseMinutiaeConfig::default());
        assert_eq!(positions(&kept2), vec![(25, 20)]);
    }

    #[test]
    fn boundary_stage_uses_the_roi_edge() {
        let mut img = RasterImage::filled(40, 40, RasterKind::Skeleton, 0);
        for x in 12..=28 {
            img.set(x, 20, 1);
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        assert_eq!(ms.len(), 2);
        // Mask out the right quarter: the ending at (28, 20) is now within
        // 8 px of ROI background.
        let (w, h) = (img.width(), img.height());
        let mask: Vec<bool> = (0..w * h).map(|i| i % w < 32).collect();
        let roi = RoiMask::new(w, h, 8, mask);
        let kept = remove_false_minutiae(&img, Some(&roi), &ms, &FalseMinutiaeConfig::default());
        assert_eq!(positions(&kept), vec![(12, 20)]);
    }

    #[test]
    fn broken_ridge_pair_is_removed() {
        // Two collinear segments with a 4 px gap, all endings interior.
        let mut img = RasterImage::filled(40, 40, RasterKind::Skeleton, 0);
        for x in 10..=18 {
            img.set(x, 20, 1);
        }
        for x in 22..=30 {
            img.set(x, 20, 1);
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        assert_eq!(ms.len(), 4);
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert_eq!(positions(&kept), vec![(10, 20), (30, 20)]);
    }

    #[test]
    fn far_apart_endings_survive_the_break_stage() {
        // Segments longer than spur_len so the spur stage ignores them, and
        // a 9 px gap wider than break_dist so the break stage does too.
        let mut img = RasterImage::filled(60, 40, RasterKind::Skeleton, 0);
        for x in 10..=22 {
            img.set(x, 20, 1);
        }
        for x in 31..=43 {
            img.set(x, 20, 1);
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn short_isolated_ridge_is_removed_whole() {
        let mut img = RasterImage::filled(40, 40, RasterKind::Skeleton, 0);
        for x in 15..=20 {
            img.set(x, 12, 1); // 5 moves end to end, under spur_len
        }
        for x in 10..=30 {
            img.set(x, 28, 1); // long ridge stays
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert_eq!(positions(&kept), vec![(10, 28), (30, 28)]);
    }

    #[test]
    fn spur_takes_its_bifurcation_down() {
        // Long ridge with a 5-step spur hanging off (20, 20).
        let mut img = RasterImage::filled(40, 40, RasterKind::Skeleton, 0);
        for x in 9..=31 {
            img.set(x, 20, 1);
        }
        for k in 1..=5 {
            img.set(20, 20 - k, 1);
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        // Endings at (9,20), (31,20), (20,15); bifurcation at (20,20).
        assert_eq!(ms.len(), 4);
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert_eq!(positions(&kept), vec![(9, 20), (31, 20)]);
    }

    #[test]
    fn bridge_between_parallel_ridges_is_removed() {
        let mut img = RasterImage::filled(60, 40, RasterKind::Skeleton, 0);
        for x in 10..=50 {
            img.set(x, 15, 1);
            img.set(x, 22, 1);
        }
        for y in 15..=22 {
            img.set(20, y, 1); // 7-step rung against the flow
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        assert_eq!(ms.len(), 6);
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert_eq!(
            positions(&kept),
            vec![(10, 15), (50, 15), (10, 22), (50, 22)]
        );
    }

    #[test]
    fn hole_pair_is_removed() {
        // Stems reach the border so stage (a) eats their endings, leaving
        // only the two loop bifurcations for the hole stage.
        let mut img = RasterImage::filled(41, 41, RasterKind::Skeleton, 0);
        for x in 5..=15 {
            img.set(x, 20, 1);
        }
        for x in 25..=35 {
            img.set(x, 20, 1);
        }
        for k in 1..=5 {
            img.set(15 + k, 20 - k, 1); // upper-left arc
            img.set(25 - k, 20 - k, 1); // upper-right arc
            img.set(15 + k, 20 + k, 1); // lower-left arc
            img.set(25 - k, 20 + k, 1); // lower-right arc
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert!(kept.is_empty(), "survivors: {:?}", positions(&kept));
    }

    #[test]
    fn triangle_triple_is_removed() {
        let mut img = RasterImage::filled(40, 40, RasterKind::Skeleton, 0);
        // Vertices A(12,12), B(26,12), C(12,26); rectilinear edges 14 long,
        // hypotenuse 15 via one orthogonal step then a diagonal run.
        for x in 12..=26 {
            img.set(x, 12, 1); // A-B
        }
        for y in 12..=26 {
            img.set(12, y, 1); // A-C
        }
        img.set(26, 13, 1);
        for k in 1..=13 {
            img.set(26 - k, 13 + k, 1); // down to (13, 26)
        }
        // Stems out to near the border; their endings die in stage (a).
        for k in 1..=8 {
            img.set(12 - k, 12 - k, 1); // A stem, ending (4, 4)
            img.set(26 + k, 12, 1); // B stem, ending (34, 12)
            img.set(12, 26 + k, 1); // C stem, ending (12, 34)
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        let bif_count = ms
            .iter()
            .filter(|m| m.kind == MinutiaType::Bifurcation)
            .count();
        assert_eq!(bif_count, 3, "fixture: {:?}", positions(&ms));
        let kept = remove_false_minutiae(&img, None, &ms, &FalseMinutiaeConfig::default());
        assert!(kept.is_empty(), "survivors: {:?}", positions(&kept));
    }

    #[test]
    fn removal_is_idempotent_and_shrinking() {
        let mut img = RasterImage::filled(60, 40, RasterKind::Skeleton, 0);
        for x in 10..=50 {
            img.set(x, 15, 1);
            img.set(x, 22, 1);
        }
        for y in 15..=22 {
            img.set(30, y, 1);
        }
        for x in 20..=24 {
            img.set(x, 30, 1);
        }
        let ms = thetas(&img, detect_minutiae(&img, &full_roi(&img)));
        let cfg = FalseMinutiaeConfig::default();
        let once = remove_false_minutiae(&img, None, &ms, &cfg);
        let twice = remove_false_minutiae(&img, None, &once, &cfg);
        assert_eq!(once, twice);
        let input: HashSet<_> = ms.iter().collect();
        assert!(once.iter().all(|m| input.contains(m)));
    }
}
