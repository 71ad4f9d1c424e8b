//! Deterministic synthetic ridge-pattern generator with known ground truth.
//!
//! Rasters are oriented sinusoidal bands rendered from a smooth phase field.
//! Each planted minutia is a phase dislocation: winding the phase once around
//! a core forces one band to terminate there. A dislocation renders as a
//! clean ridge termination when the phase at the core puts the center of a
//! dark band along the local band tangent; at other core phases the feature
//! smears into an off-center tangle, so the planner snaps every core to the
//! nearest clean-termination phase and [`refine_sites`] pre-adjusts site
//! positions so the snap is small. The planner also sets each core back a
//! quarter period out of its band, because thinning retracts a blunt band
//! tip to the cap center; together these land the detected tip within a
//! pixel or two of the planted coordinates. Because every planted site has
//! known coordinates, the generator doubles as a ground-truth oracle for the
//! detection pipeline, and synthetic galleries stand in for real datasets in
//! the acceptance suite.
//!
//! All realized minutiae are ridge terminations: a cosine band field cannot
//! form an isolated Y-merge from a unit dislocation (the merged state spans
//! three band widths and its skeleton junction lands off-core), and nothing
//! downstream distinguishes minutia kinds — feature tuples are built from
//! crossing counts and distances only. The ground truth returned by
//! [`generate`] records the realized kinds.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{extract_template, TemplateKey};
use crate::gallery::{
    crop_grid, save_gallery, template_filename, CropSpecRecord, GalleryIndex, Manifest,
};
use crate::minutiae::MinutiaType;
use crate::raster::{RasterImage, RasterKind};

/// Minimum distance from any planted site to the raster border.
pub const PLANT_BORDER_INSET: u32 = 18;
/// Minimum pairwise distance between planted sites.
pub const PLANT_MIN_SPACING: f64 = 12.0;

/// Standard deviation (pixels) of the per-site phase adjustment that trues
/// up the residual tip-phase error at a core.
const STEER_SIGMA: f64 = 4.0;
/// Sinusoid amplitude around the mid gray level.
const RIDGE_AMPLITUDE: f64 = 90.0;

/// A ground-truth minutia to render into the raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedMinutia {
    pub x: u32,
    pub y: u32,
    pub kind: MinutiaType,
}

/// Full description of one synthetic raster. Rendering is a pure function
/// of this value.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    /// Center-to-center ridge spacing in pixels.
    pub ridge_period: f64,
    /// Seed for the smooth base field (orientation, curvature, phase).
    pub orientation_seed: u64,
    pub planted: Vec<PlantedMinutia>,
    /// Additive noise strength in [0, 1].
    pub noise_level: f64,
    /// Seed for the noise stream alone, so repeated impressions of one
    /// finger can share the base field while re-drawing noise.
    pub noise_seed: u64,
}

impl SynthSpec {
    pub fn new(width: u32, height: u32, orientation_seed: u64) -> Self {
        SynthSpec {
            width,
            height,
            ridge_period: 9.0,
            orientation_seed,
            planted: Vec::new(),
            noise_level: 0.0,
            noise_seed: orientation_seed,
        }
    }

    /// Check the placement rules: sites inside the border inset, pairwise
    /// spacing respected, parameters in range.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::SpecInfeasible(msg));
        if self.width == 0 || self.height == 0 {
            return fail("raster dimensions must be positive".into());
        }
        if !(3.0..=60.0).contains(&self.ridge_period) {
            return fail(format!("ridge period {} outside [3, 60]", self.ridge_period));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return fail(format!("noise level {} outside [0, 1]", self.noise_level));
        }
        let inset = PLANT_BORDER_INSET;
        for p in &self.planted {
            let inside = p.x >= inset
                && p.y >= inset
                && p.x + inset < self.width
                && p.y + inset < self.height;
            if !inside {
                return fail(format!(
                    "site ({}, {}) closer than {inset} px to the border",
                    p.x, p.y
                ));
            }
        }
        for (i, a) in self.planted.iter().enumerate() {
            for b in &self.planted[i + 1..] {
                let (dx, dy) = (f64::from(a.x) - f64::from(b.x), f64::from(a.y) - f64::from(b.y));
                if dx * dx + dy * dy < PLANT_MIN_SPACING * PLANT_MIN_SPACING {
                    return fail(format!(
                        "sites ({}, {}) and ({}, {}) closer than {} px",
                        a.x, a.y, b.x, b.y, PLANT_MIN_SPACING
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Smooth base phase field: straight bands plus one long-wavelength bend.
struct BaseField {
    kx: f64,
    ky: f64,
    bend_amp: f64,
    bend_kx: f64,
    bend_ky: f64,
    bend_phase: f64,
}

impl BaseField {
    fn from_seed(spec: &SynthSpec) -> BaseField {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.orientation_seed);
        let theta = rng.gen_range(0.0..PI);
        let kappa = 2.0 * PI / spec.ridge_period;
        let extent = f64::from(spec.width.max(spec.height));
        let bend_wavelength = rng.gen_range(1.5..2.5) * extent;
        let bend_dir = rng.gen_range(0.0..PI);
        let bend_k = 2.0 * PI / bend_wavelength;
        BaseField {
            kx: kappa * theta.cos(),
            ky: kappa * theta.sin(),
            bend_amp: rng.gen_range(2.0..5.0),
            bend_kx: bend_k * bend_dir.cos(),
            bend_ky: bend_k * bend_dir.sin(),
            bend_phase: rng.gen_range(0.0..2.0 * PI),
        }
    }

    fn phase(&self, x: f64, y: f64) -> f64 {
        self.kx * x + self.ky * y
            + self.bend_amp * (self.bend_kx * x + self.bend_ky * y + self.bend_phase).sin()
    }

    fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let c = self.bend_amp * (self.bend_kx * x + self.bend_ky * y + self.bend_phase).cos();
        (self.kx + c * self.bend_kx, self.ky + c * self.bend_ky)
    }
}

/// One dislocation ready to render: core position, winding sign, and the
/// local phase adjustment that trues up its tip phase.
struct Dislocation {
    x: f64,
    y: f64,
    sign: f64,
    steer: f64,
}

fn wrap_to_pi(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Winding sign per site index: alternating, so charges cancel pairwise and
/// the far field keeps the base ridge spacing.
fn winding_sign(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Phase at `at` contributed by the base field and every winding except
/// `skip`'s own singular term.
fn core_phase(
    base: &BaseField,
    at: (f64, f64),
    windings: &[(f64, f64)],
    signs: &[f64],
    skip: usize,
) -> f64 {
    let (cx, cy) = at;
    let mut phase = base.phase(cx, cy);
    for (j, &(ox, oy)) in windings.iter().enumerate() {
        if j != skip {
            phase += signs[j] * (cy - oy).atan2(cx - ox);
        }
    }
    phase
}

/// Gradient at `at` of the non-singular phase (base field plus every
/// winding except `skip`'s) — the local band normal direction.
fn local_grad(
    base: &BaseField,
    at: (f64, f64),
    windings: &[(f64, f64)],
    signs: &[f64],
    skip: usize,
) -> (f64, f64) {
    let (x, y) = at;
    let (mut gx, mut gy) = base.grad(x, y);
    for (j, &(ox, oy)) in windings.iter().enumerate() {
        if j != skip {
            let (dx, dy) = (x - ox, y - oy);
            let r2 = dx * dx + dy * dy;
            gx += signs[j] * -dy / r2;
            gy += signs[j] * dx / r2;
        }
    }
    (gx, gy)
}

/// The skeleton endpoint of a terminating band sits about a quarter period
/// inside the band body from the dislocation core: the binary tip is a
/// blunt cap whose boundary passes through the core, and thinning retracts
/// the endpoint to roughly the cap's center. Each winding core is therefore
/// set back by this fraction of the ridge period, out of the band, so the
/// detected tip lands on the planted coordinate instead.
const TIP_SETBACK_FRAC: f64 = 0.25;

/// Where the windings actually go for a set of intended tip positions, plus
/// the residual phase error to steer away at each core.
struct SitePlan {
    signs: Vec<f64>,
    cores: Vec<(f64, f64)>,
    /// Signed phase error at each core relative to its nearer clean-tip
    /// phase. A dark band tips cleanly at the core when the phase there
    /// equals -sign * angle(band tangent), or that plus a half turn for the
    /// tip pointing the other way; anywhere else the feature smears.
    errs: Vec<f64>,
    /// Non-singular phase gradient at each core — the Newton direction for
    /// zeroing `errs` by moving a site.
    grads: Vec<(f64, f64)>,
}

fn plan_sites(base: &BaseField, intended: &[(f64, f64)], period: f64) -> SitePlan {
    let n = intended.len();
    let signs: Vec<f64> = (0..n).map(winding_sign).collect();
    let setback = period * TIP_SETBACK_FRAC;
    let mut cores: Vec<(f64, f64)> = intended.to_vec();
    let mut errs = vec![0.0; n];
    let mut grads = vec![(0.0, 0.0); n];
    // The setback direction depends on the local band tangent and on which
    // of the two tip phases is nearer, and both move (slightly) with the
    // cores; two fixed-point sweeps settle them, the third just evaluates.
    for sweep in 0..3 {
        for i in 0..n {
            let (gx, gy) = local_grad(base, cores[i], &cores, &signs, i);
            let gn = (gx * gx + gy * gy).sqrt().max(1e-9);
            let at_core = wrap_to_pi(core_phase(base, cores[i], &cores, &signs, i));
            // Band tangent = normal rotated a quarter turn: (-gy, gx).
            let tangent_angle = gx.atan2(-gy);
            let t1 = wrap_to_pi(-signs[i] * tangent_angle);
            let e1 = wrap_to_pi(t1 - at_core);
            let e2 = wrap_to_pi(t1 + PI - at_core);
            // Unit direction from the core into the band body, for the
            // nearer of the two tip phases.
            let (err, body) = if e1.abs() <= e2.abs() {
                (e1, (-gy / gn, gx / gn))
            } else {
                (e2, (gy / gn, -gx / gn))
            };
            errs[i] = err;
            grads[i] = (gx, gy);
            if sweep < 2 {
                cores[i] = (
                    intended[i].0 - setback * body.0,
                    intended[i].1 - setback * body.1,
                );
            }
        }
    }
    SitePlan {
        signs,
        cores,
        errs,
        grads,
    }
}

/// Place the winding cores for a spec's sites and record the ground truth.
/// All realized minutiae are terminations at the planted coordinates — see
/// the module docs.
fn plan_dislocations(
    spec: &SynthSpec,
    base: &BaseField,
) -> (Vec<Dislocation>, Vec<PlantedMinutia>) {
    let intended: Vec<(f64, f64)> = spec
        .planted
        .iter()
        .map(|p| (f64::from(p.x), f64::from(p.y)))
        .collect();
    let plan = plan_sites(base, &intended, spec.ridge_period);
    let sites = (0..intended.len())
        .map(|i| Dislocation {
            x: plan.cores[i].0,
            y: plan.cores[i].1,
            sign: plan.signs[i],
            steer: plan.errs[i],
        })
        .collect();
    let truth = spec
        .planted
        .iter()
        .map(|p| PlantedMinutia {
            x: p.x,
            y: p.y,
            kind: MinutiaType::Ending,
        })
        .collect();
    (sites, truth)
}

/// Maximum distance a site may drift during [`refine_sites`].
const REFINE_RADIUS: f64 = 5.0;

/// Nudge each planted site (by at most [`REFINE_RADIUS`] pixels) onto a
/// spot where the field realizes a clean band termination exactly there,
/// so the detected minutia lands within a pixel or two of the planted
/// coordinates. A site whose adjustment would break the spacing rules is
/// left where it was (its feature then forms slightly off-center). The
/// result is validated.
pub fn refine_sites(spec: &SynthSpec) -> Result<SynthSpec> {
    spec.validate()?;
    let base = BaseField::from_seed(spec);
    let orig: Vec<(f64, f64)> = spec
        .planted
        .iter()
        .map(|p| (f64::from(p.x), f64::from(p.y)))
        .collect();
    let mut pos = orig.clone();
    let inset = f64::from(PLANT_BORDER_INSET);
    let (max_x, max_y) = (
        f64::from(spec.width) - 1.0 - inset,
        f64::from(spec.height) - 1.0 - inset,
    );
    for _ in 0..6 {
        let plan = plan_sites(&base, &pos, spec.ridge_period);
        if plan.errs.iter().all(|e| e.abs() < 0.2) {
            break;
        }
        for i in 0..pos.len() {
            // Newton step along the local phase gradient; the core moves in
            // lockstep with the site, so the phase at the core changes by
            // the full step.
            let (gx, gy) = plan.grads[i];
            let g2 = gx * gx + gy * gy;
            if g2 < 1e-12 {
                continue;
            }
            let (x, y) = pos[i];
            let (mut nx, mut ny) = (x + plan.errs[i] * gx / g2, y + plan.errs[i] * gy / g2);
            // Stay near the requested coordinates and inside the border.
            let (dx, dy) = (nx - orig[i].0, ny - orig[i].1);
            let drift = (dx * dx + dy * dy).sqrt();
            if drift > REFINE_RADIUS {
                nx = orig[i].0 + dx * REFINE_RADIUS / drift;
                ny = orig[i].1 + dy * REFINE_RADIUS / drift;
            }
            pos[i] = (nx.clamp(inset, max_x), ny.clamp(inset, max_y));
        }
    }
    let mut refined = spec.clone();
    for (i, p) in refined.planted.iter_mut().enumerate() {
        p.x = pos[i].0.round() as u32;
        p.y = pos[i].1.round() as u32;
    }
    // Back out any adjustment that squeezed a pair below the spacing floor.
    let spacing_sq = PLANT_MIN_SPACING * PLANT_MIN_SPACING;
    loop {
        let mut reverted = false;
        for i in 0..refined.planted.len() {
            for j in i + 1..refined.planted.len() {
                let (a, b) = (refined.planted[i], refined.planted[j]);
                let (dx, dy) = (
                    f64::from(a.x) - f64::from(b.x),
                    f64::from(a.y) - f64::from(b.y),
                );
                if dx * dx + dy * dy < spacing_sq {
                    refined.planted[i] = spec.planted[i];
                    refined.planted[j] = spec.planted[j];
                    reverted = true;
                }
            }
        }
        if !reverted {
            break;
        }
    }
    refined.validate()?;
    Ok(refined)
}

/// Render the raster described by `spec`. Deterministic: the same spec
/// always produces bit-identical pixels. Returns the raster together with
/// the ground truth it embeds: one realized termination per planted site,
/// at the planted coordinates.
pub fn generate(spec: &SynthSpec) -> Result<(RasterImage, Vec<PlantedMinutia>)> {
    spec.validate()?;
    let base = BaseField::from_seed(spec);
    let (sites, truth) = plan_dislocations(spec, &base);
    let (w, h) = (spec.width as usize, spec.height as usize);
    // 3 sigma of steering reach; beyond it the bump is under 2% of its peak.
    let steer_cutoff_sq = (3.0 * STEER_SIGMA) * (3.0 * STEER_SIGMA);

    let mut noise = vec![0.0f64; if spec.noise_level > 0.0 { w * h } else { 0 }];
    if spec.noise_level > 0.0 {
        let amp = spec.noise_level * 128.0;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
        for v in &mut noise {
            *v = rng.gen_range(-amp..=amp);
        }
    }

    let mut pixels = vec![0u8; w * h];
    pixels
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(row, out)| {
            let y = row as f64;
            for (col, px) in out.iter_mut().enumerate() {
                let x = col as f64;
                let mut psi = base.phase(x, y);
                for s in &sites {
                    let (dx, dy) = (x - s.x, y - s.y);
                    psi += s.sign * dy.atan2(dx);
                    let r2 = dx * dx + dy * dy;
                    if r2 < steer_cutoff_sq {
                        psi += s.steer * (-r2 / (2.0 * STEER_SIGMA * STEER_SIGMA)).exp();
                    }
                }
                let mut v = 128.0 - RIDGE_AMPLITUDE * psi.cos();
                if !noise.is_empty() {
                    v += noise[row * w + col];
                }
                *px = v.round().clamp(0.0, 255.0) as u8;
            }
        });
    Ok((RasterImage::new(w, h, RasterKind::Grayscale, pixels), truth))
}

/// Shape of a generated dataset: `subjects` fingers, `impressions` captures
/// each, rendered at `width`x`height` and cropped per the pipeline config.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub subjects: u32,
    pub impressions: u32,
    /// Master seed; every subject's field and every impression's noise
    /// stream derive from it.
    pub seed: u64,
    pub noise_level: f64,
    pub width: u32,
    pub height: u32,
    /// Give these two subjects the same base field and planted sites — the
    /// positive control for the MasterPrint auditor.
    pub shared_field_pair: Option<(u32, u32)>,
    /// Rotate ridge periods across subjects to push their feature
    /// distributions apart (the negative control).
    pub distinct_periods: bool,
}

impl DatasetSpec {
    pub fn new(subjects: u32, impressions: u32, seed: u64) -> Self {
        DatasetSpec {
            subjects,
            impressions,
            seed,
            noise_level: 0.0,
            width: 388,
            height: 374,
            shared_field_pair: None,
            distinct_periods: true,
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix-style avalanche over (seed, a, b).
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Jittered-grid site layout covering the raster interior. The pitch and
/// jitter are chosen so the spacing invariants hold by construction.
fn planted_layout(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Vec<PlantedMinutia> {
    const PITCH: u32 = 27;
    const JITTER: i64 = 2;
    let margin = PLANT_BORDER_INSET + (JITTER as u32) + 1;
    let mut out = Vec::new();
    let mut y = margin;
    while y + margin <= height {
        let mut x = margin;
        while x + margin <= width {
            let jx = rng.gen_range(-JITTER..=JITTER);
            let jy = rng.gen_range(-JITTER..=JITTER);
            let kind = if rng.gen_bool(0.5) {
                MinutiaType::Ending
            } else {
                MinutiaType::Bifurcation
            };
            out.push(PlantedMinutia {
                x: (x as i64 + jx) as u32,
                y: (y as i64 + jy) as u32,
                kind,
            });
            x += PITCH;
        }
        y += PITCH;
    }
    out
}

/// Base identity of one synthetic finger: everything impressions share.
fn finger_spec(ds: &DatasetSpec, subject: u32) -> Result<SynthSpec> {
    let identity = match ds.shared_field_pair {
        Some((a, b)) if subject == b => a,
        _ => subject,
    };
    let field_seed = mix(ds.seed, u64::from(identity), 0);
    let mut spec = SynthSpec::new(ds.width, ds.height, field_seed);
    if ds.distinct_periods {
        spec.ridge_period = 7.0 + f64::from(identity % 5);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(ds.seed, u64::from(identity), 1));
    spec.planted = planted_layout(&mut rng, ds.width, ds.height);
    spec.noise_level = ds.noise_level;
    refine_sites(&spec)
}

/// Render a dataset, enroll every crop, and write the gallery (manifest,
/// templates, and source PGMs) under `out`. Partials that fail quality
/// gates are skipped and noted in the manifest.
pub fn make_synthetic_dataset(ds: &DatasetSpec, cfg: &Config, out: &Path) -> Result<GalleryIndex> {
    if ds.subjects == 0 || ds.impressions == 0 {
        return Err(Error::SpecInfeasible(
            "need at least one subject and one impression".into(),
        ));
    }
    let crop = cfg.crop_spec();
    let sources = out.join("sources");
    std::fs::create_dir_all(&sources).map_err(|e| Error::io(&sources, e))?;

    let mut manifest = Manifest {
        subjects: ds.subjects,
        fingers_per_subject: 1,
        impressions_per_finger: ds.impressions,
        partials_per_print: crop.rows * crop.cols,
        crop_spec: CropSpecRecord {
            rows: crop.rows,
            cols: crop.cols,
            crop_w: crop.crop_w,
            crop_h: crop.crop_h,
            stride_x: 0,
            stride_y: 0,
            overlap_x: 0.0,
            overlap_y: 0.0,
        },
        source_dataset_name: "synthetic".into(),
        skipped: Vec::new(),
    };

    let mut entries = Vec::new();
    for subject in 1..=ds.subjects {
        let mut spec = finger_spec(ds, subject)?;
        for impression in 1..=ds.impressions {
            spec.noise_seed = mix(ds.seed, u64::from(subject), 0x1000 + u64::from(impression));
            let (full, _) = generate(&spec)?;
            full.write_pgm(&sources.join(format!("{subject}_{impression}.pgm")))?;
            let grid = crop_grid(&full, &crop)?;
            manifest.crop_spec.stride_x = grid.stride_x;
            manifest.crop_spec.stride_y = grid.stride_y;
            manifest.crop_spec.overlap_x = grid.overlap_x;
            manifest.crop_spec.overlap_y = grid.overlap_y;
            for (row, col, img) in &grid.crops {
                let key = TemplateKey {
                    subject,
                    finger: 1,
                    impression,
                    crop_row: *row,
                    crop_col: *col,
                };
                match extract_template(img, cfg, key) {
                    Ok(t) => entries.push(t),
                    Err(
                        e @ (Error::NotEnrollable { .. }
                        | Error::TooFewMinutiae { .. }
                        | Error::EmptyRoi),
                    ) => {
                        manifest
                            .skipped
                            .push(format!("{}: {}", template_filename(&key), e.code()));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let mut index = GalleryIndex::new(manifest);
    for t in entries {
        index.enroll(t)?;
    }
    save_gallery(&index, out)?;
    Ok(index)
}
