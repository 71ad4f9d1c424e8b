//! Partial-print dataset handling: cropping full prints into overlapping
//! grids, template file naming and persistence, and the enrolled gallery
//! store that identification runs against.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Template, TemplateKey, ENROLL_MIN_TUPLES};
use crate::raster::RasterImage;

/// Grid geometry for slicing a full print into partials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    pub rows: u32,
    pub cols: u32,
    pub crop_w: u32,
    pub crop_h: u32,
}

/// The crops of one full print plus the geometry actually used.
#[derive(Debug, Clone)]
pub struct CropGrid {
    /// (row, col, image) in row-major order.
    pub crops: Vec<(u32, u32, RasterImage)>,
    pub stride_x: u32,
    pub stride_y: u32,
    /// Fraction of crop width shared by horizontally adjacent crops.
    pub overlap_x: f64,
    /// Fraction of crop height shared by vertically adjacent crops.
    pub overlap_y: f64,
}

fn stride(extent: u32, crop: u32, cells: u32) -> Option<u32> {
    if crop > extent {
        return None;
    }
    if cells <= 1 {
        return Some(0);
    }
    let s = (extent - crop) / (cells - 1);
    (s > 0).then_some(s)
}

/// Slice a full raster into a uniform spanning grid of crops. The stride
/// is the largest uniform spacing that keeps every crop inside the raster;
/// a grid that cannot fit (or would stack crops on top of each other) is
/// rejected.
pub fn crop_grid(full: &RasterImage, spec: &CropSpec) -> Result<CropGrid> {
    let too_large = || Error::SpecTooLarge {
        rows: spec.rows,
        cols: spec.cols,
        crop_w: spec.crop_w,
        crop_h: spec.crop_h,
        width: full.width(),
        height: full.height(),
    };
    if spec.rows == 0 || spec.cols == 0 || spec.crop_w == 0 || spec.crop_h == 0 {
        return Err(too_large());
    }
    let stride_x = stride(full.width() as u32, spec.crop_w, spec.cols).ok_or_else(too_large)?;
    let stride_y = stride(full.height() as u32, spec.crop_h, spec.rows).ok_or_else(too_large)?;
    let mut crops = Vec::with_capacity((spec.rows * spec.cols) as usize);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let (x0, y0) = ((c * stride_x) as usize, (r * stride_y) as usize);
            crops.push((
                r,
                c,
                full.window(x0, y0, spec.crop_w as usize, spec.crop_h as usize),
            ));
        }
    }
    Ok(CropGrid {
        crops,
        stride_x,
        stride_y,
        // Negative when the stride exceeds the crop size, i.e. the grid
        // leaves gaps between neighboring crops.
        overlap_x: (f64::from(spec.crop_w) - f64::from(stride_x)) / f64::from(spec.crop_w),
        overlap_y: (f64::from(spec.crop_h) - f64::from(stride_y)) / f64::from(spec.crop_h),
    })
}

/// Crop geometry as recorded in the gallery manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CropSpecRecord {
    pub rows: u32,
    pub cols: u32,
    pub crop_w: u32,
    pub crop_h: u32,
    pub stride_x: u32,
    pub stride_y: u32,
    pub overlap_x: f64,
    pub overlap_y: f64,
}

/// Dataset shape descriptor stored alongside the templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Number of subjects.
    #[serde(rename = "N")]
    pub subjects: u32,
    /// Fingers per subject.
    #[serde(rename = "J")]
    pub fingers_per_subject: u32,
    /// Impressions per finger.
    #[serde(rename = "K")]
    pub impressions_per_finger: u32,
    /// Partials per full print.
    #[serde(rename = "L")]
    pub partials_per_print: u32,
    #[serde(rename = "cropSpec")]
    pub crop_spec: CropSpecRecord,
    #[serde(rename = "sourceDatasetName")]
    pub source_dataset_name: String,
    /// Partials that could not be enrolled, with reasons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

impl Manifest {
    /// Full prints per subject.
    pub fn prints_per_subject(&self) -> u32 {
        self.fingers_per_subject * self.impressions_per_finger
    }
}

/// An enrolled template store, frozen before use by identification.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryIndex {
    pub manifest: Manifest,
    pub entries: BTreeMap<TemplateKey, Template>,
}

impl GalleryIndex {
    pub fn new(manifest: Manifest) -> Self {
        GalleryIndex {
            manifest,
            entries: BTreeMap::new(),
        }
    }

    /// Insert an enrollable template; a duplicate key replaces the old
    /// entry, which is returned so the caller can warn about it.
    pub fn enroll(&mut self, t: Template) -> Result<Option<Template>> {
        if t.tuples.len() < ENROLL_MIN_TUPLES {
            return Err(Error::NotEnrollable {
                good: t.tuples.len(),
                min: ENROLL_MIN_TUPLES,
            });
        }
        Ok(self.entries.insert(t.key(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Canonical file name for a template.
pub fn template_filename(key: &TemplateKey) -> String {
    format!(
        "S{}_F{}_I{}_R{}C{}.tpl.json",
        key.subject, key.finger, key.impression, key.crop_row, key.crop_col
    )
}

/// Parse a canonical template file name back into its key.
pub fn parse_template_filename(name: &str) -> Option<TemplateKey> {
    let stem = name.strip_suffix(".tpl.json")?;
    let mut parts = stem.split('_');
    let subject = parts.next()?.strip_prefix('S')?.parse().ok()?;
    let finger = parts.next()?.strip_prefix('F')?.parse().ok()?;
    let impression = parts.next()?.strip_prefix('I')?.parse().ok()?;
    let rowcol = parts.next()?.strip_prefix('R')?;
    let (row, col) = rowcol.split_once('C')?;
    if parts.next().is_some() {
        return None;
    }
    Some(TemplateKey {
        subject,
        finger,
        impression,
        crop_row: row.parse().ok()?,
        crop_col: col.parse().ok()?,
    })
}

/// Parse source image names of the form `<finger>_<impression>.<ext>`.
pub fn parse_source_filename(name: &str) -> Option<(u32, u32)> {
    let stem = ["tif", "tiff", "png", "pgm"]
        .iter()
        .find_map(|ext| name.strip_suffix(&format!(".{ext}")))?;
    let (finger, impression) = stem.split_once('_')?;
    Some((finger.parse().ok()?, impression.parse().ok()?))
}

/// Schema and invariant checks applied to every template read from disk.
fn validate_template(t: &Template) -> std::result::Result<(), String> {
    if t.tuples.len() < ENROLL_MIN_TUPLES {
        return Err(format!(
            "only {} good tuples, need {}",
            t.tuples.len(),
            ENROLL_MIN_TUPLES
        ));
    }
    for (i, u) in t.tuples.iter().enumerate() {
        if u.mq != 1 {
            return Err(format!("tuple {i} has mq {} (stored tuples must be 1)", u.mq));
        }
        for &c in &u.rcr {
            if c < 0 {
                return Err(format!("tuple {i} has a truncated axis but mq 1"));
            }
            if c > 9 {
                return Err(format!("tuple {i} has impossible axis count {c}"));
            }
        }
        if !(u.dsq[0] <= u.dsq[1] && u.dsq[1] <= u.dsq[2]) {
            return Err(format!("tuple {i} distances not ascending"));
        }
    }
    for (i, m) in t.minutiae.iter().enumerate() {
        if m.theta >= 360 {
            return Err(format!("minutia {i} direction {} out of range", m.theta));
        }
    }
    Ok(())
}

/// Write the manifest and one file per template into `dir`.
pub fn save_gallery(g: &GalleryIndex, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let manifest =
        serde_json::to_string_pretty(&g.manifest).map_err(|e| Error::json(&manifest_path, e))?;
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    for (key, t) in &g.entries {
        let path = dir.join(template_filename(key));
        let body = serde_json::to_string(t).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Read a gallery directory back. Corrupt template files are skipped and
/// reported as `(filename, reason)` pairs; a missing or malformed manifest
/// is a hard error.
pub fn load_gallery(dir: &Path) -> Result<(GalleryIndex, Vec<(String, String)>)> {
    let manifest_path = dir.join("manifest.json");
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| Error::json(&manifest_path, e))?;
    let mut index = GalleryIndex::new(manifest);
    let mut corrupt = Vec::new();

    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| name.ends_with(".tpl.json"))
        .collect();
    names.sort_unstable();

    for name in names {
        let path = dir.join(&name);
        let mut skip = |reason: String| corrupt.push((name.clone(), reason));
        let Some(key) = parse_template_filename(&name) else {
            skip("file name not in S_F_I_RC form".into());
            continue;
        };
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                skip(format!("unreadable: {e}"));
                continue;
            }
        };
        let template: Template = match serde_json::from_str(&text) {
            Ok(t) => t,
            Err(e) => {
                skip(format!("bad JSON: {e}"));
                continue;
            }
        };
        if template.key() != key {
            skip("identity fields disagree with the file name".into());
            continue;
        }
        if let Err(reason) = validate_template(&template) {
            skip(reason);
            continue;
        }
        index.entries.insert(key, template);
    }
    Ok((index, corrupt))
}
