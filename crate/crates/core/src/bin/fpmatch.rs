//! Command-line interface: every pipeline stage and the evaluation harness
//! as batch subcommands. All outputs are reproducible — no timestamps, no
//! ordering that depends on worker count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fpmatch::eval::{self, ScoreBoard};
use fpmatch::features::{extract_template, Template, TemplateKey};
use fpmatch::gallery::{
    self, crop_grid, load_gallery, parse_source_filename, save_gallery, CropSpec, CropSpecRecord,
    GalleryIndex, Manifest,
};
use fpmatch::matcher::similarity;
use fpmatch::raster::RasterImage;
use fpmatch::synth::{make_synthetic_dataset, DatasetSpec};
use fpmatch::{Config, Error, Result};

#[derive(Parser)]
#[command(
    name = "fpmatch",
    version,
    about = "Partial-fingerprint identification toolkit with MasterPrint auditing"
)]
struct Cli {
    /// Config file of key=value lines; defaults to $FPMATCH_CONFIG, then
    /// built-in values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut every source image in a directory into a spanning grid of
    /// partial prints.
    Crop {
        /// Directory of source images named <finger>_<impression>.<ext>.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Directory receiving the partial images (PGM).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Grid rows (default from config).
        #[arg(long)]
        rows: Option<u32>,
        /// Grid columns (default from config).
        #[arg(long)]
        cols: Option<u32>,
        /// Square crop side in pixels (default from config).
        #[arg(long)]
        size: Option<u32>,
    },
    /// Run the full pipeline over a source directory: crop, extract
    /// features, and enroll templates into a gallery.
    Extract {
        /// Directory of source images named <finger>_<impression>.<ext>.
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Gallery directory receiving manifest.json and *.tpl.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Dataset name recorded in the manifest (default: the input
        /// directory's name).
        #[arg(long)]
        dataset_name: Option<String>,
    },
    /// Score two template files against each other.
    Match {
        a: PathBuf,
        b: PathBuf,
        /// Exit 0 when the score reaches this value, 1 otherwise.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
    /// Identify a probe template against an enrolled gallery.
    Identify {
        #[arg(long, value_name = "DIR")]
        gallery: PathBuf,
        #[arg(long, value_name = "FILE")]
        probe: PathBuf,
        #[arg(long)]
        threshold: f64,
        /// Ranked subjects to print.
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// List probes matching at least a fraction of the other subjects.
    Masterprint {
        #[arg(long, value_name = "DIR")]
        gallery: PathBuf,
        #[arg(long)]
        threshold: f64,
        /// Fraction of other subjects a probe must match to be flagged
        /// (default from config).
        #[arg(long)]
        fraction: Option<f64>,
        /// Report file.
        #[arg(long, value_name = "FILE", default_value = "masterprints.json")]
        out: PathBuf,
    },
    /// Score all pairs once and evaluate a threshold sweep, writing
    /// metrics.csv, scatter.csv, cmc.csv, eer.json and masterprints.json.
    Eval {
        #[arg(long, value_name = "DIR")]
        gallery: PathBuf,
        /// Sweep range lo:hi:step (default from config).
        #[arg(long, value_name = "LO:HI:STEP")]
        sweep: Option<String>,
        /// Report directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Worker threads (default: all cores). Output does not depend on
        /// this.
        #[arg(long)]
        workers: Option<usize>,
        /// Threshold for cmc.csv and masterprints.json, snapped to the
        /// nearest sweep point (default: the smallest sweep threshold with
        /// no flagged probe, else the lowest).
        #[arg(long)]
        threshold: Option<f64>,
        /// Ranks in the cumulative match curve.
        #[arg(long, default_value_t = 20)]
        max_rank: usize,
    },
    /// Render a synthetic gallery with known ground truth.
    Synth {
        #[arg(long)]
        subjects: u32,
        #[arg(long)]
        impressions: u32,
        #[arg(long)]
        seed: u64,
        /// Dataset directory (sources/ plus an enrolled gallery).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Additive noise level in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error code={} msg={:?}", e.code(), e.to_string());
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = Config::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Crop {
            input,
            out,
            rows,
            cols,
            size,
        } => cmd_crop(&cfg, &input, &out, rows, cols, size),
        Command::Extract {
            input,
            out,
            dataset_name,
        } => cmd_extract(&cfg, &input, &out, dataset_name),
        Command::Match { a, b, threshold } => cmd_match(&a, &b, threshold),
        Command::Identify {
            gallery,
            probe,
            threshold,
            top,
        } => cmd_identify(&gallery, &probe, threshold, top),
        Command::Masterprint {
            gallery,
            threshold,
            fraction,
            out,
        } => cmd_masterprint(&cfg, &gallery, threshold, fraction, &out),
        Command::Eval {
            gallery,
            sweep,
            out,
            workers,
            threshold,
            max_rank,
        } => cmd_eval(&cfg, &gallery, sweep.as_deref(), &out, workers, threshold, max_rank),
        Command::Synth {
            subjects,
            impressions,
            seed,
            out,
            noise,
        } => cmd_synth(&cfg, subjects, impressions, seed, &out, noise),
    }
}

/// Source images of a directory as (finger, impression, path), sorted by
/// identity so every run visits them in the same order.
fn source_images(dir: &Path) -> Result<Vec<(u32, u32, PathBuf)>> {
    let mut sources = Vec::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if let Some((finger, impression)) = name.to_str().and_then(parse_source_filename) {
            sources.push((finger, impression, entry.path()));
        }
    }
    sources.sort();
    Ok(sources)
}

fn cmd_crop(
    cfg: &Config,
    input: &Path,
    out: &Path,
    rows: Option<u32>,
    cols: Option<u32>,
    size: Option<u32>,
) -> Result<ExitCode> {
    let spec = CropSpec {
        rows: rows.unwrap_or(cfg.crop_rows),
        cols: cols.unwrap_or(cfg.crop_cols),
        crop_w: size.unwrap_or(cfg.crop_width),
        crop_h: size.unwrap_or(cfg.crop_height),
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let sources = source_images(input)?;
    let mut partials = 0usize;
    for (finger, impression, path) in &sources {
        let img = RasterImage::read_grayscale(path)?;
        let grid = crop_grid(&img, &spec)?;
        for (r, c, crop) in &grid.crops {
            crop.write_pgm(&out.join(format!("{finger}_{impression}_R{r}C{c}.pgm")))?;
            partials += 1;
        }
    }
    println!("images={} partials={partials}", sources.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_extract(
    cfg: &Config,
    input: &Path,
    out: &Path,
    dataset_name: Option<String>,
) -> Result<ExitCode> {
    let sources = source_images(input)?;
    let name = dataset_name.unwrap_or_else(|| {
        input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unnamed".into())
    });
    let spec = cfg.crop_spec();
    let mut subjects = std::collections::BTreeSet::new();
    let mut max_impression = 0u32;
    let mut crop_record: Option<CropSpecRecord> = None;
    let mut templates: Vec<Template> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    for (finger, impression, path) in &sources {
        subjects.insert(*finger);
        max_impression = max_impression.max(*impression);
        let img = RasterImage::read_grayscale(path)?;
        let grid = crop_grid(&img, &spec)?;
        crop_record.get_or_insert(CropSpecRecord {
            rows: spec.rows,
            cols: spec.cols,
            crop_w: spec.crop_w,
            crop_h: spec.crop_h,
            stride_x: grid.stride_x,
            stride_y: grid.stride_y,
            overlap_x: grid.overlap_x,
            overlap_y: grid.overlap_y,
        });
        for (r, c, crop) in &grid.crops {
            let key = TemplateKey {
                subject: *finger,
                finger: 1,
                impression: *impression,
                crop_row: *r,
                crop_col: *c,
            };
            match extract_template(crop, cfg, key) {
                Ok(t) => templates.push(t),
                Err(
                    e @ (Error::NotEnrollable { .. }
                    | Error::TooFewMinutiae { .. }
                    | Error::EmptyRoi),
                ) => skipped.push(format!(
                    "{}: {}",
                    gallery::template_filename(&key),
                    e.code()
                )),
                Err(e) => return Err(e),
            }
        }
    }
    let manifest = Manifest {
        subjects: subjects.len() as u32,
        fingers_per_subject: 1,
        impressions_per_finger: max_impression,
        partials_per_print: spec.rows * spec.cols,
        crop_spec: crop_record.unwrap_or(CropSpecRecord {
            rows: spec.rows,
            cols: spec.cols,
            crop_w: spec.crop_w,
            crop_h: spec.crop_h,
            stride_x: 0,
            stride_y: 0,
            overlap_x: 1.0,
            overlap_y: 1.0,
        }),
        source_dataset_name: name,
        skipped,
    };
    let mut index = GalleryIndex::new(manifest);
    for t in templates {
        index.enroll(t)?;
    }
    save_gallery(&index, out)?;
    println!(
        "enrolled={} rejected={}",
        index.len(),
        index.manifest.skipped.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn read_template(path: &Path) -> Result<Template> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn cmd_match(a: &Path, b: &Path, threshold: f64) -> Result<ExitCode> {
    let ta = read_template(a)?;
    let tb = read_template(b)?;
    let m = similarity(&ta, &tb)?;
    println!("score={:.6} mc={} n={} m={}", m.score, m.mc, m.n, m.m);
    Ok(if m.score >= threshold {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn load_gallery_warned(dir: &Path) -> Result<GalleryIndex> {
    let (index, corrupt) = load_gallery(dir)?;
    for (file, reason) in corrupt {
        eprintln!("warning: skipped {file}: {reason}");
    }
    Ok(index)
}

fn cmd_identify(gallery: &Path, probe: &Path, threshold: f64, top: usize) -> Result<ExitCode> {
    let index = load_gallery_warned(gallery)?;
    let probe = read_template(probe)?;
    let id = eval::identify(&index, &probe, threshold);
    let outcome = match id.outcome {
        eval::IdentifyOutcome::Correct => "correct",
        eval::IdentifyOutcome::FalseMatch => "false_match",
        eval::IdentifyOutcome::Rejected => "rejected",
    };
    println!(
        "outcome={outcome} probe_subject={} tie={}",
        probe.subject,
        u8::from(id.tie_at_top)
    );
    for (rank, (subject, score)) in id.ranked.iter().take(top).enumerate() {
        println!("rank={} subject={subject} score={score:.6}", rank + 1);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_masterprint(
    cfg: &Config,
    gallery: &Path,
    threshold: f64,
    fraction: Option<f64>,
    out: &Path,
) -> Result<ExitCode> {
    let index = load_gallery_warned(gallery)?;
    let fraction = fraction.unwrap_or(cfg.masterprint_fraction);
    let hits = eval::masterprint_hits(&index, threshold, fraction);
    eval::write_masterprints_json(out, &hits)?;
    println!("masterprints={} report={}", hits.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_sweep(text: &str) -> Result<(f64, f64, f64)> {
    let bad = || Error::Config(format!("sweep {text:?} is not lo:hi:step"));
    let mut parts = text.split(':');
    let mut next = || -> Result<f64> {
        parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)
    };
    let (lo, hi, step) = (next()?, next()?, next()?);
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((lo, hi, step))
}

fn cmd_eval(
    cfg: &Config,
    gallery: &Path,
    sweep: Option<&str>,
    out: &Path,
    workers: Option<usize>,
    threshold: Option<f64>,
    max_rank: usize,
) -> Result<ExitCode> {
    let mut cfg = cfg.clone();
    if let Some(text) = sweep {
        let (lo, hi, step) = parse_sweep(text)?;
        cfg.sweep_lo = lo;
        cfg.sweep_hi = hi;
        cfg.sweep_step = step;
        cfg.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| eval_reports(&cfg, gallery, out, threshold, max_rank))
}

fn eval_reports(
    cfg: &Config,
    gallery: &Path,
    out: &Path,
    threshold: Option<f64>,
    max_rank: usize,
) -> Result<ExitCode> {
    use std::io::Write as _;

    let index = load_gallery_warned(gallery)?;
    let thresholds = cfg.sweep_thresholds();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    // Stream every pair score into scatter.csv while the board folds them.
    let scatter_path = out.join("scatter.csv");
    let scatter_file =
        std::fs::File::create(&scatter_path).map_err(|e| Error::io(&scatter_path, e))?;
    let mut scatter = std::io::BufWriter::new(scatter_file);
    writeln!(scatter, "{}", eval::SCATTER_HEADER).map_err(|e| Error::io(&scatter_path, e))?;
    let board = ScoreBoard::build_with(&index, &thresholds, |rec| {
        writeln!(scatter, "{}", eval::scatter_line(rec)).map_err(|e| Error::io(&scatter_path, e))
    })?;
    scatter.flush().map_err(|e| Error::io(&scatter_path, e))?;

    let reports = board.reports(cfg.masterprint_fraction, max_rank);
    let zero = eval::zero_masterprint_threshold(&reports);

    // The report threshold: an explicit request snaps to the nearest sweep
    // point; otherwise prefer the smallest with no flagged probe.
    let selected = match threshold {
        Some(t) => nearest_index(&thresholds, t),
        None => zero
            .map(|z| nearest_index(&thresholds, z))
            .unwrap_or(0),
    };
    let report = &reports[selected];

    eval::write_metrics_csv(&out.join("metrics.csv"), &reports)?;
    eval::write_cmc_csv(&out.join("cmc.csv"), report)?;
    eval::write_eer_json(&out.join("eer.json"), report.eer, report.eer_threshold)?;
    let hits: Vec<(TemplateKey, Vec<u32>)> = report
        .masterprints
        .iter()
        .map(|key| {
            let probe = &index.entries[key];
            (*key, eval::matched_subjects(&index, probe, report.threshold))
        })
        .collect();
    eval::write_masterprints_json(&out.join("masterprints.json"), &hits)?;

    let verify = board.verify_at(selected);
    let t = index.len() as u64;
    println!("templates={t} pairs={}", eval::pair_count(t));
    println!(
        "eer={:.6} eer_threshold={:.6}",
        report.eer, report.eer_threshold
    );
    match zero {
        Some(z) => println!("zero_masterprint_threshold={z:.6}"),
        None => println!("zero_masterprint_threshold=none"),
    }
    println!("selected_threshold={:.6}", report.threshold);
    println!(
        "tmr={:.6} fmr={:.6} fnmr={:.6} masterprints={}",
        report.tmr,
        report.fmr,
        report.fnmr,
        report.masterprints.len()
    );
    println!(
        "verify_above4={:.6} verify_above8={:.6}",
        verify.frac_above_4, verify.frac_above_8
    );
    Ok(ExitCode::SUCCESS)
}

fn nearest_index(thresholds: &[f64], t: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (i, &th) in thresholds.iter().enumerate() {
        let d = (th - t).abs();
        if d < dist {
            dist = d;
            best = i;
        }
    }
    best
}

fn cmd_synth(
    cfg: &Config,
    subjects: u32,
    impressions: u32,
    seed: u64,
    out: &Path,
    noise: f64,
) -> Result<ExitCode> {
    let mut ds = DatasetSpec::new(subjects, impressions, seed);
    ds.noise_level = noise;
    let index = make_synthetic_dataset(&ds, cfg, out)?;
    let per_subject: BTreeMap<u32, usize> =
        index
            .entries
            .keys()
            .fold(BTreeMap::new(), |mut acc, key| {
                *acc.entry(key.subject).or_insert(0) += 1;
                acc
            });
    println!(
        "enrolled={} skipped={} subjects={}",
        index.len(),
        index.manifest.skipped.len(),
        per_subject.len()
    );
    Ok(ExitCode::SUCCESS)
}
