//! Identification and verification harness over an enrolled gallery:
//! all-pairs scoring, per-probe identification outcomes, impostor match
//! rates, cross-subject match auditing, threshold sweeps, equal-error-rate
//! search, CMC curves, and the CSV/JSON report emitters.
//!
//! Scoring is embarrassingly parallel across template pairs; workers share
//! the frozen gallery read-only and every aggregate is built from
//! commutative, order-independent pieces (integer counts and maxima), so
//! all results are identical for any worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{Template, TemplateKey};
use crate::gallery::GalleryIndex;
use crate::matcher::similarity;

/// One scored pair of enrolled templates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub probe: TemplateKey,
    pub gallery: TemplateKey,
    /// Similarity in [0, 1].
    pub score: f64,
    /// True when both templates belong to the same subject.
    pub genuine: bool,
}

/// Number of unordered template pairs among `t` enrolled templates.
pub fn pair_count(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

fn score_of(a: &Template, b: &Template) -> f64 {
    similarity(a, b)
        .expect("enrolled templates always hold tuples")
        .score
}

/// Score every unordered pair of enrolled templates exactly once, feeding
/// each record to `on_pair` in a fixed order (row-major over the sorted
/// key list). Rows are scored in parallel; the callback runs sequentially,
/// so the stream content and order are independent of the worker count.
pub fn scan_pair_scores<F>(g: &GalleryIndex, mut on_pair: F) -> Result<()>
where
    F: FnMut(&ScoreRecord) -> Result<()>,
{
    let keys: Vec<TemplateKey> = g.entries.keys().copied().collect();
    let tpls: Vec<&Template> = g.entries.values().collect();
    let t = tpls.len();
    let mut row: Vec<f64> = Vec::new();
    for i in 0..t {
        (i + 1..t)
            .into_par_iter()
            .map(|j| score_of(tpls[i], tpls[j]))
            .collect_into_vec(&mut row);
        for (off, &score) in row.iter().enumerate() {
            let j = i + 1 + off;
            on_pair(&ScoreRecord {
                probe: keys[i],
                gallery: keys[j],
                score,
                genuine: keys[i].subject == keys[j].subject,
            })?;
        }
    }
    Ok(())
}

/// Materialized form of [`scan_pair_scores`], for galleries small enough
/// to hold every record in memory.
pub fn all_pairs_scores(g: &GalleryIndex) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::with_capacity(pair_count(g.len() as u64) as usize);
    scan_pair_scores(g, |r| {
        out.push(*r);
        Ok(())
    })?;
    Ok(out)
}

/// Max similarity per subject against `probe`, excluding the probe's own
/// enrolled entry. Subjects with no comparable template are absent.
fn subject_maxima(g: &GalleryIndex, probe: &Template) -> BTreeMap<u32, f64> {
    let own = probe.key();
    let mut maxima = BTreeMap::new();
    for (key, tpl) in &g.entries {
        if *key == own {
            continue;
        }
        let s = score_of(probe, tpl);
        let best = maxima.entry(key.subject).or_insert(f64::NEG_INFINITY);
        if s > *best {
            *best = s;
        }
    }
    maxima
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentifyOutcome {
    Correct,
    FalseMatch,
    Rejected,
}

/// Result of one identification attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub outcome: IdentifyOutcome,
    /// Subjects by descending best score; equal scores order by smaller id.
    pub ranked: Vec<(u32, f64)>,
    /// True when at least two subjects share the top score.
    pub tie_at_top: bool,
}

/// Identify `probe` against the gallery: each subject scores the max over
/// its partials (the probe's own entry excluded), the best subject wins if
/// it reaches `theta`, and ties go to the smaller subject id.
pub fn identify(g: &GalleryIndex, probe: &Template, theta: f64) -> Identification {
    let mut ranked: Vec<(u32, f64)> = subject_maxima(g, probe).into_iter().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    let tie_at_top = ranked.len() >= 2 && ranked[1].1 == ranked[0].1;
    let outcome = match ranked.first() {
        Some(&(winner, best)) if best >= theta => {
            if winner == probe.subject {
                IdentifyOutcome::Correct
            } else {
                IdentifyOutcome::FalseMatch
            }
        }
        _ => IdentifyOutcome::Rejected,
    };
    Identification {
        outcome,
        ranked,
        tie_at_top,
    }
}

/// Impostor match rate for one probe: the fraction of cross-subject
/// partials scoring strictly above `theta`, over the manifest-declared
/// impostor population (subjects - 1) x partials per print x prints per
/// subject. Zero when the manifest declares no impostors.
pub fn imr(g: &GalleryIndex, probe: &Template, theta: f64) -> f64 {
    let m = &g.manifest;
    let denom = f64::from(m.subjects.saturating_sub(1))
        * f64::from(m.partials_per_print)
        * f64::from(m.prints_per_subject());
    if denom <= 0.0 {
        return 0.0;
    }
    let above = g
        .entries
        .values()
        .filter(|e| e.subject != probe.subject && score_of(probe, e) > theta)
        .count();
    above as f64 / denom
}

/// Enrolled probes that match partials of at least `fraction` of the
/// manifest's subjects other than their own (strictly above `theta`),
/// together with the subjects they matched.
pub fn masterprint_hits(
    g: &GalleryIndex,
    theta: f64,
    fraction: f64,
) -> Vec<(TemplateKey, Vec<u32>)> {
    let n = g.manifest.subjects;
    if n == 0 {
        return Vec::new();
    }
    let entries: Vec<(&TemplateKey, &Template)> = g.entries.iter().collect();
    entries
        .par_iter()
        .filter_map(|(key, probe)| {
            let mut matched = BTreeSet::new();
            for (other_key, other) in &entries {
                if other_key.subject == key.subject || matched.contains(&other_key.subject) {
                    continue;
                }
                if score_of(probe, other) > theta {
                    matched.insert(other_key.subject);
                }
            }
            if matched.len() as f64 / f64::from(n) >= fraction {
                Some((**key, matched.into_iter().collect()))
            } else {
                None
            }
        })
        .collect()
}

/// Subjects other than the probe's own with at least one partial scoring
/// strictly above `theta`.
pub fn matched_subjects(g: &GalleryIndex, probe: &Template, theta: f64) -> Vec<u32> {
    let mut matched = BTreeSet::new();
    for (key, other) in &g.entries {
        if key.subject != probe.subject
            && !matched.contains(&key.subject)
            && score_of(probe, other) > theta
        {
            matched.insert(key.subject);
        }
    }
    matched.into_iter().collect()
}

/// Default flagging fraction for [`masterprint_scan`].
pub const MASTERPRINT_FRACTION: f64 = 0.04;

/// The probe keys flagged by [`masterprint_hits`].
pub fn masterprint_scan(g: &GalleryIndex, theta: f64, fraction: f64) -> Vec<TemplateKey> {
    masterprint_hits(g, theta, fraction)
        .into_iter()
        .map(|(key, _)| key)
        .collect()
}

/// Candidate thresholds for the equal-error search: every distinct score
/// plus the midpoint between each adjacent pair, ascending.
fn eer_candidates(values: &[f64]) -> Vec<f64> {
    let mut cands = Vec::with_capacity(values.len() * 2);
    for (i, &v) in values.iter().enumerate() {
        cands.push(v);
        if let Some(&next) = values.get(i + 1) {
            cands.push((v + next) / 2.0);
        }
    }
    cands
}

/// Shared equal-error search over weighted score histograms (value bits ->
/// multiplicity). Returns (eer, threshold).
fn eer_from_hists(gen: &BTreeMap<u64, u64>, imp: &BTreeMap<u64, u64>) -> (f64, f64) {
    // Ascending distinct values with cumulative counts below each value.
    let unpack = |hist: &BTreeMap<u64, u64>| -> (Vec<f64>, Vec<u64>, u64) {
        let mut values = Vec::with_capacity(hist.len());
        let mut below = Vec::with_capacity(hist.len());
        let mut total = 0u64;
        for (&bits, &count) in hist {
            values.push(f64::from_bits(bits));
            below.push(total);
            total += count;
        }
        (values, below, total)
    };
    let (gv, g_below, g_total) = unpack(gen);
    let (iv, i_below, i_total) = unpack(imp);

    let mut union: Vec<f64> = gv.iter().chain(iv.iter()).copied().collect();
    union.sort_by(|a, b| a.partial_cmp(b).unwrap());
    union.dedup();

    // count < th via the precomputed cumulative sums.
    let count_below = |values: &[f64], below: &[u64], total: u64, th: f64| -> u64 {
        match values.partition_point(|&v| v < th) {
            i if i == values.len() => total,
            i => below[i],
        }
    };

    let mut best = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for th in eer_candidates(&union) {
        let fnmr = count_below(&gv, &g_below, g_total, th) as f64 / g_total as f64;
        // Divide the at-or-above count directly: subtracting below/total
        // from 1.0 rounds twice and can misorder exact rate ties.
        let fmr = (i_total - count_below(&iv, &i_below, i_total, th)) as f64 / i_total as f64;
        let key = ((fmr - fnmr).abs(), (fmr + fnmr) / 2.0, th);
        if key < best {
            best = key;
        }
    }
    (best.1, best.2)
}

/// Equal error rate of the two score sets: the threshold minimizing
/// |FMR - FNMR| over all distinct scores and their midpoints (ties go to
/// the lower rate, then the lower threshold), with
/// eer = (FMR + FNMR) / 2 there. FMR counts impostor scores >= threshold;
/// FNMR counts genuine scores < threshold.
pub fn eer_compute(genuine: &[f64], impostor: &[f64]) -> Result<(f64, f64)> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::EmptyScoreList);
    }
    let weigh = |scores: &[f64]| {
        let mut hist = BTreeMap::new();
        for s in scores {
            *hist.entry(s.to_bits()).or_insert(0u64) += 1;
        }
        hist
    };
    Ok(eer_from_hists(&weigh(genuine), &weigh(impostor)))
}

/// Rank of the probe's own subject: 1 plus the number of other subjects
/// scoring strictly higher, or equally high with a smaller id. `None` when
/// the probe's subject has no other enrolled partial.
fn own_subject_rank(maxima: &BTreeMap<u32, f64>, subject: u32) -> Option<(f64, usize)> {
    let own = *maxima.get(&subject)?;
    let ahead = maxima
        .iter()
        .filter(|&(&s, &v)| s != subject && (v > own || (v == own && s < subject)))
        .count();
    Some((own, ahead + 1))
}

/// Cumulative match curve: `cmc[k-1]` is the fraction of probes whose own
/// subject ranks within the top k, counting only subject scores >= `theta`.
pub fn cmc_curve(g: &GalleryIndex, theta: f64, max_rank: usize) -> Vec<f64> {
    let probes: Vec<&Template> = g.entries.values().collect();
    let nt = probes.len();
    let ranks: Vec<Option<usize>> = probes
        .par_iter()
        .map(|probe| {
            let maxima = subject_maxima(g, probe);
            match own_subject_rank(&maxima, probe.subject) {
                Some((own, rank)) if own >= theta => Some(rank),
                _ => None,
            }
        })
        .collect();
    let mut hits = vec![0u64; max_rank];
    for rank in ranks.into_iter().flatten() {
        if rank <= max_rank {
            hits[rank - 1] += 1;
        }
    }
    let mut cmc = Vec::with_capacity(max_rank);
    let mut acc = 0u64;
    for h in hits {
        acc += h;
        cmc.push(if nt == 0 { 0.0 } else { acc as f64 / nt as f64 });
    }
    cmc
}

/// Per-probe counts of same-subject partials scoring strictly above the
/// threshold, with the fractions of probes exceeding 4 and 8.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyDistribution {
    /// count -> number of probes with that many genuine matches.
    pub counts: BTreeMap<u32, u32>,
    pub frac_above_4: f64,
    pub frac_above_8: f64,
}

/// For each enrolled probe, count its same-subject partials (itself
/// excluded) scoring strictly above `theta`.
pub fn verify_distribution(g: &GalleryIndex, theta: f64) -> VerifyDistribution {
    let entries: Vec<(&TemplateKey, &Template)> = g.entries.iter().collect();
    let per_probe: Vec<u32> = entries
        .par_iter()
        .map(|(key, probe)| {
            entries
                .iter()
                .filter(|(k, other)| {
                    k.subject == key.subject && *k != *key && score_of(probe, other) > theta
                })
                .count() as u32
        })
        .collect();
    let nt = per_probe.len();
    let mut counts = BTreeMap::new();
    let (mut above4, mut above8) = (0u32, 0u32);
    for c in per_probe {
        *counts.entry(c).or_insert(0u32) += 1;
        if c > 4 {
            above4 += 1;
        }
        if c > 8 {
            above8 += 1;
        }
    }
    let frac = |n: u32| if nt == 0 { 0.0 } else { f64::from(n) / nt as f64 };
    VerifyDistribution {
        counts,
        frac_above_4: frac(above4),
        frac_above_8: frac(above8),
    }
}

/// Everything measured at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    /// Probe count; `nc + nf + nr == nt`.
    pub nt: u64,
    pub nc: u64,
    pub nf: u64,
    pub nr: u64,
    pub tmr: f64,
    pub fmr: f64,
    pub fnmr: f64,
    /// Verification rate; numerically the true match rate.
    pub vr: f64,
    /// Impostor match rate per probe, in key order.
    pub imr_per_probe: Vec<(TemplateKey, f64)>,
    /// Probes matching at least the configured fraction of other subjects.
    pub masterprints: Vec<TemplateKey>,
    pub eer: f64,
    pub eer_threshold: f64,
    /// Fraction of probes whose subject ranks within top k, k = 1..=len.
    pub cmc: Vec<f64>,
    /// Probes whose top score was shared by several subjects.
    pub tie_count: u64,
}

impl EvalReport {
    pub fn max_imr(&self) -> f64 {
        self.imr_per_probe
            .iter()
            .map(|&(_, v)| v)
            .fold(0.0, f64::max)
    }
}

/// Per-probe aggregates sufficient to evaluate every report metric at any
/// threshold of the grid the board was built with.
struct ProbeAgg {
    subject: u32,
    /// Best score over all other templates; negative infinity when alone.
    best: f64,
    /// Smallest subject id achieving `best`.
    winner: u32,
    tie_at_top: bool,
    /// Own subject's best score over its other partials.
    own_max: f64,
    /// Rank of the own subject, when it has a score.
    own_rank: Option<usize>,
    /// Per grid threshold: impostor partials scoring strictly above it.
    imp_above: Vec<u32>,
    /// Per grid threshold: genuine partials scoring strictly above it.
    gen_above: Vec<u32>,
    /// Per grid threshold: other subjects with a partial strictly above it.
    subj_above: Vec<u32>,
}

/// All-pairs scores folded into per-probe, per-threshold aggregates: built
/// once, then evaluated at every threshold of its grid.
pub struct ScoreBoard {
    thresholds: Vec<f64>,
    keys: Vec<TemplateKey>,
    probes: Vec<ProbeAgg>,
    eer: f64,
    eer_threshold: f64,
    subjects_total: u32,
    imr_denom: f64,
}

/// Grid bucket of a score: the number of grid thresholds strictly below
/// it, so a score lands strictly above thresholds 0..bucket.
fn grid_bucket(thresholds: &[f64], score: f64) -> usize {
    thresholds.partition_point(|&t| t < score)
}

/// Turn a bucket histogram (len = grid + 1) into per-threshold
/// strictly-above counts (len = grid).
fn above_counts(hist: &[u32]) -> Vec<u32> {
    let grid = hist.len() - 1;
    let mut above = vec![0u32; grid];
    let mut acc = 0u32;
    for t in (0..grid).rev() {
        acc += hist[t + 1];
        above[t] = acc;
    }
    above
}

impl ScoreBoard {
    /// Score all pairs once and fold them into the board, also feeding
    /// every record to `on_pair` in the deterministic stream order.
    /// `thresholds` must be ascending. Fails with `EmptyScoreList` when the
    /// gallery yields no genuine or no impostor pair, since no error rates
    /// exist then.
    pub fn build_with<F>(g: &GalleryIndex, thresholds: &[f64], mut on_pair: F) -> Result<Self>
    where
        F: FnMut(&ScoreRecord) -> Result<()>,
    {
        debug_assert!(
            thresholds.windows(2).all(|w| w[0] < w[1]),
            "threshold grid must be strictly ascending"
        );
        let keys: Vec<TemplateKey> = g.entries.keys().copied().collect();
        let t = keys.len();
        let grid = thresholds.len();
        let subjects: Vec<u32> = keys
            .iter()
            .map(|k| k.subject)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let nsub = subjects.len();
        let subject_index =
            |s: u32| -> usize { subjects.binary_search(&s).expect("subject from keys") };

        let mut subj_max = vec![f64::NEG_INFINITY; t * nsub];
        let mut imp_hist = vec![0u32; t * (grid + 1)];
        let mut gen_hist = vec![0u32; t * (grid + 1)];
        let mut gen_scores: BTreeMap<u64, u64> = BTreeMap::new();
        let mut imp_scores: BTreeMap<u64, u64> = BTreeMap::new();

        scan_pair_scores(g, |rec| {
            on_pair(rec)?;
            let i = keys.binary_search(&rec.probe).expect("probe key enrolled");
            let j = keys
                .binary_search(&rec.gallery)
                .expect("gallery key enrolled");
            let b = grid_bucket(thresholds, rec.score);
            if rec.genuine {
                gen_hist[i * (grid + 1) + b] += 1;
                gen_hist[j * (grid + 1) + b] += 1;
                *gen_scores.entry(rec.score.to_bits()).or_insert(0) += 1;
            } else {
                imp_hist[i * (grid + 1) + b] += 1;
                imp_hist[j * (grid + 1) + b] += 1;
                *imp_scores.entry(rec.score.to_bits()).or_insert(0) += 1;
            }
            let si = subject_index(rec.gallery.subject);
            let sj = subject_index(rec.probe.subject);
            if rec.score > subj_max[i * nsub + si] {
                subj_max[i * nsub + si] = rec.score;
            }
            if rec.score > subj_max[j * nsub + sj] {
                subj_max[j * nsub + sj] = rec.score;
            }
            Ok(())
        })?;

        if gen_scores.is_empty() || imp_scores.is_empty() {
            return Err(Error::EmptyScoreList);
        }
        let (eer, eer_threshold) = eer_from_hists(&gen_scores, &imp_scores);

        let probes = (0..t)
            .map(|i| {
                let row = &subj_max[i * nsub..(i + 1) * nsub];
                let subject = keys[i].subject;
                let (mut best, mut winner, mut tie) = (f64::NEG_INFINITY, subject, false);
                let mut subj_hist = vec![0u32; grid + 1];
                let mut own_max = f64::NEG_INFINITY;
                let mut ahead = 0usize;
                for (k, &v) in row.iter().enumerate() {
                    if v == f64::NEG_INFINITY {
                        continue;
                    }
                    if v > best {
                        best = v;
                        winner = subjects[k];
                        tie = false;
                    } else if v == best {
                        tie = true;
                    }
                    if subjects[k] == subject {
                        own_max = v;
                    } else {
                        subj_hist[grid_bucket(thresholds, v)] += 1;
                    }
                }
                if own_max > f64::NEG_INFINITY {
                    for (k, &v) in row.iter().enumerate() {
                        let s = subjects[k];
                        if s != subject && (v > own_max || (v == own_max && s < subject)) {
                            ahead += 1;
                        }
                    }
                }
                ProbeAgg {
                    subject,
                    best,
                    winner,
                    tie_at_top: tie,
                    own_max,
                    own_rank: (own_max > f64::NEG_INFINITY).then_some(ahead + 1),
                    imp_above: above_counts(&imp_hist[i * (grid + 1)..(i + 1) * (grid + 1)]),
                    gen_above: above_counts(&gen_hist[i * (grid + 1)..(i + 1) * (grid + 1)]),
                    subj_above: above_counts(&subj_hist),
                }
            })
            .collect();

        let m = &g.manifest;
        Ok(ScoreBoard {
            thresholds: thresholds.to_vec(),
            keys,
            probes,
            eer,
            eer_threshold,
            subjects_total: m.subjects,
            imr_denom: f64::from(m.subjects.saturating_sub(1))
                * f64::from(m.partials_per_print)
                * f64::from(m.prints_per_subject()),
        })
    }

    pub fn build(g: &GalleryIndex, thresholds: &[f64]) -> Result<Self> {
        Self::build_with(g, thresholds, |_| Ok(()))
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// The report at grid threshold `idx`, flagging probes that match at
    /// least `fraction` of the other subjects and ranking up to `max_rank`.
    pub fn report_at(&self, idx: usize, fraction: f64, max_rank: usize) -> EvalReport {
        let theta = self.thresholds[idx];
        let nt = self.probes.len() as u64;
        let (mut nc, mut nf, mut nr, mut ties) = (0u64, 0u64, 0u64, 0u64);
        let mut rank_hits = vec![0u64; max_rank];
        let mut imr_per_probe = Vec::with_capacity(self.probes.len());
        let mut masterprints = Vec::new();
        for (i, p) in self.probes.iter().enumerate() {
            if p.best < theta {
                nr += 1;
            } else {
                if p.tie_at_top {
                    ties += 1;
                }
                if p.winner == p.subject {
                    nc += 1;
                } else {
                    nf += 1;
                }
            }
            if let Some(rank) = p.own_rank {
                if p.own_max >= theta && rank <= max_rank {
                    rank_hits[rank - 1] += 1;
                }
            }
            imr_per_probe.push((
                self.keys[i],
                if self.imr_denom > 0.0 {
                    f64::from(p.imp_above[idx]) / self.imr_denom
                } else {
                    0.0
                },
            ));
            if self.subjects_total > 0
                && f64::from(p.subj_above[idx]) / f64::from(self.subjects_total) >= fraction
            {
                masterprints.push(self.keys[i]);
            }
        }
        let mut cmc = Vec::with_capacity(max_rank);
        let mut acc = 0u64;
        for h in rank_hits {
            acc += h;
            cmc.push(if nt == 0 { 0.0 } else { acc as f64 / nt as f64 });
        }
        let rate = |n: u64| if nt == 0 { 0.0 } else { n as f64 / nt as f64 };
        EvalReport {
            threshold: theta,
            nt,
            nc,
            nf,
            nr,
            tmr: rate(nc),
            fmr: rate(nf),
            fnmr: rate(nr),
            vr: rate(nc),
            imr_per_probe,
            masterprints,
            eer: self.eer,
            eer_threshold: self.eer_threshold,
            cmc,
            tie_count: ties,
        }
    }

    /// One report per grid threshold.
    pub fn reports(&self, fraction: f64, max_rank: usize) -> Vec<EvalReport> {
        (0..self.thresholds.len())
            .map(|i| self.report_at(i, fraction, max_rank))
            .collect()
    }

    /// Same-subject verify counts at grid threshold `idx`, from the
    /// board's precomputed aggregates.
    pub fn verify_at(&self, idx: usize) -> VerifyDistribution {
        let nt = self.probes.len();
        let mut counts = BTreeMap::new();
        let (mut above4, mut above8) = (0u32, 0u32);
        for p in &self.probes {
            let c = p.gen_above[idx];
            *counts.entry(c).or_insert(0u32) += 1;
            if c > 4 {
                above4 += 1;
            }
            if c > 8 {
                above8 += 1;
            }
        }
        let frac = |n: u32| if nt == 0 { 0.0 } else { f64::from(n) / nt as f64 };
        VerifyDistribution {
            counts,
            frac_above_4: frac(above4),
            frac_above_8: frac(above8),
        }
    }
}

/// Smallest threshold whose report flags no probe, if the sweep reached
/// one.
pub fn zero_masterprint_threshold(reports: &[EvalReport]) -> Option<f64> {
    reports
        .iter()
        .find(|r| r.masterprints.is_empty())
        .map(|r| r.threshold)
}

/// Score all pairs once, then evaluate every ascending threshold over the
/// shared scores. Returns the reports plus the smallest threshold with no
/// flagged probe.
pub fn sweep(
    g: &GalleryIndex,
    thresholds: &[f64],
    fraction: f64,
    max_rank: usize,
) -> Result<(Vec<EvalReport>, Option<f64>)> {
    let board = ScoreBoard::build(g, thresholds)?;
    let reports = board.reports(fraction, max_rank);
    let zero = zero_masterprint_threshold(&reports);
    Ok((reports, zero))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per threshold: counts, rates, flag count, and the worst
/// per-probe impostor match rate.
pub fn write_metrics_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "threshold,NT,NC,NF,NR,TMR,FMR,FNMR,masterprintCount,maxIMR"
    )
    .map_err(io)?;
    for r in reports {
        writeln!(
            w,
            "{:.6},{},{},{},{},{:.6},{:.6},{:.6},{},{:.6}",
            r.threshold,
            r.nt,
            r.nc,
            r.nf,
            r.nr,
            r.tmr,
            r.fmr,
            r.fnmr,
            r.masterprints.len(),
            r.max_imr()
        )
        .map_err(io)?;
    }
    finish(w, path)
}

/// CSV line for one scored pair, as written by [`write_scatter_csv`].
pub fn scatter_line(r: &ScoreRecord) -> String {
    format!("{:.6},{}", r.score, u8::from(r.genuine))
}

/// Header of scatter.csv; callers streaming their own rows write this
/// first, then one [`scatter_line`] per record.
pub const SCATTER_HEADER: &str = "score,genuine";

/// Every pair score with its genuine flag, in stream order.
pub fn write_scatter_csv(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{SCATTER_HEADER}").map_err(io)?;
    for r in records {
        writeln!(w, "{}", scatter_line(r)).map_err(io)?;
    }
    finish(w, path)
}

/// Rank/rate rows of one report's cumulative match curve.
pub fn write_cmc_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "rank,rate").map_err(io)?;
    for (k, rate) in report.cmc.iter().enumerate() {
        writeln!(w, "{},{rate:.6}", k + 1).map_err(io)?;
    }
    finish(w, path)
}

pub fn write_eer_json(path: &Path, eer: f64, threshold: f64) -> Result<()> {
    let mut w = create(path)?;
    write!(
        w,
        "{{\n  \"eer\": {eer:.6},\n  \"threshold\": {threshold:.6}\n}}\n"
    )
    .map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

/// Flagged probes with the subjects each one matched.
pub fn write_masterprints_json(path: &Path, hits: &[(TemplateKey, Vec<u32>)]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "[").map_err(io)?;
    for (i, (key, subjects)) in hits.iter().enumerate() {
        let ids: Vec<String> = subjects.iter().map(u32::to_string).collect();
        let comma = if i + 1 < hits.len() { "," } else { "" };
        writeln!(
            w,
            "  {{\"probe\": \"S{}_F{}_I{}_R{}C{}\", \"subjects\": [{}]}}{comma}",
            key.subject,
            key.finger,
            key.impression,
            key.crop_row,
            key.crop_col,
            ids.join(", ")
        )
        .map_err(io)?;
    }
    writeln!(w, "]").map_err(io)?;
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::MinutiaTuple;
    use crate::gallery::{CropSpecRecord, Manifest};

    fn tuple(v: u32) -> MinutiaTuple {
        MinutiaTuple {
            mq: 1,
            rcr: [1; 8],
            dsq: [v, v + 1, v + 2],
        }
    }

    /// Twelve tuples drawn from a tag-specific pool; sharing `k` pool
    /// indices between two templates yields score k/12.
    fn tuples(tag: u32, picks: std::ops::Range<u32>) -> Vec<MinutiaTuple> {
        picks.map(|i| tuple(tag * 1000 + i * 10)).collect()
    }

    fn template(subject: u32, impression: u32, tuples: Vec<MinutiaTuple>) -> Template {
        Template {
            subject,
            finger: 1,
            impression,
            crop_row: 0,
            crop_col: 0,
            tuples,
            minutiae: Vec::new(),
        }
    }

    fn manifest(subjects: u32, impressions: u32, partials: u32) -> Manifest {
        Manifest {
            subjects,
            fingers_per_subject: 1,
            impressions_per_finger: impressions,
            partials_per_print: partials,
            crop_spec: CropSpecRecord {
                rows: 1,
                cols: partials,
                crop_w: 10,
                crop_h: 10,
                stride_x: 0,
                stride_y: 0,
                overlap_x: 1.0,
                overlap_y: 1.0,
            },
            source_dataset_name: "test".into(),
            skipped: Vec::new(),
        }
    }

    fn gallery(manifest: Manifest, templates: Vec<Template>) -> GalleryIndex {
        let mut g = GalleryIndex::new(manifest);
        for t in templates {
            g.enroll(t).unwrap();
        }
        g
    }

    /// Two subjects, two partials each, with hand-computable overlaps:
    /// a1 = P, a2 = P[0..6]+Q, b1 = P[0..9]+R, b2 = S.
    /// Scores: a1-a2 0.5, a1-b1 0.75, a2-b1 0.5, the rest 0.
    fn hand_gallery() -> GalleryIndex {
        let mut a2 = tuples(0, 0..6);
        a2.extend(tuples(1, 0..6));
        let mut b1 = tuples(0, 0..9);
        b1.extend(tuples(2, 0..3));
        gallery(
            manifest(2, 2, 1),
            vec![
                template(1, 1, tuples(0, 0..12)),
                template(1, 2, a2),
                template(2, 1, b1),
                template(2, 2, tuples(3, 0..12)),
            ],
        )
    }

    fn key_of(subject: u32, impression: u32) -> TemplateKey {
        TemplateKey {
            subject,
            finger: 1,
            impression,
            crop_row: 0,
            crop_col: 0,
        }
    }

    #[test]
    fn pair_count_matches_closed_form() {
        assert_eq!(pair_count(9601), 46_084_800);
        assert_eq!(pair_count(2), 1);
        assert_eq!(pair_count(1), 0);
        assert_eq!(pair_count(0), 0);
    }

    #[test]
    fn all_pairs_cover_every_unordered_pair_once() {
        let g = hand_gallery();
        let records = all_pairs_scores(&g).unwrap();
        assert_eq!(records.len(), 6);
        let pairs: BTreeSet<(TemplateKey, TemplateKey)> =
            records.iter().map(|r| (r.probe, r.gallery)).collect();
        assert_eq!(pairs.len(), 6, "no duplicate pairs");
        for r in &records {
            assert!(r.probe < r.gallery, "each unordered pair appears once");
            assert_eq!(r.genuine, r.probe.subject == r.gallery.subject);
            assert!((0.0..=1.0).contains(&r.score));
        }
        let score = |p: TemplateKey, q: TemplateKey| {
            records
                .iter()
                .find(|r| (r.probe, r.gallery) == (p, q))
                .unwrap()
                .score
        };
        assert_eq!(score(key_of(1, 1), key_of(1, 2)), 0.5);
        assert_eq!(score(key_of(1, 1), key_of(2, 1)), 0.75);
        assert_eq!(score(key_of(1, 2), key_of(2, 1)), 0.5);
        assert_eq!(score(key_of(1, 1), key_of(2, 2)), 0.0);
    }

    #[test]
    fn pair_stream_is_identical_across_worker_counts() {
        let g = hand_gallery();
        let runs: Vec<Vec<ScoreRecord>> = [1usize, 2, 8]
            .iter()
            .map(|&workers| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .unwrap()
                    .install(|| all_pairs_scores(&g).unwrap())
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
        assert_eq!(runs[0], runs[2]);
    }

    #[test]
    fn identify_picks_best_subject_above_threshold() {
        let g = hand_gallery();
        // a2's best genuine score 0.5 ties b1's; the smaller id wins.
        let a2 = &g.entries[&key_of(1, 2)];
        let id = identify(&g, a2, 0.5);
        assert_eq!(id.outcome, IdentifyOutcome::Correct);
        assert!(id.tie_at_top);
        assert_eq!(id.ranked[0], (1, 0.5));
        assert_eq!(id.ranked[1], (2, 0.5));

        // a1 scores 0.75 against subject 2 but only 0.5 against its own.
        let a1 = &g.entries[&key_of(1, 1)];
        let id = identify(&g, a1, 0.5);
        assert_eq!(id.outcome, IdentifyOutcome::FalseMatch);
        assert!(!id.tie_at_top);
        assert_eq!(id.ranked[0], (2, 0.75));

        // b2 matches nothing, so any positive threshold rejects it.
        let b2 = &g.entries[&key_of(2, 2)];
        let id = identify(&g, b2, 0.01);
        assert_eq!(id.outcome, IdentifyOutcome::Rejected);

        // An exact duplicate of an enrolled partial scores 1.0.
        let dup = template(1, 3, tuples(0, 0..12));
        let id = identify(&g, &dup, 0.5);
        assert_eq!(id.outcome, IdentifyOutcome::Correct);
        assert_eq!(id.ranked[0], (1, 1.0));
    }

    #[test]
    fn imr_counts_strictly_above_threshold() {
        // Manifest denominator (3-1) * 20 * 1 = 40; four impostor partials
        // above 0.5, one exactly at it (not counted).
        let probe = template(1, 1, tuples(0, 0..12));
        let mut half = tuples(0, 0..6);
        half.extend(tuples(9, 0..6));
        let g = gallery(
            manifest(3, 1, 20),
            vec![
                probe.clone(),
                template(2, 1, tuples(0, 0..12)),
                {
                    let mut t = template(2, 2, tuples(0, 0..12));
                    t.crop_col = 1;
                    t
                },
                template(3, 1, tuples(0, 0..12)),
                {
                    let mut t = template(3, 2, tuples(0, 0..12));
                    t.crop_col = 1;
                    t
                },
                {
                    let mut t = template(3, 3, half);
                    t.crop_col = 2;
                    t
                },
            ],
        );
        assert_eq!(imr(&g, &probe, 0.5), 4.0 / 40.0);
        assert_eq!(imr(&g, &probe, 1.0), 0.0);
    }

    #[test]
    fn masterprint_scan_flags_wide_matchers() {
        // Subjects 2..=5 all hold a copy of subject 1's partial; with the
        // manifest claiming 100 subjects that is exactly the 4% floor.
        let shared = || tuples(0, 0..12);
        let g = gallery(
            manifest(100, 1, 1),
            vec![
                template(1, 1, shared()),
                template(2, 1, shared()),
                template(3, 1, shared()),
                template(4, 1, shared()),
                template(5, 1, shared()),
                template(6, 1, tuples(7, 0..12)),
            ],
        );
        let hits = masterprint_hits(&g, 0.5, MASTERPRINT_FRACTION);
        let flagged: Vec<u32> = hits.iter().map(|(k, _)| k.subject).collect();
        assert_eq!(flagged, vec![1, 2, 3, 4, 5]);
        for (_, subjects) in &hits {
            assert_eq!(subjects.len(), 4);
        }
        // Subject 6 matches nobody else, so it is never flagged; nothing
        // exceeds a threshold of 1.0 at all.
        assert!(masterprint_scan(&g, 1.0, MASTERPRINT_FRACTION).is_empty());
        // Raising the required fraction above 4/100 clears the list.
        assert!(masterprint_scan(&g, 0.5, 0.05).is_empty());
    }

    #[test]
    fn eer_hand_cases() {
        let (eer, theta) = eer_compute(&[0.8, 0.6], &[0.4, 0.7]).unwrap();
        assert!((eer - 0.5).abs() < 1e-12);
        assert!(theta > 0.6 && theta <= 0.7, "threshold {theta}");
        assert!((theta - 0.65).abs() < 1e-12);

        let (eer, _) = eer_compute(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert_eq!(eer, 0.0);

        let (eer, _) = eer_compute(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert!((eer - 0.5).abs() < 1e-12);

        assert!(matches!(
            eer_compute(&[], &[0.5]),
            Err(Error::EmptyScoreList)
        ));
        assert!(matches!(
            eer_compute(&[0.5], &[]),
            Err(Error::EmptyScoreList)
        ));
    }

    #[test]
    fn cmc_ranks_own_subject() {
        // Duplicate gallery: every probe's own subject scores 1.0.
        let g = gallery(
            manifest(2, 2, 1),
            vec![
                template(1, 1, tuples(0, 0..12)),
                template(1, 2, tuples(0, 0..12)),
                template(2, 1, tuples(5, 0..12)),
                template(2, 2, tuples(5, 0..12)),
            ],
        );
        assert_eq!(cmc_curve(&g, 0.5, 2), vec![1.0, 1.0]);

        // Hand case: a1 ranks its subject second (0.5 behind 0.75), a2
        // first via the tie rule, b1 and b2 score 0 genuine (below 0.1).
        let g = hand_gallery();
        assert_eq!(cmc_curve(&g, 0.1, 2), vec![0.25, 0.5]);
    }

    #[test]
    fn verify_distribution_counts_genuine_matches() {
        // Seven identical partials of subject 1: each sees 6 matches.
        let mut tpls: Vec<Template> = (1..=7)
            .map(|i| template(1, i, tuples(0, 0..12)))
            .collect();
        tpls.push(template(2, 1, tuples(9, 0..12)));
        let g = gallery(manifest(2, 7, 1), tpls);
        let d = verify_distribution(&g, 0.5);
        assert_eq!(d.counts[&6], 7);
        assert_eq!(d.counts[&0], 1);
        assert!((d.frac_above_4 - 7.0 / 8.0).abs() < 1e-12);
        assert_eq!(d.frac_above_8, 0.0);

        let d = verify_distribution(&g, 1.0);
        assert_eq!(d.frac_above_4, 0.0);
        assert_eq!(d.frac_above_8, 0.0);
    }

    #[test]
    fn report_matches_hand_computation() {
        let g = hand_gallery();
        let board = ScoreBoard::build(&g, &[0.1]).unwrap();
        let r = board.report_at(0, 0.9, 2);
        assert_eq!((r.nt, r.nc, r.nf, r.nr), (4, 1, 2, 1));
        assert_eq!(r.nc + r.nf + r.nr, r.nt);
        assert_eq!(r.tmr, 0.25);
        assert_eq!(r.fmr, 0.5);
        assert_eq!(r.fnmr, 0.25);
        assert_eq!(r.vr, r.tmr);
        assert_eq!(r.cmc, vec![0.25, 0.5]);
        assert_eq!(r.tie_count, 1);
        assert!(r.masterprints.is_empty());

        // imr denominator: (2-1) subjects * 1 partial * 2 prints = 2.
        let imr_of = |key: TemplateKey| {
            r.imr_per_probe
                .iter()
                .find(|(k, _)| *k == key)
                .unwrap()
                .1
        };
        assert_eq!(imr_of(key_of(1, 1)), 0.5);
        assert_eq!(imr_of(key_of(2, 2)), 0.0);
        // b1 sees two impostor partials above 0.1 (0.75 and 0.5).
        assert_eq!(imr_of(key_of(2, 1)), 1.0);
        assert_eq!(r.max_imr(), 1.0);

        // At fraction 0.5, a1/a2/b1 all reach 1 of 2 subjects.
        let r = board.report_at(0, 0.5, 2);
        assert_eq!(
            r.masterprints,
            vec![key_of(1, 1), key_of(1, 2), key_of(2, 1)]
        );

        // Every metric agrees with the standalone single-threshold ops.
        assert_eq!(r.cmc, cmc_curve(&g, 0.1, 2));
        assert_eq!(r.masterprints, masterprint_scan(&g, 0.1, 0.5));
        let d = board.verify_at(0);
        assert_eq!(d, verify_distribution(&g, 0.1));
    }

    #[test]
    fn sweep_is_monotone_and_consistent() {
        let g = hand_gallery();
        let grid: Vec<f64> = (0..=10).map(|i| f64::from(i) * 0.1).collect();
        let (reports, zero) = sweep(&g, &grid, 0.4, 3).unwrap();
        assert_eq!(reports.len(), grid.len());
        for pair in reports.windows(2) {
            assert!(pair[0].fmr >= pair[1].fmr, "FMR non-increasing");
            assert!(pair[0].fnmr <= pair[1].fnmr, "FNMR non-decreasing");
            assert!(
                pair[0].masterprints.len() >= pair[1].masterprints.len(),
                "flag count non-increasing"
            );
            for later in &pair[1].masterprints {
                assert!(
                    pair[0].masterprints.contains(later),
                    "flag sets nest along ascending thresholds"
                );
            }
        }
        for r in &reports {
            assert_eq!(r.nc + r.nf + r.nr, r.nt);
            for w in r.cmc.windows(2) {
                assert!(w[0] <= w[1], "cmc non-decreasing");
            }
            assert!(*r.cmc.last().unwrap() >= r.tmr);
            for v in [r.tmr, r.fmr, r.fnmr, r.vr] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        // Flags exist at 0.0 (b1 matches subject 1 at 0.75 > 0) and
        // disappear once the threshold passes the largest cross score.
        assert!(!reports[0].masterprints.is_empty());
        assert_eq!(zero, Some(0.8));
    }

    #[test]
    fn board_is_identical_across_worker_counts() {
        let g = hand_gallery();
        let grid = [0.0, 0.25, 0.5, 0.75];
        let run = |workers: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap()
                .install(|| sweep(&g, &grid, 0.5, 3).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(2));
        assert_eq!(one, run(8));
    }

    #[test]
    fn writers_emit_six_decimal_fields() {
        let g = hand_gallery();
        let (reports, _) = sweep(&g, &[0.1, 0.8], 0.5, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let metrics = dir.path().join("metrics.csv");
        write_metrics_csv(&metrics, &reports).unwrap();
        let text = std::fs::read_to_string(&metrics).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "threshold,NT,NC,NF,NR,TMR,FMR,FNMR,masterprintCount,maxIMR"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0.100000,4,1,2,1,0.250000,0.500000,0.250000,3,1.000000"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0.800000,4,0,0,4,0.000000,0.000000,1.000000,0,0.000000"
        );

        let scatter = dir.path().join("scatter.csv");
        write_scatter_csv(&scatter, &all_pairs_scores(&g).unwrap()).unwrap();
        let text = std::fs::read_to_string(&scatter).unwrap();
        assert!(text.starts_with("score,genuine\n0.500000,1\n"));
        assert_eq!(text.lines().count(), 7);

        let cmc = dir.path().join("cmc.csv");
        write_cmc_csv(&cmc, &reports[0]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&cmc).unwrap(),
            "rank,rate\n1,0.250000\n2,0.500000\n"
        );

        let eer = dir.path().join("eer.json");
        write_eer_json(&eer, reports[0].eer, reports[0].eer_threshold).unwrap();
        let text = std::fs::read_to_string(&eer).unwrap();
        assert!(text.contains("\"eer\": 0."));
        assert!(text.contains("\"threshold\": 0."));

        let mp = dir.path().join("masterprints.json");
        write_masterprints_json(&mp, &[(key_of(1, 1), vec![2])]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&mp).unwrap(),
            "[\n  {\"probe\": \"S1_F1_I1_R0C0\", \"subjects\": [2]}\n]\n"
        );
    }

    #[test]
    fn degenerate_galleries_are_rejected() {
        // One subject only: no impostor pairs, so no error rates exist.
        let g = gallery(
            manifest(1, 2, 1),
            vec![
                template(1, 1, tuples(0, 0..12)),
                template(1, 2, tuples(0, 0..12)),
            ],
        );
        assert!(matches!(
            ScoreBoard::build(&g, &[0.1]),
            Err(Error::EmptyScoreList)
        ));
    }
}
