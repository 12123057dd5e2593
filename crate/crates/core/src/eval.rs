//! Evaluation criteria and ROC summaries.
//!
//! Track- and region-based criteria match detected regions to ground-truth
//! boxes by IOU within each frame. A truth region is detected when some
//! detection reaches IOU ≥ β with it; a detection is a false positive when
//! its IOU with every truth region in the frame is below β. One detection
//! may detect several truth regions. A track is detected when at least a
//! fraction α of its regions are. False positives are reported per frame,
//! pooled over every frame of every test video.
//!
//! The legacy frame-level and pixel-level criteria are provided for
//! comparison; they count frames, not regions.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::annotations::{boxes_by_frame, DetectionRecord, GroundTruthTrack};
use crate::detector::frame_detections;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, Connectivity, PixelRegion};
use crate::par;
use crate::volume::ScoreVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Track,
    Region,
    Frame,
    Pixel,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Track, Criterion::Region, Criterion::Frame, Criterion::Pixel];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Track => "track",
            Criterion::Region => "region",
            Criterion::Frame => "frame",
            Criterion::Pixel => "pixel",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown criterion {s:?}; expected track, region, frame or pixel"
                ))
            })
    }
}

/// One operating point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    /// False positive regions per frame (track/region) or false positive
    /// frame fraction (frame/pixel).
    pub fpr: f64,
    /// Detection rate in `[0, 1]`.
    pub rate: f64,
}

/// Operating points in order of descending threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub criterion: Criterion,
    pub points: Vec<RocPoint>,
}

/// Outcome of matching one frame's detections against its truth boxes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMatch {
    /// Per truth box: matched by some detection.
    pub detected: Vec<bool>,
    pub false_positives: usize,
}

/// Matches detections to truth boxes in one frame.
pub fn match_frame(detections: &[PixelRegion], truths: &[BoundingBox], beta: f64) -> FrameMatch {
    let mut detected = vec![false; truths.len()];
    let mut false_positives = 0;
    for det in detections {
        let mut matched = false;
        for (flag, truth) in detected.iter_mut().zip(truths) {
            // both operands are non-empty by construction
            if iou(det, truth).unwrap_or(0.0) >= beta {
                *flag = true;
                matched = true;
            }
        }
        if !matched {
            false_positives += 1;
        }
    }
    FrameMatch {
        detected,
        false_positives,
    }
}

/// Ground truth for one test video.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalVideo {
    pub tracks: Vec<GroundTruthTrack>,
    pub num_frames: usize,
    by_frame: Vec<Vec<(usize, BoundingBox)>>,
}

impl EvalVideo {
    pub fn new(tracks: Vec<GroundTruthTrack>, num_frames: usize) -> Result<Self> {
        for t in &tracks {
            if t.boxes.is_empty() {
                return Err(Error::invalid(format!("track {} has no boxes", t.track_id)));
            }
            if let Some((&f, _)) = t.boxes.iter().next_back() {
                if f >= num_frames {
                    return Err(Error::invalid(format!(
                        "track {} has frame {f} beyond the {num_frames} frame video",
                        t.track_id
                    )));
                }
            }
        }
        let by_frame = boxes_by_frame(&tracks, num_frames);
        Ok(EvalVideo {
            tracks,
            num_frames,
            by_frame,
        })
    }

    /// `(track position, box)` pairs annotated in frame `t`.
    pub fn truths(&self, t: usize) -> &[(usize, BoundingBox)] {
        &self.by_frame[t]
    }

    pub fn region_count(&self) -> usize {
        self.tracks.iter().map(|t| t.boxes.len()).sum()
    }
}

/// Region-matching tallies for one video at one threshold.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchCounts {
    /// Detected truth regions per track.
    pub track_hits: Vec<usize>,
    pub regions_detected: usize,
    pub false_positives: usize,
}

/// Tallies matches over a video given its per-frame detections.
pub fn match_video(video: &EvalVideo, detections: &[Vec<PixelRegion>], beta: f64) -> MatchCounts {
    let mut counts = MatchCounts {
        track_hits: vec![0; video.tracks.len()],
        ..MatchCounts::default()
    };
    for (t, dets) in detections.iter().enumerate().take(video.num_frames) {
        if dets.is_empty() {
            continue;
        }
        let truths = video.truths(t);
        let boxes: Vec<BoundingBox> = truths.iter().map(|&(_, b)| b).collect();
        let m = match_frame(dets, &boxes, beta);
        for (&(track, _), &hit) in truths.iter().zip(&m.detected) {
            if hit {
                counts.track_hits[track] += 1;
                counts.regions_detected += 1;
            }
        }
        counts.false_positives += m.false_positives;
    }
    counts
}

/// Region-matching results of every video at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMatch {
    pub threshold: f64,
    pub videos: Vec<MatchCounts>,
}

/// Per-video, per-frame detections at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdDetections {
    pub threshold: f64,
    pub videos: Vec<Vec<Vec<PixelRegion>>>,
}

fn total_frames(videos: &[EvalVideo]) -> usize {
    videos.iter().map(|v| v.num_frames).sum()
}

pub fn match_all(detections: &[ThresholdDetections], videos: &[EvalVideo], beta: f64) -> Result<Vec<ThresholdMatch>> {
    detections
        .iter()
        .map(|d| {
            if d.videos.len() != videos.len() {
                return Err(Error::invalid("detections and ground truth cover different videos"));
            }
            Ok(ThresholdMatch {
                threshold: d.threshold,
                videos: videos
                    .iter()
                    .zip(&d.videos)
                    .map(|(v, dets)| match_video(v, dets, beta))
                    .collect(),
            })
        })
        .collect()
}

fn false_positive_rate(m: &ThresholdMatch, frames: usize) -> f64 {
    let fp: usize = m.videos.iter().map(|c| c.false_positives).sum();
    fp as f64 / frames as f64
}

fn track_detected(hits: usize, len: usize, alpha: f64) -> bool {
    hits as f64 / len as f64 >= alpha
}

/// TBDR against false positive regions per frame, from precomputed matches.
pub fn track_curve_from_matches(matches: &[ThresholdMatch], videos: &[EvalVideo], alpha: f64) -> Result<RocCurve> {
    let total_tracks: usize = videos.iter().map(|v| v.tracks.len()).sum();
    if total_tracks == 0 {
        return Err(Error::invalid("track-based rate undefined: no ground-truth tracks"));
    }
    let frames = total_frames(videos);
    let points = matches
        .iter()
        .map(|m| {
            let detected: usize = videos
                .iter()
                .zip(&m.videos)
                .map(|(v, c)| {
                    v.tracks
                        .iter()
                        .zip(&c.track_hits)
                        .filter(|(t, &hits)| track_detected(hits, t.boxes.len(), alpha))
                        .count()
                })
                .sum();
            RocPoint {
                threshold: m.threshold,
                fpr: false_positive_rate(m, frames),
                rate: detected as f64 / total_tracks as f64,
            }
        })
        .collect();
    Ok(RocCurve {
        criterion: Criterion::Track,
        points,
    })
}

/// RBDR against false positive regions per frame, from precomputed matches.
pub fn region_curve_from_matches(matches: &[ThresholdMatch], videos: &[EvalVideo]) -> Result<RocCurve> {
    let total: usize = videos.iter().map(|v| v.region_count()).sum();
    if total == 0 {
        return Err(Error::invalid("region-based rate undefined: no ground-truth regions"));
    }
    let frames = total_frames(videos);
    let points = matches
        .iter()
        .map(|m| RocPoint {
            threshold: m.threshold,
            fpr: false_positive_rate(m, frames),
            rate: m.videos.iter().map(|c| c.regions_detected).sum::<usize>() as f64 / total as f64,
        })
        .collect();
    Ok(RocCurve {
        criterion: Criterion::Region,
        points,
    })
}

/// Track-based detection rate curve.
pub fn track_based_curve(
    detections: &[ThresholdDetections],
    videos: &[EvalVideo],
    alpha: f64,
    beta: f64,
) -> Result<RocCurve> {
    track_curve_from_matches(&match_all(detections, videos, beta)?, videos, alpha)
}

/// Region-based detection rate curve.
pub fn region_based_curve(detections: &[ThresholdDetections], videos: &[EvalVideo], beta: f64) -> Result<RocCurve> {
    region_curve_from_matches(&match_all(detections, videos, beta)?, videos)
}

fn check_volumes(videos: &[EvalVideo], volumes: &[&ScoreVolume]) -> Result<()> {
    if videos.len() != volumes.len() {
        return Err(Error::invalid("each test video needs exactly one score volume"));
    }
    for (i, (v, vol)) in videos.iter().zip(volumes).enumerate() {
        if v.num_frames != vol.num_frames() {
            return Err(Error::DimensionMismatch(format!(
                "video {i}: {} annotated frames but {} scored frames",
                v.num_frames,
                vol.num_frames()
            )));
        }
        for track in &v.tracks {
            if track.boxes.values().any(|b| !b.fits_in(vol.width(), vol.height())) {
                return Err(Error::invalid(format!(
                    "video {i}: track {} leaves the {}x{} frame",
                    track.track_id,
                    vol.width(),
                    vol.height()
                )));
            }
        }
    }
    Ok(())
}

fn frame_counts(videos: &[EvalVideo]) -> Result<(usize, usize)> {
    let positives: usize = videos
        .iter()
        .map(|v| (0..v.num_frames).filter(|&t| !v.truths(t).is_empty()).count())
        .sum();
    let negatives = total_frames(videos) - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(
            "frame-level rates need both anomalous and normal frames",
        ));
    }
    Ok((positives, negatives))
}

/// Frame-level criterion: a frame is detected as soon as any pixel exceeds
/// the threshold, wherever that pixel is.
pub fn frame_level_curve(videos: &[EvalVideo], volumes: &[&ScoreVolume], thresholds: &[f64]) -> Result<RocCurve> {
    check_volumes(videos, volumes)?;
    let (positives, negatives) = frame_counts(videos)?;
    // (frame max, has truth) for every frame
    let frames: Vec<(f64, bool)> = videos
        .iter()
        .zip(volumes)
        .flat_map(|(v, vol)| (0..v.num_frames).map(move |t| (vol.frame_max(t) as f64, !v.truths(t).is_empty())))
        .collect();
    let points = thresholds
        .iter()
        .map(|&th| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for &(max, positive) in &frames {
                if max > th {
                    if positive {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            RocPoint {
                threshold: th,
                fpr: fp as f64 / negatives as f64,
                rate: tp as f64 / positives as f64,
            }
        })
        .collect();
    Ok(RocCurve {
        criterion: Criterion::Frame,
        points,
    })
}

/// Fraction of truth pixels a frame needs above threshold, as `NUM / DEN`.
const PIXEL_HIT_NUM: usize = 2;
const PIXEL_HIT_DEN: usize = 5;

/// Pixel-level criterion: an anomalous frame is a true positive when at
/// least 40% of the union of its truth boxes is above threshold; a normal
/// frame is a false positive when any pixel is. Detected pixels outside the
/// truth in anomalous frames are ignored.
pub fn pixel_level_curve(videos: &[EvalVideo], volumes: &[&ScoreVolume], thresholds: &[f64]) -> Result<RocCurve> {
    check_volumes(videos, volumes)?;
    let (positives, negatives) = frame_counts(videos)?;
    // Anomalous frames keep the scores on their truth union; normal frames
    // only need their maximum.
    let mut truth_scores: Vec<Vec<f32>> = Vec::new();
    let mut normal_max: Vec<f64> = Vec::new();
    for (v, vol) in videos.iter().zip(volumes) {
        for t in 0..v.num_frames {
            let truths = v.truths(t);
            if truths.is_empty() {
                normal_max.push(vol.frame_max(t) as f64);
                continue;
            }
            let mut covered = vec![false; vol.width() * vol.height()];
            for (_, b) in truths {
                for (r, c) in b.pixels() {
                    covered[r * vol.width() + c] = true;
                }
            }
            let frame = vol.frame(t);
            truth_scores.push(covered.iter().zip(frame).filter(|(&c, _)| c).map(|(_, &s)| s).collect());
        }
    }
    let points = par::map_slice(thresholds, |&th| {
        let tp = truth_scores
            .iter()
            .filter(|scores| {
                let hot = scores.iter().filter(|&&s| s as f64 > th).count();
                hot * PIXEL_HIT_DEN >= scores.len() * PIXEL_HIT_NUM
            })
            .count();
        let fp = normal_max.iter().filter(|&&m| m > th).count();
        RocPoint {
            threshold: th,
            fpr: fp as f64 / negatives as f64,
            rate: tp as f64 / positives as f64,
        }
    });
    Ok(RocCurve {
        criterion: Criterion::Pixel,
        points,
    })
}

/// Area under the detection-rate curve for false positive rates in `[0, 1]`.
///
/// Points are ordered by false positive rate (then rate) and joined linearly.
/// The curve starts at the origin when no point has a zero false positive
/// rate, is cut at the interpolated value at 1, and is extended flat at its
/// last rate when it ends before 1.
pub fn auc_fpr_le_1(curve: &RocCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(Error::invalid("empty ROC curve"));
    }
    let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.rate)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if pts[0].0 > 0.0 {
        pts.insert(0, (0.0, 0.0));
    }
    let mut area = 0.0;
    let mut last = pts[0];
    for &(x, y) in &pts[1..] {
        if x >= 1.0 {
            let y_at_1 = last.1 + (y - last.1) * (1.0 - last.0) / (x - last.0);
            area += (1.0 - last.0) * (last.1 + y_at_1) / 2.0;
            return Ok(area.clamp(0.0, 1.0));
        }
        area += (x - last.0) * (last.1 + y) / 2.0;
        last = (x, y);
    }
    area += (1.0 - last.0) * last.1;
    Ok(area.clamp(0.0, 1.0))
}

/// Nearest-rank quantile thresholds of the pooled positive scores.
///
/// Returns `0`, then the `i/(points−1)` quantiles for `i = 1..points−1` (the
/// last being the maximum), deduplicated and sorted descending. Volumes
/// without positive scores yield just `[0]`.
pub fn sweep_thresholds(volumes: &[&ScoreVolume], points: usize) -> Result<Vec<f64>> {
    if volumes.is_empty() {
        return Err(Error::invalid("no score volumes to sweep"));
    }
    let mut positive: Vec<f32> = volumes
        .iter()
        .flat_map(|v| v.data().iter().copied().filter(|&s| s > 0.0))
        .collect();
    let mut thresholds = vec![0.0f64];
    if !positive.is_empty() && points > 1 {
        positive.sort_unstable_by(f32::total_cmp);
        let n = positive.len();
        let steps = points - 1;
        for i in 1..=steps {
            // nearest rank: ceil(q·n) − 1, computed in integers
            let rank = (i * n).div_ceil(steps).max(1) - 1;
            thresholds.push(positive[rank.min(n - 1)] as f64);
        }
    }
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    Ok(thresholds)
}

/// A test video with its score volume.
#[derive(Debug, Clone, Copy)]
pub struct ScoredVideo<'a> {
    pub truth: &'a EvalVideo,
    pub volume: &'a ScoreVolume,
}

/// Per-track share of detected regions at each threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub video: usize,
    pub track_id: u32,
    pub label: String,
    /// Parallel to the report thresholds.
    pub fractions: Vec<f64>,
}

/// Curves, AUCs and the per-track table of one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub curves: Vec<RocCurve>,
    pub aucs: Vec<(Criterion, f64)>,
    pub tracks: Vec<TrackRow>,
}

impl EvalReport {
    pub fn curve(&self, criterion: Criterion) -> Option<&RocCurve> {
        self.curves.iter().find(|c| c.criterion == criterion)
    }

    pub fn auc(&self, criterion: Criterion) -> Option<f64> {
        self.aucs.iter().find(|(c, _)| *c == criterion).map(|&(_, a)| a)
    }

    /// `criterion,threshold,fpr,rate` rows, then one `# auc_fpr_le_1` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "criterion,threshold,fpr,rate")?;
        for curve in &self.curves {
            for p in &curve.points {
                writeln!(w, "{},{:?},{:?},{:?}", curve.criterion, p.threshold, p.fpr, p.rate)?;
            }
        }
        write!(w, "# auc_fpr_le_1")?;
        for (c, a) in &self.aucs {
            write!(w, ",{c}={a:?}")?;
        }
        writeln!(w)?;
        w.flush()
    }

    /// `video,track_id,label,threshold,fraction_detected` rows.
    pub fn write_track_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::invalid(format!("csv write: {e}"));
        out.write_record(["video", "track_id", "label", "threshold", "fraction_detected"])
            .map_err(err)?;
        for row in &self.tracks {
            for (t, f) in self.thresholds.iter().zip(&row.fractions) {
                out.write_record([
                    row.video.to_string(),
                    row.track_id.to_string(),
                    row.label.clone(),
                    format!("{t:?}"),
                    format!("{f:?}"),
                ])
                .map_err(err)?;
            }
        }
        out.flush().map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Evaluation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub alpha: f64,
    pub beta: f64,
    pub connectivity: Connectivity,
    pub criteria: Vec<Criterion>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            alpha: 0.1,
            beta: 0.1,
            connectivity: Connectivity::Four,
            criteria: Criterion::ALL.to_vec(),
        }
    }
}

fn track_rows(videos: &[EvalVideo], matches: &[ThresholdMatch]) -> Vec<TrackRow> {
    videos
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| {
            v.tracks.iter().enumerate().map(move |(ti, t)| TrackRow {
                video: vi,
                track_id: t.track_id,
                label: t.label.clone(),
                fractions: matches
                    .iter()
                    .map(|m| m.videos[vi].track_hits[ti] as f64 / t.boxes.len() as f64)
                    .collect(),
            })
        })
        .collect()
}

fn finish_report(thresholds: Vec<f64>, curves: Vec<RocCurve>, tracks: Vec<TrackRow>) -> Result<EvalReport> {
    let aucs = curves
        .iter()
        .map(|c| Ok((c.criterion, auc_fpr_le_1(c)?)))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        thresholds,
        curves,
        aucs,
        tracks,
    })
}

/// Sweeps `thresholds` (descending) over score volumes and computes the
/// requested criteria.
pub fn evaluate_volumes(videos: &[ScoredVideo<'_>], thresholds: &[f64], opts: &EvalOptions) -> Result<EvalReport> {
    let truths: Vec<EvalVideo> = videos.iter().map(|v| v.truth.clone()).collect();
    let volumes: Vec<&ScoreVolume> = videos.iter().map(|v| v.volume).collect();
    check_volumes(&truths, &volumes)?;
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));

    let needs_regions = opts
        .criteria
        .iter()
        .any(|c| matches!(c, Criterion::Track | Criterion::Region));
    let matches: Vec<ThresholdMatch> = if needs_regions {
        par::map_slice(&thresholds, |&th| ThresholdMatch {
            threshold: th,
            videos: videos
                .iter()
                .map(|v| {
                    let dets: Vec<Vec<PixelRegion>> = (0..v.volume.num_frames())
                        .map(|t| frame_detections(v.volume, t, th, opts.connectivity))
                        .collect();
                    match_video(v.truth, &dets, opts.beta)
                })
                .collect(),
        })
    } else {
        Vec::new()
    };

    let mut curves = Vec::new();
    for &c in &opts.criteria {
        curves.push(match c {
            Criterion::Track => track_curve_from_matches(&matches, &truths, opts.alpha)?,
            Criterion::Region => region_curve_from_matches(&matches, &truths)?,
            Criterion::Frame => frame_level_curve(&truths, &volumes, &thresholds)?,
            Criterion::Pixel => pixel_level_curve(&truths, &volumes, &thresholds)?,
        });
    }
    let tracks = if needs_regions {
        track_rows(&truths, &matches)
    } else {
        Vec::new()
    };
    finish_report(thresholds, curves, tracks)
}

/// Evaluates scored detection regions (e.g. from a third-party detector).
///
/// The sweep runs over the distinct record scores; at threshold `t` the
/// records with `score ≥ t` are kept. Only track and region criteria apply.
pub fn evaluate_detections(
    videos: &[EvalVideo],
    records: &[Vec<DetectionRecord>],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if videos.len() != records.len() {
        return Err(Error::invalid("each test video needs exactly one detection list"));
    }
    if let Some(c) = opts
        .criteria
        .iter()
        .find(|c| matches!(c, Criterion::Frame | Criterion::Pixel))
    {
        return Err(Error::invalid(format!("the {c} criterion needs score volumes")));
    }
    for (vi, (v, recs)) in videos.iter().zip(records).enumerate() {
        if let Some(r) = recs.iter().find(|r| r.frame_index >= v.num_frames) {
            return Err(Error::invalid(format!(
                "video {vi}: detection in frame {} beyond the {} frame video",
                r.frame_index, v.num_frames
            )));
        }
    }
    let mut thresholds: Vec<f64> = records.iter().flatten().map(|r| r.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let matches: Vec<ThresholdMatch> = par::map_slice(&thresholds, |&th| ThresholdMatch {
        threshold: th,
        videos: videos
            .iter()
            .zip(records)
            .map(|(v, recs)| {
                let mut dets = vec![Vec::new(); v.num_frames];
                for r in recs.iter().filter(|r| r.score >= th) {
                    dets[r.frame_index].push(r.region.clone());
                }
                match_video(v, &dets, opts.beta)
            })
            .collect(),
    });
    let mut curves = Vec::new();
    for &c in &opts.criteria {
        curves.push(match c {
            Criterion::Track => track_curve_from_matches(&matches, videos, opts.alpha)?,
            Criterion::Region => region_curve_from_matches(&matches, videos)?,
            Criterion::Frame | Criterion::Pixel => unreachable!("rejected above"),
        });
    }
    finish_report(thresholds.clone(), curves, track_rows(videos, &matches))
}
