//! Ground-truth tracks and detection records, with their CSV formats.
//!
//! Ground truth, one row per (frame, track) pair, 0-based frame index:
//!
//! ```text
//! frame_index,track_id,x,y,w,h,label
//! 0,1,10,10,5,5,jaywalk
//! ```
//!
//! Detections, one row per connected region (the box is the region extent):
//!
//! ```text
//! frame_index,track_id,min_row,min_col,height,width,score
//! 12,-1,40,20,18,33,0.8125
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, PixelRegion};

pub const GROUND_TRUTH_HEADER: [&str; 7] = ["frame_index", "track_id", "x", "y", "w", "h", "label"];
pub const DETECTION_HEADER: [&str; 7] = [
    "frame_index",
    "track_id",
    "min_row",
    "min_col",
    "height",
    "width",
    "score",
];

/// One annotated anomalous event: a box per frame it is visible in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthTrack {
    pub track_id: u32,
    pub label: String,
    /// Frame index to box.
    pub boxes: BTreeMap<usize, BoundingBox>,
}

impl GroundTruthTrack {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Frame geometry that annotations are validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoBounds {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
}

/// Checks every box of every track against `bounds`.
pub fn check_bounds(tracks: &[GroundTruthTrack], bounds: VideoBounds) -> Result<()> {
    for track in tracks {
        for (&frame, b) in &track.boxes {
            if frame >= bounds.num_frames {
                return Err(Error::invalid(format!(
                    "track {} has frame {frame} beyond the {} frame video",
                    track.track_id, bounds.num_frames
                )));
            }
            if !b.fits_in(bounds.width, bounds.height) {
                return Err(Error::invalid(format!(
                    "track {} frame {frame}: box out of bounds",
                    track.track_id
                )));
            }
        }
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, what: &str) -> std::result::Result<T, String> {
    let raw = record.get(i).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| format!("{what} {raw:?} is not a valid integer"))
}

/// Parses ground truth from any reader. `bounds`, when given, also checks geometry.
pub fn read_ground_truth<R: Read>(reader: R, bounds: Option<VideoBounds>) -> Result<Vec<GroundTruthTrack>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::invalid(format!("ground truth header: {e}")))?
        .clone();
    if header.len() != GROUND_TRUTH_HEADER.len() {
        return Err(Error::invalid(format!(
            "ground truth header must be {}",
            GROUND_TRUTH_HEADER.join(",")
        )));
    }
    let mut tracks: BTreeMap<u32, GroundTruthTrack> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        // row numbers count the header as line 1
        let line = i + 2;
        let record = record.map_err(|e| Error::invalid(format!("line {line}: {e}")))?;
        let err = |m: String| Error::invalid(format!("line {line}: {m}"));
        if record.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", record.len())));
        }
        let frame: usize = field(&record, 0, "frame_index").map_err(err)?;
        let track_id: u32 = field(&record, 1, "track_id").map_err(err)?;
        let x: usize = field(&record, 2, "x").map_err(err)?;
        let y: usize = field(&record, 3, "y").map_err(err)?;
        let w: usize = field(&record, 4, "w").map_err(err)?;
        let h: usize = field(&record, 5, "h").map_err(err)?;
        let label = record.get(6).unwrap_or("").trim().to_string();
        if track_id == 0 {
            return Err(err("track_id must be positive".into()));
        }
        let b = BoundingBox::new(x, y, w, h).map_err(|_| err("degenerate box".into()))?;
        let track = tracks.entry(track_id).or_insert_with(|| GroundTruthTrack {
            track_id,
            label: label.clone(),
            boxes: BTreeMap::new(),
        });
        if track.label != label {
            return Err(err(format!(
                "track {track_id} labeled both {:?} and {label:?}",
                track.label
            )));
        }
        if track.boxes.insert(frame, b).is_some() {
            return Err(err(format!("duplicate row for frame {frame}, track {track_id}")));
        }
    }
    let tracks: Vec<_> = tracks.into_values().collect();
    if let Some(bounds) = bounds {
        check_bounds(&tracks, bounds)?;
    }
    Ok(tracks)
}

/// Reads a ground-truth CSV file, sorted by track id.
pub fn parse_ground_truth(path: impl AsRef<Path>, bounds: Option<VideoBounds>) -> Result<Vec<GroundTruthTrack>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ground_truth(file, bounds).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::format(path, m),
        other => other,
    })
}

/// Writes tracks as CSV, rows ordered by (frame, track).
pub fn write_ground_truth<W: Write>(writer: W, tracks: &[GroundTruthTrack]) -> Result<()> {
    let mut rows: Vec<(usize, u32, &BoundingBox, &str)> = tracks
        .iter()
        .flat_map(|t| t.boxes.iter().map(move |(&f, b)| (f, t.track_id, b, t.label.as_str())))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::invalid(format!("csv write: {e}"));
    w.write_record(GROUND_TRUTH_HEADER).map_err(csv_err)?;
    for (frame, id, b, label) in rows {
        w.write_record([
            frame.to_string(),
            id.to_string(),
            b.x.to_string(),
            b.y.to_string(),
            b.w.to_string(),
            b.h.to_string(),
            label.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv write: {e}")))?;
    Ok(())
}

pub fn write_ground_truth_file(path: impl AsRef<Path>, tracks: &[GroundTruthTrack]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ground_truth(std::io::BufWriter::new(file), tracks)
}

/// Ground-truth boxes grouped per frame as `(track position, box)` pairs,
/// where the position indexes into `tracks`.
pub fn boxes_by_frame(tracks: &[GroundTruthTrack], num_frames: usize) -> Vec<Vec<(usize, BoundingBox)>> {
    let mut frames = vec![Vec::new(); num_frames];
    for (ti, track) in tracks.iter().enumerate() {
        for (&f, b) in &track.boxes {
            if f < num_frames {
                frames[f].push((ti, *b));
            }
        }
    }
    frames
}

/// A detected anomalous region in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame_index: usize,
    /// Ground-truth track this region matched, if known.
    pub track_id: Option<u32>,
    pub region: PixelRegion,
    /// Highest score inside the region: the largest threshold at which some
    /// of it is still detected.
    pub score: f64,
}

pub fn write_detections<W: Write>(writer: W, records: &[DetectionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::invalid(format!("csv write: {e}"));
    w.write_record(DETECTION_HEADER).map_err(csv_err)?;
    for rec in records {
        let e = rec.region.extent();
        let track = rec.track_id.map_or("-1".to_string(), |t| t.to_string());
        w.write_record([
            rec.frame_index.to_string(),
            track,
            e.y.to_string(),
            e.x.to_string(),
            e.h.to_string(),
            e.w.to_string(),
            format!("{:?}", rec.score),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv write: {e}")))?;
    Ok(())
}

pub fn write_detections_file(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_detections(std::io::BufWriter::new(file), records)
}

/// Reads detection rows; each region is the rasterized extent box.
pub fn read_detections<R: Read>(reader: R) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::invalid(format!("line {line}: {e}")))?;
        let err = |m: String| Error::invalid(format!("line {line}: {m}"));
        if record.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", record.len())));
        }
        let frame_index: usize = field(&record, 0, "frame_index").map_err(err)?;
        let track: i64 = field(&record, 1, "track_id").map_err(err)?;
        let row: usize = field(&record, 2, "min_row").map_err(err)?;
        let col: usize = field(&record, 3, "min_col").map_err(err)?;
        let h: usize = field(&record, 4, "height").map_err(err)?;
        let w: usize = field(&record, 5, "width").map_err(err)?;
        let score: f64 = record
            .get(6)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| err("score is not a number".into()))?;
        if !(score >= 0.0 && score.is_finite()) {
            return Err(err("score must be finite and >= 0".into()));
        }
        let track_id = match track {
            -1 => None,
            t if t > 0 && t <= u32::MAX as i64 => Some(t as u32),
            t => return Err(err(format!("invalid track id {t}"))),
        };
        let b = BoundingBox::new(col, row, w, h).map_err(|_| err("degenerate box".into()))?;
        out.push(DetectionRecord {
            frame_index,
            track_id,
            region: PixelRegion::from_box(&b),
            score,
        });
    }
    Ok(out)
}

pub fn parse_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections(file).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::format(path, m),
        other => other,
    })
}

/// Maps track ids to their position in `tracks`.
pub fn track_index(tracks: &[GroundTruthTrack]) -> HashMap<u32, usize> {
    tracks.iter().enumerate().map(|(i, t)| (t.track_id, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "frame_index,track_id,x,y,w,h,label\n";

    #[test]
    fn groups_rows_by_track() {
        let text = format!("{HEADER}0,1,10,10,5,5,jaywalk\n1,1,11,10,5,5,jaywalk\n");
        let tracks = read_ground_truth(text.as_bytes(), None).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].track_id, 1);
        assert_eq!(tracks[0].label, "jaywalk");
        assert_eq!(tracks[0].boxes.len(), 2);
        assert_eq!(tracks[0].boxes[&1], BoundingBox::new(11, 10, 5, 5).unwrap());
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_ground_truth(HEADER.as_bytes(), None).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let degenerate = format!("{HEADER}0,1,10,10,0,5,x\n");
        let err = read_ground_truth(degenerate.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("degenerate box"), "{err}");

        let short = format!("{HEADER}0,1,10,10,5\n");
        assert!(read_ground_truth(short.as_bytes(), None).is_err());

        let non_int = format!("{HEADER}0,1,10.5,10,5,5,x\n");
        assert!(read_ground_truth(non_int.as_bytes(), None).is_err());

        let dup = format!("{HEADER}0,1,1,1,5,5,x\n0,1,2,2,5,5,x\n");
        let err = read_ground_truth(dup.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let zero_id = format!("{HEADER}0,0,1,1,5,5,x\n");
        assert!(read_ground_truth(zero_id.as_bytes(), None).is_err());
    }

    #[test]
    fn bounds_checked_when_supplied() {
        let text = format!("{HEADER}0,1,60,10,5,5,x\n");
        let bounds = VideoBounds {
            width: 64,
            height: 64,
            num_frames: 10,
        };
        assert!(read_ground_truth(text.as_bytes(), None).is_ok());
        assert!(read_ground_truth(text.as_bytes(), Some(bounds)).is_err());
        let late = format!("{HEADER}10,1,0,0,5,5,x\n");
        assert!(read_ground_truth(late.as_bytes(), Some(bounds)).is_err());
    }

    #[test]
    fn detections_round_trip() {
        let rec = DetectionRecord {
            frame_index: 3,
            track_id: None,
            region: PixelRegion::from_box(&BoundingBox::new(4, 2, 3, 5).unwrap()),
            score: 0.8125,
        };
        let matched = DetectionRecord {
            track_id: Some(7),
            ..rec.clone()
        };
        let mut buf = Vec::new();
        write_detections(&mut buf, &[rec.clone(), matched.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame_index,track_id,min_row,min_col,height,width,score\n3,-1,2,4,5,3,0.8125\n"));
        assert_eq!(read_detections(buf.as_slice()).unwrap(), vec![rec, matched]);
    }

    fn arb_rows() -> impl Strategy<Value = Vec<(usize, u32, usize, usize, usize, usize)>> {
        proptest::collection::vec(
            (0usize..20, 1u32..5, 0usize..50, 0usize..50, 1usize..10, 1usize..10),
            0..30,
        )
    }

    proptest! {
        #[test]
        fn write_read_and_shuffle_invariance(rows in arb_rows(), seed in any::<u64>()) {
            // drop duplicate (frame, track) pairs
            let mut seen = std::collections::HashSet::new();
            let rows: Vec<_> = rows.into_iter().filter(|r| seen.insert((r.0, r.1))).collect();
            let to_csv = |rows: &[(usize, u32, usize, usize, usize, usize)]| {
                let mut s = HEADER.to_string();
                for r in rows {
                    s.push_str(&format!("{},{},{},{},{},{},label {}\n", r.0, r.1, r.2, r.3, r.4, r.5, r.1));
                }
                s
            };
            let tracks = read_ground_truth(to_csv(&rows).as_bytes(), None).unwrap();

            let mut shuffled = rows.clone();
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(&read_ground_truth(to_csv(&shuffled).as_bytes(), None).unwrap(), &tracks);

            let mut buf = Vec::new();
            write_ground_truth(&mut buf, &tracks).unwrap();
            prop_assert_eq!(read_ground_truth(buf.as_slice(), None).unwrap(), tracks);
        }
    }
}
