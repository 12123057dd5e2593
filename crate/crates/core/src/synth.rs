//! Deterministic synthetic street scenes with ground-truth anomaly tracks.
//!
//! A scene is a textured static background crossed by horizontal traffic
//! lanes. Sprites are filled rectangles of one intensity. Lane traffic is
//! normal; jaywalkers, loiterers and wrong-direction movers are anomalous
//! and get one ground-truth track each.
//!
//! All randomness comes from a 64-bit linear congruential generator
//! (`state ← state · 6364136223846793005 + 1442695040888963407`, output the
//! top 32 bits), so output is identical on every platform.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::annotations::{write_ground_truth_file, GroundTruthTrack};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::par;
use crate::video::{write_frame_sequence, Frame, FrameSequence};

const LCG_MUL: u64 = 6364136223846793005;
const LCG_INC: u64 = 1442695040888963407;

/// The scene generator's random source.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    /// Stream for `(seed, stream)`, e.g. one stream per frame.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut g = Lcg {
            state: seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        };
        // decorrelate nearby seeds
        for _ in 0..4 {
            g.next_u32();
        }
        g
    }

    pub fn next_u32(&mut self) -> u32 {
        self.state = self.state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
        (self.state >> 32) as u32
    }

    /// Uniform integer in `[-amp, amp]`.
    pub fn symmetric(&mut self, amp: u32) -> i32 {
        if amp == 0 {
            return 0;
        }
        (self.next_u32() % (2 * amp + 1)) as i32 - amp as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    fn sign(self) -> i64 {
        match self {
            Direction::Left => -1,
            Direction::Right => 1,
        }
    }

    fn reversed(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

/// A horizontal band of rows with traffic in one direction.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    /// First row of the band.
    pub top: usize,
    /// One past the last row of the band.
    pub bottom: usize,
    pub direction: Direction,
    /// Pixels per frame.
    pub speed: usize,
    /// Spawn a car at the entry edge every this many frames (0: no traffic).
    #[serde(default)]
    pub spawn_every: usize,
    /// Offset of the first spawn; cars already on the road at frame 0 are
    /// drawn as if spawned earlier.
    #[serde(default)]
    pub spawn_phase: usize,
    /// Car `[width, height]`.
    #[serde(default = "default_car")]
    pub car: [usize; 2],
    #[serde(default = "default_car_intensity")]
    pub car_intensity: u8,
}

fn default_car() -> [usize; 2] {
    [16, 10]
}

fn default_car_intensity() -> u8 {
    220
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActorKind {
    /// Moves with its lane's traffic; normal.
    Lane,
    /// Crosses vertically at a fixed column.
    Jaywalk,
    /// Stands still.
    Loiter,
    /// Drives along a lane against its direction.
    WrongDirection,
}

impl ActorKind {
    pub fn is_anomalous(self) -> bool {
        !matches!(self, ActorKind::Lane)
    }

    pub fn label(self) -> &'static str {
        match self {
            ActorKind::Lane => "lane",
            ActorKind::Jaywalk => "jaywalk",
            ActorKind::Loiter => "loiter",
            ActorKind::WrongDirection => "wrong-direction",
        }
    }
}

/// One scripted sprite.
///
/// `x`/`y` give the top-left corner at `start`. Lane-bound actors default
/// to entering at the lane's entry edge, vertically centered in the band;
/// without `end` they live until they would leave the frame (or the video
/// ends). An explicit `end` (inclusive) whose path leaves the frame is an
/// error.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actor {
    pub kind: ActorKind,
    /// `[width, height]`.
    pub size: [usize; 2],
    pub start: usize,
    #[serde(default)]
    pub end: Option<usize>,
    #[serde(default)]
    pub lane: Option<usize>,
    #[serde(default)]
    pub x: Option<i64>,
    #[serde(default)]
    pub y: Option<i64>,
    /// Vertical pixels per frame for jaywalkers (negative: upward).
    #[serde(default)]
    pub vy: Option<i64>,
    #[serde(default = "default_actor_intensity")]
    pub intensity: u8,
}

fn default_actor_intensity() -> u8 {
    30
}

/// One video of a scene.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoSpec {
    /// Output subdirectory.
    pub name: String,
    pub num_frames: usize,
    /// Noise seed; the background is shared by all videos of a scene.
    pub seed: u64,
    #[serde(default, rename = "actor")]
    pub actors: Vec<Actor>,
}

/// A camera view: background, lanes, noise and the videos recorded from it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Background texture seed.
    pub seed: u64,
    /// Background noise amplitude: each background pixel is offset by a
    /// uniform integer in `[-noise, noise]` per frame.
    #[serde(default)]
    pub noise: u32,
    /// Side of the square background texture cells.
    #[serde(default = "default_cell")]
    pub texture_cell: usize,
    #[serde(default, rename = "lane")]
    pub lanes: Vec<Lane>,
    #[serde(default, rename = "video")]
    pub videos: Vec<VideoSpec>,
}

fn default_cell() -> usize {
    4
}

impl FromStr for SceneSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(s).map_err(|e| Error::Config(format!("scene spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A generated video.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub name: String,
    pub frames: FrameSequence,
    pub tracks: Vec<GroundTruthTrack>,
}

/// A sprite's position over its lifetime.
#[derive(Debug, Clone)]
struct SpritePath {
    start: usize,
    /// `(x, y)` per frame from `start`.
    corners: Vec<(i64, i64)>,
    w: usize,
    h: usize,
    intensity: u8,
}

impl SpritePath {
    fn box_at(&self, t: usize) -> Option<BoundingBox> {
        let i = t.checked_sub(self.start)?;
        let &(x, y) = self.corners.get(i)?;
        BoundingBox::new(x as usize, y as usize, self.w, self.h).ok()
    }
}

fn in_frame(x: i64, y: i64, w: usize, h: usize, width: usize, height: usize) -> bool {
    x >= 0 && y >= 0 && x as usize + w <= width && y as usize + h <= height
}

impl SceneSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("scene width and height must be positive".into()));
        }
        if self.texture_cell == 0 {
            return Err(Error::Config("texture_cell must be positive".into()));
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.top >= lane.bottom || lane.bottom > self.height {
                return Err(Error::Config(format!(
                    "lane {i}: rows {}..{} outside the frame",
                    lane.top, lane.bottom
                )));
            }
            if lane.speed == 0 {
                return Err(Error::Config(format!("lane {i}: speed must be positive")));
            }
            let [w, h] = lane.car;
            if lane.spawn_every > 0 && (w == 0 || h == 0 || w > self.width || h > lane.bottom - lane.top) {
                return Err(Error::Config(format!("lane {i}: car does not fit the lane")));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for v in &self.videos {
            if v.num_frames == 0 {
                return Err(Error::Config(format!(
                    "video {:?}: num_frames must be positive",
                    v.name
                )));
            }
            let valid_name = !v.name.is_empty()
                && v.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid_name {
                return Err(Error::Config(format!("video name {:?} must be alphanumeric", v.name)));
            }
            if !names.insert(&v.name) {
                return Err(Error::Config(format!("duplicate video name {:?}", v.name)));
            }
            for (i, a) in v.actors.iter().enumerate() {
                self.actor_path(a, v.num_frames)
                    .map_err(|e| Error::Config(format!("video {:?} actor {i}: {e}", v.name)))?;
            }
        }
        Ok(())
    }

    fn background(&self) -> Vec<u8> {
        let cells_x = self.width.div_ceil(self.texture_cell);
        let cells_y = self.height.div_ceil(self.texture_cell);
        let mut rng = Lcg::new(self.seed, u64::MAX);
        let cells: Vec<u8> = (0..cells_x * cells_y)
            .map(|_| 70 + (rng.next_u32() % 81) as u8)
            .collect();
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .map(|(r, c)| cells[(r / self.texture_cell) * cells_x + c / self.texture_cell])
            .collect()
    }

    fn lane(&self, index: Option<usize>) -> std::result::Result<&Lane, String> {
        let i = index.ok_or("needs a lane")?;
        self.lanes.get(i).ok_or_else(|| format!("no lane {i}"))
    }

    fn actor_path(&self, a: &Actor, num_frames: usize) -> std::result::Result<SpritePath, String> {
        let [w, h] = a.size;
        if w == 0 || h == 0 {
            return Err("size must be positive".into());
        }
        if a.start >= num_frames {
            return Err(format!("start {} beyond the {num_frames} frame video", a.start));
        }
        if let Some(end) = a.end {
            if end < a.start || end >= num_frames {
                return Err(format!("end {end} outside {}..{num_frames}", a.start));
            }
        }
        let (x0, y0, vx, vy) = match a.kind {
            ActorKind::Lane | ActorKind::WrongDirection => {
                let lane = self.lane(a.lane)?;
                let dir = if a.kind == ActorKind::Lane {
                    lane.direction
                } else {
                    lane.direction.reversed()
                };
                let entry = match dir {
                    Direction::Right => 0,
                    Direction::Left => self.width as i64 - w as i64,
                };
                let centered = ((lane.top + lane.bottom) as i64 - h as i64) / 2;
                (
                    a.x.unwrap_or(entry),
                    a.y.unwrap_or(centered),
                    dir.sign() * lane.speed as i64,
                    0,
                )
            }
            ActorKind::Jaywalk => {
                let x = a.x.ok_or("jaywalk needs x")?;
                let y = a.y.ok_or("jaywalk needs y")?;
                (x, y, 0, a.vy.unwrap_or(-1))
            }
            ActorKind::Loiter => (a.x.ok_or("loiter needs x")?, a.y.ok_or("loiter needs y")?, 0, 0),
        };
        let last = a.end.unwrap_or(num_frames - 1);
        let mut corners = Vec::new();
        for t in a.start..=last {
            let k = (t - a.start) as i64;
            let (x, y) = (x0 + vx * k, y0 + vy * k);
            if !in_frame(x, y, w, h, self.width, self.height) {
                if a.end.is_none() && t > a.start {
                    break;
                }
                return Err(format!("path leaves the frame at frame {t}"));
            }
            corners.push((x, y));
        }
        Ok(SpritePath {
            start: a.start,
            corners,
            w,
            h,
            intensity: a.intensity,
        })
    }

    /// Cars spawned by lane generators that are visible in `0..num_frames`.
    fn traffic(&self, num_frames: usize) -> Vec<SpritePath> {
        let mut paths = Vec::new();
        for lane in &self.lanes {
            if lane.spawn_every == 0 {
                continue;
            }
            let [w, h] = lane.car;
            let travel = (self.width - w) / lane.speed + 1;
            let y = ((lane.top + lane.bottom - h) / 2) as i64;
            let entry = match lane.direction {
                Direction::Right => 0,
                Direction::Left => (self.width - w) as i64,
            };
            let vx = lane.direction.sign() * lane.speed as i64;
            // spawn times, possibly negative, whose trip overlaps the video
            let mut spawn = lane.spawn_phase as i64;
            while spawn + travel as i64 > 0 {
                spawn -= lane.spawn_every as i64;
            }
            spawn += lane.spawn_every as i64;
            while spawn < num_frames as i64 {
                let first = spawn.max(0);
                let last = (spawn + travel as i64 - 1).min(num_frames as i64 - 1);
                let corners = (first..=last).map(|t| (entry + vx * (t - spawn), y)).collect();
                paths.push(SpritePath {
                    start: first as usize,
                    corners,
                    w,
                    h,
                    intensity: lane.car_intensity,
                });
                spawn += lane.spawn_every as i64;
            }
        }
        paths
    }

    /// Renders one video.
    pub fn generate_video(&self, video: &VideoSpec) -> Result<SynthVideo> {
        let n = video.num_frames;
        let mut sprites = self.traffic(n);
        let mut tracks = Vec::new();
        for (i, a) in video.actors.iter().enumerate() {
            let path = self
                .actor_path(a, n)
                .map_err(|e| Error::Config(format!("video {:?} actor {i}: {e}", video.name)))?;
            if a.kind.is_anomalous() {
                let boxes: BTreeMap<usize, BoundingBox> = (path.start..path.start + path.corners.len())
                    .filter_map(|t| path.box_at(t).map(|b| (t, b)))
                    .collect();
                tracks.push(GroundTruthTrack {
                    track_id: tracks.len() as u32 + 1,
                    label: a.kind.label().to_string(),
                    boxes,
                });
            }
            sprites.push(path);
        }
        let background = self.background();
        let (width, height, noise, seed) = (self.width, self.height, self.noise, video.seed);
        let frames = par::map_range(n, |t| {
            let mut rng = Lcg::new(seed, t as u64);
            let mut data: Vec<u8> = background
                .iter()
                .map(|&b| (b as i32 + rng.symmetric(noise)).clamp(0, 255) as u8)
                .collect();
            for s in &sprites {
                if let Some(b) = s.box_at(t) {
                    for (r, c) in b.pixels() {
                        data[r * width + c] = s.intensity;
                    }
                }
            }
            Frame::new(width, height, 1, data)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(SynthVideo {
            name: video.name.clone(),
            frames: FrameSequence::new(frames)?,
            tracks,
        })
    }

    /// Renders every video of the scene.
    pub fn generate(&self) -> Result<Vec<SynthVideo>> {
        self.validate()?;
        self.videos.iter().map(|v| self.generate_video(v)).collect()
    }
}

/// Writes `<out>/<name>/` frame directories, each with a `gt.csv`.
pub fn write_scene(videos: &[SynthVideo], out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    for v in videos {
        let dir = out.join(&v.name);
        write_frame_sequence(&v.frames, &dir)?;
        write_ground_truth_file(dir.join("gt.csv"), &v.tracks)?;
    }
    Ok(())
}
