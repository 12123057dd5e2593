//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # patch geometry
//! H = 40
//! W = 40
//! T = 4
//! s = 20
//! alpha = 0.1
//! ```
//!
//! Blank lines and `#` comments are ignored, unknown keys are rejected and
//! missing keys keep their defaults.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::geometry::Connectivity;

/// Where per-frame optical flow comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowSource {
    /// Built-in exhaustive block matching.
    #[default]
    BlockMatching,
    /// `<frame>.dx.vadsv` / `<frame>.dy.vadsv` files next to the frames.
    Precomputed,
}

impl FromStr for FlowSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(FlowSource::BlockMatching),
            "precomputed" => Ok(FlowSource::Precomputed),
            other => Err(Error::Config(format!(
                "flow_source must be block or precomputed, got {other:?}"
            ))),
        }
    }
}

impl FlowSource {
    fn as_str(&self) -> &'static str {
        match self {
            FlowSource::BlockMatching => "block",
            FlowSource::Precomputed => "precomputed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Patch height `H` in pixels.
    pub patch_height: usize,
    /// Patch width `W` in pixels.
    pub patch_width: usize,
    /// Patch temporal extent `T` in frames.
    pub patch_frames: usize,
    /// Spatial grid step `s` in pixels.
    pub step: usize,
    /// Fraction of a track's regions that must be detected.
    pub alpha: f64,
    /// IOU needed for a detection to match a ground-truth region.
    pub beta: f64,
    pub blur_sigma: f64,
    /// Foreground threshold Θ in intensity units.
    pub fg_threshold: f64,
    /// `None` selects the feature-specific default, see
    /// [`Config::effective_exemplar_threshold`].
    pub exemplar_threshold: Option<f64>,
    pub bg_init_frames: usize,
    pub bg_update_weight: f64,
    pub connectivity: Connectivity,
    pub feature: FeatureKind,
    pub flow_source: FlowSource,
    pub flow_block: usize,
    pub flow_radius: usize,
    /// ε in the normalized L1 distance.
    pub l1_epsilon: f64,
    /// Number of thresholds in the default ROC sweep.
    pub sweep_points: usize,
    /// Explicit ROC thresholds; overrides the quantile sweep when set.
    pub thresholds: Option<Vec<f64>>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            patch_height: 40,
            patch_width: 40,
            patch_frames: 4,
            step: 20,
            alpha: 0.1,
            beta: 0.1,
            blur_sigma: 5.0,
            fg_threshold: 12.0,
            exemplar_threshold: None,
            bg_init_frames: 200,
            bg_update_weight: 0.95,
            connectivity: Connectivity::Four,
            feature: FeatureKind::FgMask,
            flow_source: FlowSource::BlockMatching,
            flow_block: 8,
            flow_radius: 7,
            l1_epsilon: 1e-6,
            sweep_points: 201,
            thresholds: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl Config {
    /// Keys accepted by [`Config::set`], in canonical order.
    pub const KEYS: &'static [&'static str] = &[
        "H",
        "W",
        "T",
        "s",
        "alpha",
        "beta",
        "blur_sigma",
        "fg_threshold",
        "exemplar_threshold",
        "bg_init_frames",
        "bg_update_weight",
        "connectivity",
        "feature",
        "flow_source",
        "flow_block",
        "flow_radius",
        "l1_epsilon",
        "sweep_points",
        "thresholds",
    ];

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            config.apply(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies one override and re-validates.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut next = self.clone();
        next.apply(key.trim(), value.trim())?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        self.set(key, value)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "H" => self.patch_height = parse_num(key, value)?,
            "W" => self.patch_width = parse_num(key, value)?,
            "T" => self.patch_frames = parse_num(key, value)?,
            "s" => self.step = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "blur_sigma" => self.blur_sigma = parse_num(key, value)?,
            "fg_threshold" => self.fg_threshold = parse_num(key, value)?,
            "exemplar_threshold" => {
                self.exemplar_threshold = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "bg_init_frames" => self.bg_init_frames = parse_num(key, value)?,
            "bg_update_weight" => self.bg_update_weight = parse_num(key, value)?,
            "connectivity" => self.connectivity = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "feature" => self.feature = value.parse()?,
            "flow_source" => self.flow_source = value.parse()?,
            "flow_block" => self.flow_block = parse_num(key, value)?,
            "flow_radius" => self.flow_radius = parse_num(key, value)?,
            "l1_epsilon" => self.l1_epsilon = parse_num(key, value)?,
            "sweep_points" => self.sweep_points = parse_num(key, value)?,
            "thresholds" => {
                self.thresholds = match value {
                    "" | "auto" => None,
                    list => Some(
                        list.split(',')
                            .map(|t| parse_num(key, t.trim()))
                            .collect::<Result<Vec<f64>>>()?,
                    ),
                }
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("H", self.patch_height),
            ("W", self.patch_width),
            ("T", self.patch_frames),
            ("s", self.step),
            ("flow_block", self.flow_block),
            ("sweep_points", self.sweep_points),
            ("bg_init_frames", self.bg_init_frames),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be at least 1")));
            }
        }
        for (key, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{key} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "blur_sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if !(self.l1_epsilon > 0.0 && self.l1_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "l1_epsilon must be positive, got {}",
                self.l1_epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.bg_update_weight) {
            return Err(Error::Config(format!(
                "bg_update_weight must lie in [0, 1], got {}",
                self.bg_update_weight
            )));
        }
        let mut thresholds = vec![("fg_threshold", self.fg_threshold)];
        if let Some(t) = self.exemplar_threshold {
            thresholds.push(("exemplar_threshold", t));
        }
        for &t in self.thresholds.iter().flatten() {
            thresholds.push(("thresholds", t));
        }
        for (key, v) in thresholds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Exemplar-selection threshold for the configured feature kind.
    ///
    /// Defaults scale with the feature length: `0.05·sqrt(H·W·T)` for blurred
    /// foreground masks under L2, and `0.05·(2·H·W·T)` for flow under the
    /// normalized L1 distance (whose per-element terms are at most 1).
    pub fn effective_exemplar_threshold(&self) -> f64 {
        if let Some(t) = self.exemplar_threshold {
            return t;
        }
        let volume = (self.patch_height * self.patch_width * self.patch_frames) as f64;
        match self.feature {
            FeatureKind::FgMask => 0.5 * volume.sqrt() * 0.1,
            FeatureKind::Flow => 0.05 * (2.0 * volume),
        }
    }

    /// Serializes every key in canonical order; `parse` reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let thresholds = match &self.thresholds {
            None => "auto".to_string(),
            Some(list) => list.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(","),
        };
        let exemplar = match self.exemplar_threshold {
            None => "auto".to_string(),
            Some(t) => format!("{t:?}"),
        };
        let values: [(&str, String); 19] = [
            ("H", self.patch_height.to_string()),
            ("W", self.patch_width.to_string()),
            ("T", self.patch_frames.to_string()),
            ("s", self.step.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("beta", format!("{:?}", self.beta)),
            ("blur_sigma", format!("{:?}", self.blur_sigma)),
            ("fg_threshold", format!("{:?}", self.fg_threshold)),
            ("exemplar_threshold", exemplar),
            ("bg_init_frames", self.bg_init_frames.to_string()),
            ("bg_update_weight", format!("{:?}", self.bg_update_weight)),
            ("connectivity", self.connectivity.to_string()),
            ("feature", self.feature.to_string()),
            ("flow_source", self.flow_source.as_str().to_string()),
            ("flow_block", self.flow_block.to_string()),
            ("flow_radius", self.flow_radius.to_string()),
            ("l1_epsilon", format!("{:?}", self.l1_epsilon)),
            ("sweep_points", self.sweep_points.to_string()),
            ("thresholds", thresholds),
        ];
        for (key, value) in values {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!((c.patch_height, c.patch_width, c.step, c.patch_frames), (40, 40, 20, 4));
        assert_eq!((c.alpha, c.beta), (0.1, 0.1));
        assert_eq!(c.connectivity, Connectivity::Four);
    }

    #[test]
    fn single_key_override() {
        let c = Config::parse("# temporal extent\nT = 7\n").unwrap();
        assert_eq!(c.patch_frames, 7);
        assert_eq!(c.patch_height, 40);
    }

    #[test]
    fn range_and_key_errors() {
        assert!(matches!(Config::parse("alpha = 1.5"), Err(Error::Config(_))));
        assert!(Config::parse("alpha = 0").is_err());
        assert!(Config::parse("T = 0").is_err());
        assert!(Config::parse("T = four").is_err());
        assert!(Config::parse("gamma = 1").is_err());
        assert!(Config::parse("fg_threshold = -1").is_err());
        assert!(Config::parse("just words").is_err());
    }

    #[test]
    fn set_is_atomic() {
        let mut c = Config::default();
        assert!(c.set("beta", "2").is_err());
        assert_eq!(c.beta, 0.1);
        c.set_pair("T=7").unwrap();
        assert_eq!(c.patch_frames, 7);
    }

    #[test]
    fn default_exemplar_thresholds() {
        let mut c = Config::default();
        assert_eq!(c.effective_exemplar_threshold(), 0.05 * 80.0);
        c.feature = FeatureKind::Flow;
        assert_eq!(c.effective_exemplar_threshold(), 640.0);
        c.exemplar_threshold = Some(3.5);
        assert_eq!(c.effective_exemplar_threshold(), 3.5);
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::default();
        c.set("thresholds", "0.5, 0.25,0").unwrap();
        c.set("exemplar_threshold", "0.1").unwrap();
        c.set("feature", "flow").unwrap();
        c.set("blur_sigma", "0.30000000000000004").unwrap();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert_eq!(Config::parse(&Config::default().to_text()).unwrap(), Config::default());
    }
}
