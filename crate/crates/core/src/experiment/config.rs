use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fe_truth::{ModelId, ModelSpec, Resolution};
use crate::offline::{OfflineOptions, SupremizerKind};

/// Settings shared by every experiment command.
///
/// Text form is one `key = value` pair per line; `#` starts a comment.
/// Unknown keys are rejected.
///
/// | key | meaning | default |
/// |---|---|---|
/// | `model` | 1 (rope) or 2 (membrane) | 1 |
/// | `resolution` | `200` or `32x32` | per model |
/// | `snapshots` | equidistant snapshot count | 25 (model 1), 15 (model 2) |
/// | `schedule` | comma separated basis sizes for sweeps | `2..=snapshots` |
/// | `test_samples` | uniform test parameters | 250 |
/// | `seed` | test-parameter and property-test seed | 2014 |
/// | `reps` | timing repetitions | 10 |
/// | `out_dir` | output directory | `out` |
/// | `droptol` | dependent-column threshold | 1e-10 |
/// | `lcp_tol` | absolute LCP tolerance override | relative default |
/// | `tolerance_scale` | factor on verification tolerances | 1 |
/// | `supremizer` | `forcing` or `per-multiplier` | `forcing` |
/// | `timing_resolutions` | comma separated meshes for scaling runs | `16x16,32x32,64x64` |
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelId,
    pub resolution: Resolution,
    pub snapshots: usize,
    pub schedule: Option<Vec<usize>>,
    pub test_samples: usize,
    pub seed: u64,
    pub reps: usize,
    pub out_dir: PathBuf,
    pub droptol: f64,
    pub lcp_tol: Option<f64>,
    pub tolerance_scale: f64,
    pub supremizer: SupremizerKind,
    pub timing_resolutions: Vec<Resolution>,
}

pub const CONFIG_KEYS: [&str; 13] = [
    "model",
    "resolution",
    "snapshots",
    "schedule",
    "test_samples",
    "seed",
    "reps",
    "out_dir",
    "droptol",
    "lcp_tol",
    "tolerance_scale",
    "supremizer",
    "timing_resolutions",
];

impl ExperimentConfig {
    pub fn for_model(model: ModelId) -> Self {
        Self {
            model,
            resolution: model.default_resolution(),
            snapshots: match model {
                ModelId::Rope => 25,
                ModelId::Membrane => 15,
            },
            schedule: None,
            test_samples: 250,
            seed: 2014,
            reps: 10,
            out_dir: PathBuf::from("out"),
            droptol: 1e-10,
            lcp_tol: None,
            tolerance_scale: 1.0,
            supremizer: SupremizerKind::Forcing,
            timing_resolutions: vec![
                Resolution::Grid { nx: 16, ny: 16 },
                Resolution::Grid { nx: 32, ny: 32 },
                Resolution::Grid { nx: 64, ny: 64 },
            ],
        }
    }

    /// Parses the text form on top of the defaults. A `model` line resets the
    /// model-dependent defaults, so it is applied first wherever it appears.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            pairs.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        let model = match pairs.iter().find(|(k, _)| k == "model") {
            Some((_, v)) => parse_model(v)?,
            None => ModelId::Rope,
        };
        let mut cfg = Self::for_model(model);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid {key} {value:?}: {what}"));
        match key {
            "model" => {
                let model = parse_model(value)?;
                if model != self.model {
                    let keep = self.clone();
                    *self = Self::for_model(model);
                    self.test_samples = keep.test_samples;
                    self.seed = keep.seed;
                    self.reps = keep.reps;
                    self.out_dir = keep.out_dir;
                }
            }
            "resolution" => self.resolution = value.parse()?,
            "snapshots" => self.snapshots = value.parse().map_err(|_| bad("expected a count"))?,
            "schedule" => {
                self.schedule = Some(
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|_| bad("expected counts")))
                        .collect::<Result<_>>()?,
                )
            }
            "test_samples" => self.test_samples = value.parse().map_err(|_| bad("expected a count"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("expected an integer"))?,
            "reps" => self.reps = value.parse().map_err(|_| bad("expected a count"))?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "droptol" => self.droptol = value.parse().map_err(|_| bad("expected a number"))?,
            "lcp_tol" => self.lcp_tol = Some(value.parse().map_err(|_| bad("expected a number"))?),
            "tolerance_scale" => self.tolerance_scale = value.parse().map_err(|_| bad("expected a number"))?,
            "supremizer" => {
                self.supremizer = match value {
                    "forcing" => SupremizerKind::Forcing,
                    "per-multiplier" => SupremizerKind::PerMultiplier,
                    _ => return Err(bad("expected forcing or per-multiplier")),
                }
            }
            "timing_resolutions" => {
                self.timing_resolutions = value.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("{name} must be at least 1")))
            } else {
                Ok(())
            }
        };
        positive("snapshots", self.snapshots)?;
        positive("test_samples", self.test_samples)?;
        positive("reps", self.reps)?;
        if let Some(s) = &self.schedule {
            if s.is_empty() || s.contains(&0) {
                return Err(Error::Config("schedule entries must be at least 1".into()));
            }
        }
        if !(self.droptol >= 0.0 && self.droptol < 1.0) {
            return Err(Error::Config("droptol must lie in [0, 1)".into()));
        }
        if !(self.tolerance_scale >= 0.0) {
            return Err(Error::Config("tolerance_scale must be nonnegative".into()));
        }
        self.spec().validate()
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.model, self.resolution)
    }

    /// Sweep schedule: explicit, else `2..=snapshots`, else `[1]`.
    pub fn schedule(&self) -> Vec<usize> {
        match &self.schedule {
            Some(s) => s.clone(),
            None if self.snapshots >= 2 => (2..=self.snapshots).collect(),
            None => vec![self.snapshots],
        }
    }

    pub fn offline_options(&self) -> OfflineOptions {
        let mut opts = OfflineOptions::default();
        opts.spaces.droptol = self.droptol;
        opts.spaces.supremizer = self.supremizer;
        opts.lcp.tol = self.lcp_tol;
        opts
    }

    /// Every setting as `(key, value)` in `CONFIG_KEYS` order; parsing the
    /// lines `key = value` reproduces the configuration.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let join = |xs: Vec<String>| xs.join(",");
        let mut pairs = vec![
            ("model", self.model.number().to_string()),
            ("resolution", self.resolution.to_string()),
            ("snapshots", self.snapshots.to_string()),
        ];
        if let Some(s) = &self.schedule {
            pairs.push(("schedule", join(s.iter().map(usize::to_string).collect())));
        }
        pairs.extend([
            ("test_samples", self.test_samples.to_string()),
            ("seed", self.seed.to_string()),
            ("reps", self.reps.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("droptol", format!("{:e}", self.droptol)),
        ]);
        if let Some(t) = self.lcp_tol {
            pairs.push(("lcp_tol", format!("{t:e}")));
        }
        pairs.extend([
            ("tolerance_scale", format!("{}", self.tolerance_scale)),
            (
                "supremizer",
                match self.supremizer {
                    SupremizerKind::Forcing => "forcing".into(),
                    SupremizerKind::PerMultiplier => "per-multiplier".into(),
                },
            ),
            (
                "timing_resolutions",
                join(self.timing_resolutions.iter().map(Resolution::to_string).collect()),
            ),
        ]);
        pairs
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn parse_model(v: &str) -> Result<ModelId> {
    let n: u8 = v.trim().parse().map_err(|_| Error::Config(format!("invalid model {v:?}")))?;
    ModelId::from_number(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_model() {
        let c = ExperimentConfig::for_model(ModelId::Membrane);
        assert_eq!(c.resolution, Resolution::Grid { nx: 32, ny: 32 });
        assert_eq!(c.snapshots, 15);
        assert_eq!(c.test_samples, 250);
        assert_eq!(c.schedule(), (2..=15).collect::<Vec<_>>());
    }

    #[test]
    fn parse_with_comments_and_model_anywhere() {
        let c = ExperimentConfig::parse("snapshots = 5  # small\n\nmodel = 2\nschedule = 2, 5\n").unwrap();
        assert_eq!(c.model, ModelId::Membrane);
        assert_eq!(c.snapshots, 5);
        assert_eq!(c.schedule(), vec![2, 5]);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(ExperimentConfig::parse("colour = red"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("snapshots"), Err(Error::Config(_))));
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(ExperimentConfig::parse("snapshots = 0").is_err());
        assert!(ExperimentConfig::parse("schedule = 2,0").is_err());
        assert!(ExperimentConfig::parse("test_samples = 0").is_err());
    }

    #[test]
    fn single_snapshot_schedule() {
        let c = ExperimentConfig::parse("snapshots = 1").unwrap();
        assert_eq!(c.schedule(), vec![1]);
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::for_model(ModelId::Membrane);
        c.apply_override("schedule=2,3").unwrap();
        c.apply_override("lcp_tol=1e-12").unwrap();
        c.apply_override("supremizer=per-multiplier").unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }
}
