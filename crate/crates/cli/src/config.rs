//! Run configuration: preset defaults, then the config file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use reachgen::cvae::{ModelSpec, Preset, TrainConfig};
use reachgen::dataset::SyntheticGenConfig;
use reachgen::evaluation::EvalConfig;
use reachgen::latent_opt::OptSettings;
use reachgen::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub latent: usize,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl ModelSettings {
    pub fn spec(&self, joints: usize) -> ModelSpec {
        ModelSpec::new(joints, self.latent, self.layers, self.hidden, self.dropout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSettings {
    pub steps: usize,
    pub lr: f64,
    pub w_goal: f64,
    pub w_prior: f64,
}

impl OptimizeSettings {
    pub fn settings(&self) -> OptSettings {
        OptSettings {
            steps: self.steps,
            lr: self.lr,
        }
    }
}

/// Everything a run depends on. Written verbatim into every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    /// Global seed; copied into the data and training sections.
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<PathBuf>,
    pub data: SyntheticGenConfig,
    pub model: ModelSettings,
    pub train: TrainConfig,
    /// Number of standing start poses for `evaluate`.
    pub eval_poses: usize,
    pub eval: EvalConfig,
    pub optimize: OptimizeSettings,
}

impl RunConfig {
    pub fn defaults(preset: Preset, seed: u64) -> Self {
        let spec = preset.model_spec(1);
        Self {
            preset,
            seed,
            workers: 1,
            out: PathBuf::from("run"),
            skeleton: None,
            data: SyntheticGenConfig {
                seed,
                ..SyntheticGenConfig::default()
            },
            model: ModelSettings {
                latent: spec.latent,
                layers: spec.decoder.layers,
                hidden: spec.decoder.hidden,
                dropout: spec.decoder.dropout,
            },
            train: preset.train_config(seed),
            eval_poses: 6,
            eval: EvalConfig::default(),
            optimize: OptimizeSettings {
                steps: 100,
                lr: 1e-2,
                w_goal: 1.0,
                w_prior: 1e-3,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Values given on the command line or through the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {}", path.display(), e.to_string().replace('\n', " ")))
}

/// Resolves defaults ← file ← overrides.
pub fn resolve(file: Option<&Path>, over: &Overrides) -> Result<RunConfig> {
    let table: Option<toml::Table> = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(text.parse::<toml::Table>().map_err(|e| parse_err(p, e))?)
        }
        None => None,
    };
    let file_preset = table
        .as_ref()
        .and_then(|t| t.get("preset"))
        .and_then(|v| v.as_str())
        .map(|s| Preset::parse(s).ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s}"))))
        .transpose()?;
    let file_seed = table
        .as_ref()
        .and_then(|t| t.get("seed"))
        .and_then(|v| v.as_integer())
        .map(|s| s as u64);
    let preset = over.preset.or(file_preset).unwrap_or(Preset::Desk);
    let seed = over.seed.or(file_seed).unwrap_or(0);

    let mut value = toml::Value::try_from(RunConfig::defaults(preset, seed)).expect("defaults serialize");
    if let Some(t) = table {
        merge(&mut value, toml::Value::Table(t));
    }
    let path = file.unwrap_or(Path::new("<defaults>"));
    let mut cfg: RunConfig = value.try_into().map_err(|e| parse_err(path, e))?;
    cfg.preset = preset;
    cfg.seed = seed;
    if let Some(w) = over.workers {
        cfg.workers = w;
    }
    if let Some(o) = &over.out {
        cfg.out = o.clone();
    }
    cfg.data.seed = seed;
    cfg.train.seed = seed;
    if cfg.workers == 0 {
        return Err(Error::InvalidConfig("workers must be at least 1".into()));
    }
    cfg.train.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::defaults(Preset::Desk, 3);
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = 5\nworkers = 2\n[train]\nepochs = 7\n").unwrap();
        let cfg = resolve(Some(&path), &Overrides::default()).unwrap();
        assert_eq!((cfg.seed, cfg.workers, cfg.train.epochs), (5, 2, 7));
        assert_eq!(cfg.train.batch, 32);
        assert_eq!(cfg.train.seed, 5);
        let over = Overrides {
            seed: Some(9),
            workers: Some(4),
            ..Overrides::default()
        };
        let cfg = resolve(Some(&path), &over).unwrap();
        assert_eq!((cfg.seed, cfg.workers, cfg.train.epochs, cfg.data.seed), (9, 4, 7, 9));
    }

    #[test]
    fn paper_preset_changes_defaults() {
        let over = Overrides {
            preset: Some(Preset::Paper),
            ..Overrides::default()
        };
        let cfg = resolve(None, &over).unwrap();
        assert_eq!((cfg.model.layers, cfg.model.latent, cfg.train.batch), (15, 64, 512));
    }

    #[test]
    fn bad_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = [\n").unwrap();
        assert!(matches!(resolve(Some(&path), &Overrides::default()), Err(Error::Parse(_))));
        fs::write(&path, "[train]\nalpha = -1.0\n").unwrap();
        assert!(matches!(resolve(Some(&path), &Overrides::default()), Err(Error::InvalidConfig(_))));
        assert!(matches!(
            resolve(Some(&dir.path().join("none.toml")), &Overrides::default()),
            Err(Error::Io { .. })
        ));
    }
}
