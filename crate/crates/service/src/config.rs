use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Items per rating set: LR, HR and the five SR outputs.
pub const SET_SIZE: usize = 7;

/// What produced a rated image. Never sent to the rater before completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Lr,
    Hr,
    Bicubic,
    Sparse,
    Srcnn,
    Srresnet,
    Srgan,
}

impl Label {
    pub const ALL: [Label; SET_SIZE] = [Label::Lr, Label::Hr, Label::Bicubic, Label::Sparse, Label::Srcnn, Label::Srresnet, Label::Srgan];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Lr => "lr",
            Label::Hr => "hr",
            Label::Bicubic => "bicubic",
            Label::Sparse => "sparse",
            Label::Srcnn => "srcnn",
            Label::Srresnet => "srresnet",
            Label::Srgan => "srgan",
        }
    }

    /// Column heading used in printed tables.
    pub fn title(self) -> &'static str {
        match self {
            Label::Lr => "LR",
            Label::Hr => "HR",
            Label::Bicubic => "Bicubic",
            Label::Sparse => "Sparse Rep.",
            Label::Srcnn => "SRCNN",
            Label::Srresnet => "SRResNet",
            Label::Srgan => "SRGAN",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| ServiceError::Config(format!("unknown method label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemConfig {
    pub method: Label,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetConfig {
    pub items: Vec<ItemConfig>,
}

/// A rating study: the image sets, the shuffle seed and where ratings go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default)]
    pub shuffle_seed: u64,
    pub ratings_log: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_dir: Option<PathBuf>,
    pub sets: Vec<SetConfig>,
}

impl StudyConfig {
    /// Reads a JSON study file. Relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: StudyConfig = serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.ratings_log);
        if let Some(d) = self.static_dir.as_mut() {
            fix(d);
        }
        for item in self.sets.iter_mut().flat_map(|s| s.items.iter_mut()) {
            fix(&mut item.path);
        }
    }

    /// Every set must hold exactly one image per label.
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.sets.is_empty() {
            return Err(ServiceError::Config("study has no sets".into()));
        }
        for (i, set) in self.sets.iter().enumerate() {
            if set.items.len() != SET_SIZE {
                return Err(ServiceError::Config(format!("set {i} has {} items, expected {SET_SIZE}", set.items.len())));
            }
            for label in Label::ALL {
                let n = set.items.iter().filter(|it| it.method == label).count();
                if n != 1 {
                    return Err(ServiceError::Config(format!("set {i} has {n} {label} items, expected 1")));
                }
            }
        }
        Ok(())
    }

    pub fn item_count(&self) -> usize {
        self.sets.iter().map(|s| s.items.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> SetConfig {
        SetConfig { items: Label::ALL.iter().map(|&m| ItemConfig { method: m, path: format!("{m}.png").into() }).collect() }
    }

    #[test]
    fn labels_round_trip() {
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{l}\""));
        }
        assert!("vdsr".parse::<Label>().is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = StudyConfig { shuffle_seed: 1, ratings_log: "r.csv".into(), static_dir: None, sets: vec![set(); 5] };
        cfg.validate().unwrap();
        assert_eq!(cfg.item_count(), 35);
        cfg.sets[2].items[0].method = Label::Hr;
        assert!(cfg.validate().is_err());
        cfg.sets[2].items.pop();
        assert!(cfg.validate().is_err());
        cfg.sets.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StudyConfig { shuffle_seed: 3, ratings_log: "r.csv".into(), static_dir: Some("ui".into()), sets: vec![set()] };
        let file = dir.path().join("study.json");
        std::fs::write(&file, serde_json::to_string(&cfg).unwrap()).unwrap();
        let loaded = StudyConfig::load(&file).unwrap();
        assert_eq!(loaded.ratings_log, dir.path().join("r.csv"));
        assert_eq!(loaded.static_dir, Some(dir.path().join("ui")));
        assert_eq!(loaded.sets[0].items[3].path, dir.path().join("sparse.png"));
        std::fs::write(&file, "{\"sets\": 3}").unwrap();
        assert!(matches!(StudyConfig::load(&file), Err(ServiceError::Config(_))));
    }
}
