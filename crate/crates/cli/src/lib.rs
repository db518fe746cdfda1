//! Harness behind the `srkit` binary.
//!
//! Each subcommand has an argument struct that doubles as its JSON config
//! section (see [`config`]) and a function taking it: [`prepare`], [`train`],
//! [`dict_train`], [`run`], [`eval`], and the rating-study helpers in [`mos`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sr_core::ScaleFactor;
use sr_service::Label;

pub mod config;
mod dict;
mod eval;
pub mod mos;
mod prepare;
mod run;
mod train;

pub use dict::{dict_train, DictTrainArgs, DictTrainSummary};
pub use eval::{eval, render_table, EvalArgs, EvalReport, EvalRow, ImageScore, REPORT_SCHEMA};
pub use prepare::{prepare, Manifest, PairEntry, PrepareArgs, MANIFEST_SCHEMA};
pub use run::{run, RunArgs};
pub use train::{train, TrainArgs, TrainSummary};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("missing required option --{0}")]
    MissingOption(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{what} not found: {}", path.display())]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("no readable images in {}", .0.display())]
    NoImages(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: sr_core::ImageError },
    #[error(transparent)]
    Model(#[from] sr_core::models::ModelError),
    #[error(transparent)]
    Sparse(#[from] sr_core::sparse::SparseError),
    #[error(transparent)]
    Nn(#[from] sr_core::nn::NnError),
    #[error(transparent)]
    Metric(#[from] sr_core::metrics::MetricError),
    #[error(transparent)]
    Service(#[from] sr_service::ServiceError),
    #[error(transparent)]
    Client(#[from] sr_client::ClientError),
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// The five SR methods, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bicubic,
    Sparse,
    Srcnn,
    Srresnet,
    Srgan,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Bicubic, Method::Sparse, Method::Srcnn, Method::Srresnet, Method::Srgan];

    pub fn label(self) -> Label {
        match self {
            Method::Bicubic => Label::Bicubic,
            Method::Sparse => Label::Sparse,
            Method::Srcnn => Label::Srcnn,
            Method::Srresnet => Label::Srresnet,
            Method::Srgan => Label::Srgan,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.label().as_str()
    }

    pub fn title(self) -> &'static str {
        self.label().title()
    }

    pub fn from_label(label: Label) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == label)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| HarnessError::Invalid(format!("unknown method {s:?}")))
    }
}

pub(crate) fn required<'a, T>(v: &'a Option<T>, name: &'static str) -> Result<&'a T> {
    v.as_ref().ok_or(HarnessError::MissingOption(name))
}

pub(crate) fn scale_factor(r: u32) -> Result<ScaleFactor> {
    match ScaleFactor::new(r) {
        Ok(s) if s != ScaleFactor::X2 => Ok(s),
        _ => Err(HarnessError::Invalid(format!("scale must be 4 or 8, got {r}"))),
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn load_image(path: &Path) -> Result<sr_core::Image> {
    if !path.exists() {
        return Err(HarnessError::MissingFile { what: "image", path: path.to_path_buf() });
    }
    sr_core::image::load(path).map_err(|source| HarnessError::Image { path: path.to_path_buf(), source })
}

pub(crate) fn save_image(path: &Path, img: &sr_core::Image) -> Result<()> {
    sr_core::image::save(path, img).map_err(|source| HarnessError::Image { path: path.to_path_buf(), source })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(HarnessError::MissingFile { what: "file", path: path.to_path_buf() });
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_image(path: &Path) -> bool {
    path.is_file() && path.extension().and_then(|e| e.to_str()).is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
}

/// PNG and PGM files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(io_err(dir))?.path();
        if is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every image in `dir`; fails if there are none.
pub fn load_dir(dir: &Path) -> Result<Vec<(String, sr_core::Image)>> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(HarnessError::NoImages(dir.to_path_buf()));
    }
    let mut out: Vec<(String, sr_core::Image)> = Vec::with_capacity(paths.len());
    for p in paths {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if out.iter().any(|(n, _)| *n == stem) {
            return Err(HarnessError::Invalid(format!("two images named {stem:?} in {}", dir.display())));
        }
        out.push((stem, load_image(&p)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods_map_to_labels() {
        for m in Method::ALL {
            assert_eq!(Method::from_label(m.label()), Some(m));
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::from_label(Label::Hr), None);
        let titles: Vec<_> = Method::ALL.iter().map(|m| m.title()).collect();
        assert_eq!(titles, ["Bicubic", "Sparse Rep.", "SRCNN", "SRResNet", "SRGAN"]);
    }

    #[test]
    fn image_listing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dir(dir.path()), Err(HarnessError::NoImages(_))));
        let img = sr_core::image::synth::textured(8, 8, 1);
        save_image(&dir.path().join("b.png"), &img).unwrap();
        save_image(&dir.path().join("a.pgm"), &img).unwrap();
        write_file(&dir.path().join("notes.txt"), b"x").unwrap();
        let names: Vec<_> = load_dir(dir.path()).unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["a", "b"]);
        save_image(&dir.path().join("a.png"), &img).unwrap();
        assert!(load_dir(dir.path()).is_err());
    }
}
