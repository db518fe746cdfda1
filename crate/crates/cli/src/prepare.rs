use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{create_dir, load_dir, read_json, required, scale_factor, sha256_hex, write_file, write_json, HarnessError, Result};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct PrepareArgs {
    /// Directory of HR images (PNG or PGM)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hr_dir: Option<PathBuf>,
    /// Output directory; receives hr/, lr/ and manifest.json
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Downsampling factor, 4 or 8 [default: 4]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<u32>,
    /// Seed for crop placement [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Side of a random square HR crop; without it images are center-cropped
    /// to a multiple of the scale
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub name: String,
    /// Paths relative to the manifest's directory.
    pub hr: String,
    pub lr: String,
    pub hr_sha256: String,
    pub lr_sha256: String,
    pub hr_size: [usize; 2],
    pub lr_size: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub scale: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<usize>,
    pub pairs: Vec<PairEntry>,
    #[serde(skip)]
    pub dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Manifest = read_json(path)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(HarnessError::Invalid(format!("{}: unsupported manifest schema {}", path.display(), m.schema)));
        }
        m.dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(m)
    }

    pub fn hr_path(&self, pair: &PairEntry) -> PathBuf {
        self.dir.join(&pair.hr)
    }

    pub fn lr_path(&self, pair: &PairEntry) -> PathBuf {
        self.dir.join(&pair.lr)
    }

    /// Checks a pair's HR file against its recorded checksum.
    pub fn load_hr(&self, pair: &PairEntry) -> Result<sr_core::Image> {
        let path = self.hr_path(pair);
        let bytes = std::fs::read(&path).map_err(|_| HarnessError::MissingFile { what: "HR image", path: path.clone() })?;
        if sha256_hex(&bytes) != pair.hr_sha256 {
            return Err(HarnessError::Invalid(format!("{} does not match its manifest checksum", path.display())));
        }
        sr_core::image::decode(&bytes).map_err(|source| HarnessError::Image { path, source })
    }
}

/// Writes matched HR/LR pairs and `manifest.json` under `out_dir`.
pub fn prepare(args: &PrepareArgs) -> Result<Manifest> {
    let hr_dir = required(&args.hr_dir, "hr-dir")?;
    let out_dir = required(&args.out_dir, "out-dir")?;
    let scale = scale_factor(args.scale.unwrap_or(4))?;
    let seed = args.seed.unwrap_or(0);
    let r = scale.as_usize();
    if let Some(c) = args.crop {
        if c == 0 || c % r != 0 {
            return Err(HarnessError::Invalid(format!("crop {c} must be a positive multiple of scale {r}")));
        }
    }
    let images = load_dir(hr_dir)?;
    for sub in ["hr", "lr"] {
        create_dir(&out_dir.join(sub))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(images.len());
    for (name, img) in images {
        let base = match args.crop {
            Some(c) => img
                .fit_for_crop(c)
                .random_crop_with(c, &mut rng)
                .map_err(|source| HarnessError::Image { path: hr_dir.join(&name), source })?,
            None => img,
        };
        let (hr, lr) = base.degrade(scale).map_err(|source| HarnessError::Image { path: hr_dir.join(&name), source })?;
        let encode = |im: &sr_core::Image| sr_core::image::encode_png(im).expect("8-bit grayscale encodes");
        let (hr_png, lr_png) = (encode(&hr), encode(&lr));
        let (hr_rel, lr_rel) = (format!("hr/{name}.png"), format!("lr/{name}.png"));
        write_file(&out_dir.join(&hr_rel), &hr_png)?;
        write_file(&out_dir.join(&lr_rel), &lr_png)?;
        pairs.push(PairEntry {
            name,
            hr: hr_rel,
            lr: lr_rel,
            hr_sha256: sha256_hex(&hr_png),
            lr_sha256: sha256_hex(&lr_png),
            hr_size: [hr.width(), hr.height()],
            lr_size: [lr.width(), lr.height()],
        });
    }
    let manifest = Manifest { schema: MANIFEST_SCHEMA, scale: scale.get(), seed, crop: args.crop, pairs, dir: out_dir.clone() };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    tracing::info!("prepared {} pairs in {}", manifest.pairs.len(), out_dir.display());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sr_core::image::synth::textured;

    fn hr_dir(n: usize, w: usize, h: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..n {
            crate::save_image(&dir.path().join(format!("img{i:02}.png")), &textured(w, h, i as u64)).unwrap();
        }
        dir
    }

    fn args(hr: &Path, out: &Path) -> PrepareArgs {
        PrepareArgs { hr_dir: Some(hr.into()), out_dir: Some(out.into()), ..Default::default() }
    }

    #[test]
    fn nine_pairs_at_quarter_size() {
        let hr = hr_dir(9, 50, 43);
        let out = tempfile::tempdir().unwrap();
        let m = prepare(&args(hr.path(), out.path())).unwrap();
        assert_eq!(m.pairs.len(), 9);
        for p in &m.pairs {
            assert_eq!(p.hr_size, [48, 40]);
            assert_eq!(p.lr_size, [12, 10]);
            let lr = sr_core::image::load(m.lr_path(p)).unwrap();
            assert_eq!(lr.dims(), (12, 10));
            assert_eq!(m.load_hr(p).unwrap().dims(), (48, 40));
        }
        let loaded = Manifest::load(&out.path().join("manifest.json")).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn crop_at_scale_eight() {
        let hr = hr_dir(2, 230, 240);
        let out = tempfile::tempdir().unwrap();
        let m = prepare(&PrepareArgs { scale: Some(8), crop: Some(224), seed: Some(3), ..args(hr.path(), out.path()) }).unwrap();
        assert!(m.pairs.iter().all(|p| p.hr_size == [224, 224] && p.lr_size == [28, 28]));
        let bad = PrepareArgs { scale: Some(8), crop: Some(100), ..args(hr.path(), out.path()) };
        assert!(matches!(prepare(&bad), Err(HarnessError::Invalid(_))));
    }

    #[test]
    fn same_seed_same_checksums() {
        let hr = hr_dir(3, 40, 40);
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let run = |out: &Path, seed| prepare(&PrepareArgs { crop: Some(24), seed: Some(seed), ..args(hr.path(), out) }).unwrap();
        let (ma, mb, mc) = (run(a.path(), 5), run(b.path(), 5), run(c.path(), 6));
        let sums = |m: &Manifest| m.pairs.iter().map(|p| p.hr_sha256.clone()).collect::<Vec<_>>();
        assert_eq!(sums(&ma), sums(&mb));
        assert_ne!(sums(&ma), sums(&mc));
        assert_eq!(std::fs::read(a.path().join("manifest.json")).unwrap(), std::fs::read(b.path().join("manifest.json")).unwrap());
    }

    #[test]
    fn errors() {
        let empty = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(prepare(&args(empty.path(), out.path())), Err(HarnessError::NoImages(_))));
        assert!(matches!(prepare(&PrepareArgs::default()), Err(HarnessError::MissingOption("hr-dir"))));
        let hr = hr_dir(1, 16, 16);
        let file = out.path().join("blocker");
        std::fs::write(&file, "x").unwrap();
        assert!(matches!(prepare(&args(hr.path(), &file)), Err(HarnessError::Io { .. })));
        assert!(prepare(&PrepareArgs { scale: Some(3), ..args(hr.path(), out.path()) }).is_err());
    }
}
