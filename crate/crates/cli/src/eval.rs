use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sr_core::metrics::{self, Psnr};

use crate::prepare::Manifest;
use crate::{load_image, required, write_file, write_json, HarnessError, Method, Result};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct EvalArgs {
    /// manifest.json written by prepare
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// SR output directory of each evaluated method
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bicubic: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srcnn: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srresnet: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srgan: Option<PathBuf>,
    /// Ratings log whose MOS is merged into the report
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings: Option<PathBuf>,
    /// Write the JSON report here
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    /// Write the text table here
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl EvalArgs {
    fn dir(&self, m: Method) -> Option<&PathBuf> {
        match m {
            Method::Bicubic => self.bicubic.as_ref(),
            Method::Sparse => self.sparse.as_ref(),
            Method::Srcnn => self.srcnn.as_ref(),
            Method::Srresnet => self.srresnet.as_ref(),
            Method::Srgan => self.srgan.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    pub psnr_db: Psnr,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub psnr_db: Psnr,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos_n: Option<usize>,
    pub images: Vec<ImageScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub scale: u32,
    pub pairs: usize,
    pub rows: Vec<EvalRow>,
}

/// Mean PSNR and SSIM per method over the manifest pairs.
pub fn eval(args: &EvalArgs) -> Result<EvalReport> {
    let manifest = Manifest::load(required(&args.manifest, "manifest")?)?;
    let methods: Vec<Method> = Method::ALL.into_iter().filter(|&m| args.dir(m).is_some()).collect();
    if methods.is_empty() {
        return Err(HarnessError::Invalid(
            "no SR directories given; pass at least one of --bicubic, --sparse, --srcnn, --srresnet, --srgan".into(),
        ));
    }
    let hrs = manifest.pairs.iter().map(|p| manifest.load_hr(p)).collect::<Result<Vec<_>>>()?;
    let mos = match &args.ratings {
        Some(path) => {
            let scan = sr_service::read_log(path)?;
            if !scan.skipped.is_empty() {
                tracing::warn!("{}: skipped {} corrupt lines", path.display(), scan.skipped.len());
            }
            sr_service::mos_table(&scan.records)
        }
        None => Vec::new(),
    };
    let mut rows = Vec::with_capacity(methods.len());
    for m in methods {
        let dir = args.dir(m).expect("filtered");
        let mut images = Vec::with_capacity(hrs.len());
        for (pair, hr) in manifest.pairs.iter().zip(&hrs) {
            let path = dir.join(format!("{}.png", pair.name));
            if !path.is_file() {
                return Err(HarnessError::MissingFile { what: "SR image", path });
            }
            let sr = load_image(&path)?;
            let r = metrics::report(&sr, hr)?;
            images.push(ImageScore { name: pair.name.clone(), psnr_db: r.psnr_db, ssim: r.ssim });
        }
        let psnrs: Vec<Psnr> = images.iter().map(|s| s.psnr_db).collect();
        let psnr_db = Psnr::mean(&psnrs).ok_or_else(|| HarnessError::Invalid("manifest has no pairs".into()))?;
        let ssim = images.iter().map(|s| s.ssim).sum::<f64>() / images.len() as f64;
        let rated = mos.iter().find(|r| Method::from_label(r.method) == Some(m));
        rows.push(EvalRow { method: m, psnr_db, ssim, mos: rated.map(|r| r.mos), mos_n: rated.map(|r| r.n), images });
    }
    let report = EvalReport { schema: REPORT_SCHEMA, scale: manifest.scale, pairs: manifest.pairs.len(), rows };
    if let Some(p) = &args.json {
        write_json(p, &report)?;
    }
    if let Some(p) = &args.table {
        write_file(p, render_table(&report).as_bytes())?;
    }
    Ok(report)
}

/// Methods as columns, metrics as rows. The MOS row appears when any method
/// has ratings.
pub fn render_table(report: &EvalReport) -> String {
    let width = |s: &str| s.len().max(10);
    let mut out = format!("{:<10}", format!("{}x", report.scale));
    for r in &report.rows {
        out.push_str(&format!("  {:>w$}", r.method.title(), w = width(r.method.title())));
    }
    out.push('\n');
    let mut line = |name: &str, cell: &dyn Fn(&EvalRow) -> String| {
        out.push_str(&format!("{name:<10}"));
        for r in &report.rows {
            out.push_str(&format!("  {:>w$}", cell(r), w = width(r.method.title())));
        }
        out.push('\n');
    };
    line("PSNR [dB]", &|r| r.psnr_db.to_string());
    line("SSIM", &|r| format!("{:.4}", r.ssim));
    if report.rows.iter().any(|r| r.mos.is_some()) {
        line("MOS", &|r| r.mos.map_or("-".into(), |v| format!("{v:.2}")));
    }
    out
}
