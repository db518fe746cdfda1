//! Rating-study commands: build a study file, serve it, query and report.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sr_client::{ClientError, RatingClient};
use sr_service::{ItemConfig, Label, LogScan, MethodMos, SetConfig, StudyConfig};

use crate::prepare::Manifest;
use crate::{required, write_json, HarnessError, Method, Result};

/// Sets per study by default: five sets of seven images.
pub const DEFAULT_SETS: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct MosStudyArgs {
    /// manifest.json written by prepare; supplies the LR and HR images
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
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
    /// Number of sets, each built from one test pair [default: 5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sets: Option<usize>,
    /// Chooses the pairs and the per-session item order [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Ratings log path recorded in the study [default: ratings.csv]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratings_log: Option<PathBuf>,
    /// UI bundle directory served at /
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_dir: Option<PathBuf>,
    /// Study file to write
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Builds a study with one set per chosen test pair: its LR and HR images and
/// every method's output. Paths are written absolute.
pub fn build_study(args: &MosStudyArgs) -> Result<StudyConfig> {
    let manifest = Manifest::load(required(&args.manifest, "manifest")?)?;
    let dirs = [
        (Method::Bicubic, &args.bicubic),
        (Method::Sparse, &args.sparse),
        (Method::Srcnn, &args.srcnn),
        (Method::Srresnet, &args.srresnet),
        (Method::Srgan, &args.srgan),
    ];
    for (m, d) in &dirs {
        if d.is_none() {
            return Err(HarnessError::Invalid(format!("a study needs every method's outputs; --{m} is missing")));
        }
    }
    let sets = args.sets.unwrap_or(DEFAULT_SETS);
    if sets == 0 || sets > manifest.pairs.len() {
        return Err(HarnessError::Invalid(format!("{sets} sets requested from {} pairs", manifest.pairs.len())));
    }
    let seed = args.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, manifest.pairs.len(), sets).into_vec();
    chosen.sort_unstable();
    let abs = |p: PathBuf| std::path::absolute(&p).unwrap_or(p);
    let mut out = Vec::with_capacity(sets);
    for i in chosen {
        let pair = &manifest.pairs[i];
        let mut items = vec![
            ItemConfig { method: Label::Lr, path: abs(manifest.lr_path(pair)) },
            ItemConfig { method: Label::Hr, path: abs(manifest.hr_path(pair)) },
        ];
        for (m, d) in &dirs {
            let path = d.as_ref().expect("checked").join(format!("{}.png", pair.name));
            if !path.is_file() {
                return Err(HarnessError::MissingFile { what: "SR image", path });
            }
            items.push(ItemConfig { method: m.label(), path: abs(path) });
        }
        out.push(SetConfig { items });
    }
    let cfg = StudyConfig {
        shuffle_seed: seed,
        ratings_log: abs(args.ratings_log.clone().unwrap_or_else(|| "ratings.csv".into())),
        static_dir: args.static_dir.clone().map(abs),
        sets: out,
    };
    cfg.validate()?;
    if let Some(p) = &args.out {
        write_json(p, &cfg)?;
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct MosServeArgs {
    /// Study file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<PathBuf>,
    /// Address to listen on [default: 127.0.0.1:8080]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bind: Option<String>,
}

/// Runs the rating service until it fails or the process is stopped.
pub async fn serve(args: &MosServeArgs) -> Result<()> {
    let cfg = StudyConfig::load(required(&args.study, "study")?)?;
    let bind = args.bind.as_deref().unwrap_or("127.0.0.1:8080");
    let (listener, addr, app) = sr_service::bind(&cfg, bind).await?;
    eprintln!("serving {} items per session on http://{addr}", cfg.item_count());
    sr_service::serve(listener, app).await?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct MosReportArgs {
    /// Ratings log written by the service
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosReport {
    pub methods: Vec<MethodMos>,
    pub skipped: usize,
}

/// Per-method MOS from a ratings log. Corrupt lines are counted, not fatal.
pub fn report(args: &MosReportArgs) -> Result<MosReport> {
    let LogScan { records, skipped } = sr_service::read_log(required(&args.log, "log")?)?;
    for s in &skipped {
        tracing::warn!("skipping line {}: {}", s.line, s.reason);
    }
    if records.is_empty() {
        tracing::warn!("no ratings in log");
    }
    Ok(MosReport { methods: sr_service::mos_table(&records), skipped: skipped.len() })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
pub struct MosStatusArgs {
    /// Service root URL [default: http://127.0.0.1:8080]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosStatus {
    pub session_id: String,
    pub rated: usize,
    pub total: usize,
    /// Present once every item is rated.
    pub methods: Option<Vec<sr_client::ReportRow>>,
}

/// Progress of a running session, and its report once complete.
pub async fn status(args: &MosStatusArgs) -> Result<MosStatus> {
    let client = RatingClient::new(args.url.clone().unwrap_or_else(|| "http://127.0.0.1:8080".into()));
    let id = required(&args.session, "session")?;
    let session = client.session(Some(id)).await?;
    let total = session.items().count();
    let rated = session.items().filter(|it| it.score.is_some()).count();
    let methods = match client.report(id).await {
        Ok(r) => Some(r.methods),
        Err(ClientError::Incomplete(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(MosStatus { session_id: session.session_id, rated, total, methods })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prepare::{prepare, PrepareArgs};
    use sr_core::image::synth::textured;

    #[test]
    fn study_from_prepared_corpus() {
        let hr = tempfile::tempdir().unwrap();
        for i in 0..6 {
            crate::save_image(&hr.path().join(format!("t{i}.png")), &textured(16, 16, i)).unwrap();
        }
        let out = tempfile::tempdir().unwrap();
        let m = prepare(&PrepareArgs { hr_dir: Some(hr.path().into()), out_dir: Some(out.path().into()), ..Default::default() }).unwrap();
        let mut args = MosStudyArgs {
            manifest: Some(out.path().join("manifest.json")),
            out: Some(out.path().join("study.json")),
            ..Default::default()
        };
        for m in Method::ALL {
            let dir = out.path().join(m.as_str());
            std::fs::create_dir(&dir).unwrap();
            let slot = match m {
                Method::Bicubic => &mut args.bicubic,
                Method::Sparse => &mut args.sparse,
                Method::Srcnn => &mut args.srcnn,
                Method::Srresnet => &mut args.srresnet,
                Method::Srgan => &mut args.srgan,
            };
            *slot = Some(dir);
        }
        assert!(matches!(build_study(&args), Err(HarnessError::MissingFile { .. })));
        for mth in Method::ALL {
            for p in &m.pairs {
                std::fs::copy(m.hr_path(p), out.path().join(mth.as_str()).join(format!("{}.png", p.name))).unwrap();
            }
        }
        let cfg = build_study(&args).unwrap();
        assert_eq!((cfg.sets.len(), cfg.item_count()), (5, 35));
        assert_eq!(StudyConfig::load(out.path().join("study.json")).unwrap(), cfg);
        assert!(build_study(&MosStudyArgs { sets: Some(7), ..args.clone() }).is_err());
        assert!(build_study(&MosStudyArgs { srgan: None, ..args }).is_err());
    }

    #[test]
    fn report_counts_skipped_lines() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("r.csv");
        std::fs::write(&log, "1,s,a,srresnet,4\n2,s,b,srresnet,3\n3,s,c,srresnet,5\n4,s,d,srresnet,4\n5,s,e,srresnet,4\nnot,a,line\n")
            .unwrap();
        let r = report(&MosReportArgs { log: Some(log.clone()) }).unwrap();
        assert_eq!((r.methods[0].mos, r.methods[0].n, r.skipped), (4.0, 5, 1));
        std::fs::write(&log, "").unwrap();
        let r = report(&MosReportArgs { log: Some(log) }).unwrap();
        assert!(r.methods.is_empty());
    }
}
