use sr_core::image::synth::textured;
use sr_core::metrics;
use sr_core::models::{self, build_model, ArchSpec, ModelKind, PlanModel, TrainPlan};
use sr_core::nn::checkpoint;
use sr_core::sparse::{sample_patch_pairs, super_resolve_sparse, train_dictionaries, DictionaryPair, SparseParams};
use sr_core::ScaleFactor;

#[test]
fn trained_srcnn_survives_checkpoint_round_trip() {
    let corpus: Vec<_> = (0..4).map(|i| textured(16, 16, i)).collect();
    let plan = TrainPlan { total_epochs: 2, batch: 2, width: 4, crop: None, ..TrainPlan::new(PlanModel::Srcnn, ScaleFactor::X4) };
    let out = models::train(&plan, &corpus, None).unwrap();
    assert_eq!(out.steps.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("srcnn.ckpt");
    checkpoint::save(&out.model, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(models::model_kind(&back), Some(ModelKind::Srcnn));

    let (_, lr) = textured(20, 12, 9).degrade(ScaleFactor::X4).unwrap();
    let a = models::super_resolve(&out.model, ModelKind::Srcnn, &lr, ScaleFactor::X4).unwrap();
    let b = models::super_resolve(&back, ModelKind::Srcnn, &lr, ScaleFactor::X4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dims(), (20, 12));
}

#[test]
fn dictionary_file_reproduces_sparse_output() {
    let params = SparseParams { atoms: 12, ..SparseParams::default() };
    let data = sample_patch_pairs(&[textured(24, 24, 3)], 50, &params, 2).unwrap();
    let dict = train_dictionaries(&data, &params, 2, 2).unwrap();
    let back = DictionaryPair::read_from(dict.to_bytes().as_slice()).unwrap();

    let (hr, lr) = textured(24, 24, 4).degrade(ScaleFactor::X4).unwrap();
    let a = super_resolve_sparse(&lr, &dict, &params, ScaleFactor::X4).unwrap();
    assert_eq!(a, super_resolve_sparse(&lr, &back, &params, ScaleFactor::X4).unwrap());
    assert_eq!(a.dims(), hr.dims());
    assert!(metrics::psnr(&a, &hr).unwrap().finite().is_some());
}

#[test]
fn untrained_generator_and_discriminator_fit_together() {
    let gen = build_model(&ArchSpec { width: 4, blocks: 1, ..ArchSpec::generator(ScaleFactor::X8) }, 1).unwrap();
    let disc = build_model(&ArchSpec { width: 4, blocks: 2, ..ArchSpec::discriminator(ScaleFactor::X8, 16) }, 2).unwrap();
    let (_, lr) = textured(16, 16, 5).degrade(ScaleFactor::X8).unwrap();
    let sr = models::super_resolve(&gen, ModelKind::SrresnetGenerator, &lr, ScaleFactor::X8).unwrap();
    let p = disc.infer(&models::image_tensor(&sr)).unwrap();
    assert_eq!(p.data().len(), 1);
    assert!((0.0..=1.0).contains(&p.data()[0]));
}
