use std::cell::RefCell;

use candle_core::{DType, Device};
use image::{Rgb, RgbImage};
use yoho_core::annotation::{rasterize_roi, AnnotatedImage, Polygon, SampleCircle};
use yoho_core::config::{Profile, RunConfig};
use yoho_core::grid::Map;
use yoho_core::infer::{infer, postprocess, ConstantSegmenter, InferOptions, NetworkSegmenter};
use yoho_core::model::{load_checkpoint, Model, Params};
use yoho_core::phantom::phantom;
use yoho_core::render::{generate_dataset, Dataset};
use yoho_core::train::{lr_at, train_from, Phase, TrainConfig, HISTORY_HEADER};
use yoho_oracle::Fixture;

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(0, Phase::One, &cfg), 1.0e-3);
    assert!((lr_at(50, Phase::One, &cfg) - 9.0e-4).abs() < 1e-15);
    assert_eq!(lr_at(49, Phase::One, &cfg), 1.0e-3);
    assert_eq!(lr_at(0, Phase::Two, &cfg), 3.0e-4);
    let mut expected = 3.0e-4;
    for _ in 0..19 {
        expected *= 0.9;
    }
    assert!((lr_at(999, Phase::Two, &cfg) - expected).abs() <= 1e-12 * expected);
    for phase in [Phase::One, Phase::Two] {
        for step in 1..1000 {
            assert!(lr_at(step, phase, &cfg) <= lr_at(step - 1, phase, &cfg));
        }
    }
}

#[test]
fn smoke_training_run() {
    let cfg = RunConfig::for_profile(Profile::Smoke);
    let p = phantom(5);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&p.annotated, &cfg.render, &dir.path().join("ds")).unwrap();
    let ds = Dataset::open(&dir.path().join("ds")).unwrap();
    assert_eq!(ds.len(), 32);

    let ckpt = dir.path().join("model.safetensors");
    let run = |ckpt: Option<&std::path::Path>| {
        let params = Params::init(&cfg.net, cfg.train.rng_seed, &Device::Cpu, DType::F32).unwrap();
        let initial_encoder = params.encoder_hash().unwrap();
        // Shares storage with the trained parameters.
        let live = params.clone();
        let after_phase1 = RefCell::new(None);
        let mut steps = Vec::new();
        let (trained, history) = train_from(params, &ds, &cfg.loss, &cfg.train, ckpt, &mut |info| {
            steps.push(info.step);
            if info.step == cfg.train.phase1_steps {
                *after_phase1.borrow_mut() = Some(live.encoder_hash().unwrap());
            }
        })
        .unwrap();
        assert_eq!(steps, (1..=40).collect::<Vec<_>>());
        assert_eq!(after_phase1.into_inner().unwrap(), initial_encoder);
        assert_ne!(trained.encoder_hash().unwrap(), initial_encoder);
        (trained, history)
    };
    let (trained, history) = run(Some(&ckpt));

    assert_eq!(history.rows.len(), 40);
    for (i, row) in history.rows.iter().enumerate() {
        assert_eq!(row.step, i + 1);
        assert_eq!(row.phase, if i < 20 { 1 } else { 2 });
        assert!(row.total.is_finite() && row.seg.is_finite() && row.edge.is_finite() && row.consist.is_finite());
        let expected = cfg.loss.lambda1 * row.seg + cfg.loss.lambda2 * row.edge + cfg.loss.lambda3 * row.consist;
        assert!((row.total - expected).abs() < 1e-4 * expected.max(1.0));
    }
    let recorded: Vec<usize> = history.rows.iter().filter(|r| r.train_dice.is_some()).map(|r| r.step).collect();
    assert_eq!(recorded, vec![10, 20, 30, 40]);
    let final_dice = history.final_train_dice.unwrap();
    assert!((0.0..=1.0).contains(&final_dice));
    assert_eq!(history.rows.last().unwrap().train_dice, Some(final_dice));
    let csv = history.to_csv();
    assert_eq!(csv.lines().next(), Some(HISTORY_HEADER));
    assert_eq!(csv.lines().count(), 41);

    // The persisted checkpoint is the returned network.
    let (loaded, size) = load_checkpoint(&ckpt, &Device::Cpu).unwrap();
    assert_eq!(size, (64, 64));
    assert_eq!(loaded.hash().unwrap(), trained.hash().unwrap());

    // Same seed, same manifest, same configuration: same weights.
    let (again, _) = run(None);
    assert_eq!(again.hash().unwrap(), trained.hash().unwrap());

    // The trained network segments the native image.
    let segmenter = NetworkSegmenter {
        model: Model::new(trained).unwrap(),
        input_size: size,
    };
    let result = infer(&p.annotated, &segmenter, &InferOptions::default()).unwrap();
    assert_eq!(result.binary_mask.dims(), (256, 256));
}

#[test]
fn training_rejects_small_datasets() {
    let mut cfg = RunConfig::for_profile(Profile::Smoke);
    cfg.train.batch_size = 64;
    let p = phantom(6);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&p.annotated, &cfg.render, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    let params = Params::init(&cfg.net, 0, &Device::Cpu, DType::F32).unwrap();
    assert!(train_from(params, &ds, &cfg.loss, &cfg.train, None, &mut |_| {}).is_err());
}

fn annotated(reverse: bool) -> AnnotatedImage {
    AnnotatedImage {
        image: RgbImage::from_pixel(90, 60, Rgb([100, 50, 50])),
        rois: vec![Polygon::new(vec![[20.0, 10.0], [70.0, 10.0], [70.0, 40.0], [20.0, 40.0]])],
        reverse,
        samples: vec![SampleCircle::new(if reverse { 80.0 } else { 40.0 }, 30.0, 8.0)],
        image_id: "t".into(),
    }
}

fn constant(value: f64) -> ConstantSegmenter {
    ConstantSegmenter { value, size: (32, 32) }
}

#[test]
fn inference_examples() {
    let off = InferOptions {
        roi_gating: false,
        ..InferOptions::default()
    };
    let full = infer(&annotated(false), &constant(1.0), &off).unwrap();
    assert_eq!(full.binary_mask.count(), 90 * 60);
    assert_eq!(full.binary_mask.dims(), (90, 60));

    let reverse = infer(&annotated(true), &constant(1.0), &off).unwrap();
    assert_eq!(reverse.binary_mask.count(), 0);
    assert!(reverse.gating.reverse);

    let gated = infer(&annotated(false), &constant(0.9), &InferOptions::default()).unwrap();
    let roi = rasterize_roi(&annotated(false), (60, 90)).unwrap();
    assert!(gated.binary_mask.count() > 0);
    assert_eq!(gated.binary_mask, roi);
    assert!(gated.gating.enabled);

    // Reverse mode gates to the complement of the sketched healthy region.
    let gated_rev = infer(&annotated(true), &constant(0.1), &InferOptions::default()).unwrap();
    assert_eq!(gated_rev.binary_mask, roi.map(|&v| !v));
}

#[test]
fn inversion_twice_is_identity_without_gating() {
    let off = InferOptions {
        roi_gating: false,
        ..InferOptions::default()
    };
    let mut f = Fixture::new(9);
    for _ in 0..10 {
        let m = Map::from_vec(32, 32, (0..1024).map(|_| f.unit()).collect());
        let forward = postprocess(&m, &annotated(false), &off).unwrap();
        let inverted = postprocess(&m.map(|&v| 1.0 - v), &annotated(true), &off).unwrap();
        for (a, b) in forward.raw_map.as_slice().iter().zip(inverted.raw_map.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(forward.binary_mask, forward.prob_map.threshold(0.5));
    }
}
