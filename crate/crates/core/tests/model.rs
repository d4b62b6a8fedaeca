use candle_core::{DType, Device, Tensor, Var};
use candle_nn::Optimizer;
use yoho_core::loss::{total_loss, LossWeights};
use yoho_core::model::{
    boundary_enhance, load_checkpoint, max_pool_3x3_s2, resize_bilinear, save_checkpoint, EncoderKind, Mode, Model,
    ModelError, NetworkConfig, Params, DEPTH,
};
use yoho_oracle::{morphology, Fixture};

const CPU: Device = Device::Cpu;

fn small_model(seed: u64) -> Model {
    Model::new(Params::init(&NetworkConfig::small(8), seed, &CPU, DType::F32).unwrap()).unwrap()
}

fn random_input(n: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut f = Fixture::new(seed);
    let data: Vec<f32> = (0..n * 3 * h * w).map(|_| f.unit() as f32).collect();
    Tensor::from_vec(data, (n, 3, h, w), &CPU).unwrap()
}

fn values(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1().unwrap()
}

fn assert_unit_range(t: &Tensor) {
    for v in values(t) {
        assert!((0.0..=1.0).contains(&v), "value {v} out of [0, 1]");
    }
}

#[test]
fn small_encoder_shapes_and_bounds() {
    let model = small_model(1);
    let out = model.forward(&random_input(2, 64, 64, 2)).unwrap();
    for t in [&out.s_hat, &out.e_hat, &out.e_hat_prime] {
        assert_eq!(t.dims(), &[2, 1, 64, 64]);
        assert_unit_range(t);
    }
    assert_eq!(out.stage_edges.len(), DEPTH);
    for t in &out.stage_edges {
        assert_eq!(t.dims(), &[2, 1, 64, 64]);
        assert_unit_range(t);
    }
    // Rectangular inputs work too.
    let out = model.forward(&random_input(1, 64, 96, 3)).unwrap();
    assert_eq!(out.s_hat.dims(), &[1, 1, 64, 96]);
}

#[test]
fn residual_encoder_at_full_resolution() {
    let cfg = NetworkConfig {
        base_width: 8,
        ..NetworkConfig::default()
    };
    assert_eq!(cfg.encoder, EncoderKind::Resnet34);
    let model = Model::new(Params::init(&cfg, 4, &CPU, DType::F32).unwrap()).unwrap();
    let out = model.forward(&random_input(1, 256, 256, 5)).unwrap();
    for t in [&out.s_hat, &out.e_hat, &out.e_hat_prime] {
        assert_eq!(t.dims(), &[1, 1, 256, 256]);
        assert_unit_range(t);
    }
}

#[test]
fn indivisible_input_is_rejected() {
    let model = small_model(1);
    match model.forward(&random_input(1, 48, 64, 1)) {
        Err(ModelError::Shape { height: 48, width: 64 }) => {}
        other => panic!("expected shape error, got {:?}", other.err()),
    }
}

#[test]
fn forward_is_pure() {
    let model = small_model(7);
    let zeros = Tensor::zeros((1, 3, 64, 64), DType::F32, &CPU).unwrap();
    let a = model.forward(&zeros).unwrap();
    let b = model.forward(&zeros).unwrap();
    assert_eq!(values(&a.s_hat), values(&b.s_hat));
    assert_eq!(values(&a.e_hat), values(&b.e_hat));
}

#[test]
fn init_is_deterministic_in_seed() {
    let cfg = NetworkConfig::small(8);
    let a = Params::init(&cfg, 9, &CPU, DType::F32).unwrap();
    let b = Params::init(&cfg, 9, &CPU, DType::F32).unwrap();
    let c = Params::init(&cfg, 10, &CPU, DType::F32).unwrap();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    assert_eq!(a.parameter_count(), c.parameter_count());
    let wider = Params::init(&NetworkConfig::small(16), 9, &CPU, DType::F32).unwrap();
    assert!(wider.parameter_count() > a.parameter_count());
}

fn square_frame() -> (Vec<f64>, Tensor) {
    let (w, h) = (32, 32);
    let map: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if (11..21).contains(&x) && (11..21).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let t = Tensor::from_vec(map.clone(), (1, 1, h, w), &CPU).unwrap();
    (map, t)
}

#[test]
fn boundary_enhance_marks_square_band() {
    let (map, t) = square_frame();
    let got = values(&boundary_enhance(&t).unwrap());
    assert_eq!(got, morphology::morphological_gradient(&map, 32, 32));
    // The band is the 12x12 dilation minus the 8x8 erosion.
    assert_eq!(got.iter().filter(|&&v| v == 1.0).count(), 144 - 64);
    assert!(got.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn boundary_enhance_of_soft_maps_matches_reference() {
    let mut f = Fixture::new(21);
    for _ in 0..5 {
        let (w, h) = (17, 13);
        let map: Vec<f64> = (0..w * h).map(|_| f.unit()).collect();
        let t = Tensor::from_vec(map.clone(), (1, 1, h, w), &CPU).unwrap();
        let got = values(&boundary_enhance(&t).unwrap());
        let want = morphology::morphological_gradient(&map, w, h);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        let flipped = values(&boundary_enhance(&(1.0 - &t).unwrap()).unwrap());
        for (a, b) in got.iter().zip(&flipped) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let constant = Tensor::full(0.37f64, (1, 1, 8, 8), &CPU).unwrap();
    assert!(values(&boundary_enhance(&constant).unwrap()).iter().all(|&v| v == 0.0));
}

#[test]
fn max_pool_matches_padded_window() {
    let mut f = Fixture::new(3);
    let (w, h) = (8, 6);
    let map: Vec<f64> = (0..w * h).map(|_| f.unit()).collect();
    let t = Tensor::from_vec(map.clone(), (1, 1, h, w), &CPU).unwrap();
    let got = values(&max_pool_3x3_s2(&t).unwrap());
    assert_eq!(got.len(), 12);
    for oy in 0..h / 2 {
        for ox in 0..w / 2 {
            let mut m = f64::NEG_INFINITY;
            for y in (2 * oy).saturating_sub(1)..=(2 * oy + 1).min(h - 1) {
                for x in (2 * ox).saturating_sub(1)..=(2 * ox + 1).min(w - 1) {
                    m = m.max(map[y * w + x]);
                }
            }
            assert_eq!(got[oy * (w / 2) + ox], m);
        }
    }
}

#[test]
fn bilinear_resize_preserves_constants_and_identity() {
    let c = Tensor::full(0.25f64, (1, 2, 5, 7), &CPU).unwrap();
    for v in values(&resize_bilinear(&c, 13, 3).unwrap()) {
        assert!((v - 0.25).abs() < 1e-12);
    }
    let mut f = Fixture::new(8);
    let data: Vec<f64> = (0..30).map(|_| f.unit()).collect();
    let t = Tensor::from_vec(data.clone(), (1, 1, 5, 6), &CPU).unwrap();
    for (a, b) in values(&resize_bilinear(&t, 5, 6).unwrap()).iter().zip(&data) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn fusion_weights_form_a_distribution() {
    let model = small_model(2);
    let mut f = Fixture::new(4);
    let logits: Vec<f32> = (0..2 * DEPTH * 32 * 32).map(|_| (f.unit() * 8.0 - 4.0) as f32).collect();
    let logits = Tensor::from_vec(logits, (2, DEPTH, 32, 32), &CPU).unwrap();
    let weights = model.fusion_weights(&logits).unwrap();
    assert_eq!(weights.dims(), &[2, DEPTH, 32, 32]);
    for v in values(&weights.sum_keepdim(1).unwrap()) {
        assert!((v - 1.0).abs() < 1e-5);
    }
    assert!(values(&weights).iter().all(|&v| v >= 0.0));
    let fused = model.fuse_edges(&logits).unwrap();
    assert_unit_range(&fused);

    let zeros = Tensor::zeros((1, DEPTH, 32, 32), DType::F32, &CPU).unwrap();
    let flat = values(&model.fuse_edges(&zeros).unwrap());
    assert!(flat.iter().all(|&v| (v - flat[0]).abs() < 1e-7));

    let wrong = Tensor::zeros((1, 3, 32, 32), DType::F32, &CPU).unwrap();
    assert!(model.fuse_edges(&wrong).is_err());
}

#[test]
fn gradient_reaches_every_stage() {
    let model = small_model(3);
    let mut f = Fixture::new(5);
    let data: Vec<f32> = (0..DEPTH * 32 * 32).map(|_| (f.unit() * 2.0 - 1.0) as f32).collect();
    let stages = Var::from_tensor(&Tensor::from_vec(data, (1, DEPTH, 32, 32), &CPU).unwrap()).unwrap();
    let target = Tensor::from_vec((0..32 * 32).map(|i| (i % 3 == 0) as u8 as f32).collect::<Vec<_>>(), (1, 1, 32, 32), &CPU).unwrap();
    let fused = model.fuse_edges(stages.as_tensor()).unwrap();
    let loss = (fused - target).unwrap().sqr().unwrap().sum_all().unwrap();
    let grads = loss.backward().unwrap();
    let g = grads.get(stages.as_tensor()).expect("gradient for the stage maps");
    for k in 0..DEPTH {
        let norm = values(&g.narrow(1, k, 1).unwrap()).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "stage {k} receives no gradient");
    }

    // Through the whole network, every edge-detection projection gets a gradient.
    let out = model.forward_with(&random_input(2, 64, 64, 6), Mode::Train).unwrap();
    let loss = out.e_hat.sum_all().unwrap();
    let grads = loss.backward().unwrap();
    for i in 1..=DEPTH {
        let w = model.params().get(&format!("edge.ed{i}.weight")).unwrap();
        let g = grads.get(w).unwrap_or_else(|| panic!("no gradient for ed{i}"));
        assert!(values(g).iter().any(|&v| v != 0.0));
    }
}

fn batch(seed: u64) -> (Tensor, Tensor, Tensor, Tensor) {
    let x = random_input(2, 64, 64, seed);
    let s: Vec<f32> = (0..2 * 64 * 64)
        .map(|i| {
            let (x, y) = ((i % 64) as i32 - 32, ((i / 64) % 64) as i32 - 32);
            (x * x + y * y < 300) as u8 as f32
        })
        .collect();
    let s = Tensor::from_vec(s, (2, 1, 64, 64), &CPU).unwrap();
    let e = boundary_enhance(&s).unwrap();
    let valid = Tensor::ones((2, 1, 64, 64), DType::F32, &CPU).unwrap();
    (x, s, e, valid)
}

#[test]
fn frozen_encoder_is_bit_identical_after_a_step() {
    let model = small_model(11);
    let enc_before = model.params().encoder_hash().unwrap();
    let rest_before = model.params().hash_where(|n| !Params::is_encoder(n)).unwrap();
    let mut opt = candle_nn::SGD::new(model.params().trainable(false), 0.1).unwrap();
    let (x, s, e, valid) = batch(12);
    let out = model.forward_with(&x, Mode::TrainFrozenEncoder).unwrap();
    let loss = total_loss(&out, &s, &e, &valid, &LossWeights::default()).unwrap();
    opt.backward_step(&loss.total).unwrap();
    assert_eq!(model.params().encoder_hash().unwrap(), enc_before);
    assert_ne!(model.params().hash_where(|n| !Params::is_encoder(n)).unwrap(), rest_before);

    // An unfrozen step moves the encoder as well.
    let mut opt = candle_nn::SGD::new(model.params().trainable(true), 0.1).unwrap();
    let out = model.forward_with(&x, Mode::Train).unwrap();
    let loss = total_loss(&out, &s, &e, &valid, &LossWeights::default()).unwrap();
    opt.backward_step(&loss.total).unwrap();
    assert_ne!(model.params().encoder_hash().unwrap(), enc_before);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.safetensors");
    let model = small_model(13);
    save_checkpoint(model.params(), (64, 64), &path).unwrap();
    let (params, size) = load_checkpoint(&path, &CPU).unwrap();
    assert_eq!(size, (64, 64));
    assert_eq!(params.cfg, model.params().cfg);
    assert_eq!(params.hash().unwrap(), model.params().hash().unwrap());
    let x = random_input(1, 64, 64, 14);
    let a = values(&model.forward(&x).unwrap().s_hat);
    let b = values(&Model::new(params).unwrap().forward(&x).unwrap().s_hat);
    assert_eq!(a, b);

    let garbage = dir.path().join("bad.safetensors");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    assert!(matches!(load_checkpoint(&garbage, &CPU), Err(ModelError::Checkpoint { .. })));
    assert!(matches!(load_checkpoint(&dir.path().join("none"), &CPU), Err(ModelError::Io(_))));
}

#[test]
fn pretrained_encoder_is_loaded_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.safetensors");
    let donor = Params::init(&NetworkConfig::small(8), 100, &CPU, DType::F32).unwrap();
    save_checkpoint(&donor, (64, 64), &path).unwrap();

    let cfg = NetworkConfig {
        use_pretrained_encoder: true,
        pretrained_path: Some(path.clone()),
        ..NetworkConfig::small(8)
    };
    let loaded = Params::init(&cfg, 5, &CPU, DType::F32).unwrap();
    assert_eq!(loaded.encoder_hash().unwrap(), donor.encoder_hash().unwrap());
    assert_ne!(loaded.hash().unwrap(), donor.hash().unwrap());

    // Immediate save and reload keeps every tensor.
    let again = dir.path().join("again.safetensors");
    save_checkpoint(&loaded, (64, 64), &again).unwrap();
    assert_eq!(load_checkpoint(&again, &CPU).unwrap().0.hash().unwrap(), loaded.hash().unwrap());

    let wider = NetworkConfig {
        use_pretrained_encoder: true,
        pretrained_path: Some(path),
        ..NetworkConfig::small(16)
    };
    assert!(matches!(
        Params::init(&wider, 5, &CPU, DType::F32),
        Err(ModelError::CheckpointMismatch { .. })
    ));
    let resnet = NetworkConfig {
        base_width: 8,
        ..wider
    };
    let resnet = NetworkConfig {
        encoder: EncoderKind::Resnet34,
        ..resnet
    };
    assert!(matches!(
        Params::init(&resnet, 5, &CPU, DType::F32),
        Err(ModelError::CheckpointMismatch { .. })
    ));
}
