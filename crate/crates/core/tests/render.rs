use image::{Rgb, RgbImage};
use proptest::prelude::*;
use yoho_core::annotation::SampleCircle;
use yoho_core::grid::Mask;
use yoho_core::phantom::phantom;
use yoho_core::render::{
    derive_edge_map, extract_seeds, generate_dataset, mask_from_placements, paste_seeds, stream_rng, Dataset,
    RenderConfig, RenderContext, SeedShape,
};
use yoho_oracle::morphology;

fn small_cfg(k: usize) -> RenderConfig {
    RenderConfig {
        k,
        seeds_per_sample: 2,
        out_size: (128, 128),
        rng_seed: 11,
        ..RenderConfig::default()
    }
}

#[test]
fn triangle_seed_area_matches_analytic() {
    let img = RgbImage::from_pixel(300, 300, Rgb([10, 20, 30]));
    let samples = [SampleCircle::new(150.0, 150.0, 60.0)];
    let cfg = RenderConfig {
        seeds_per_sample: 40,
        seed_scale_range: (0.4, 1.0),
        ..RenderConfig::default()
    };
    let set = extract_seeds(&img, &samples, &cfg, &mut stream_rng(3, 0)).unwrap();
    let mut checked = 0;
    for seed in &set.seeds {
        if let SeedShape::EquilateralTriangle { side, .. } = seed.shape {
            if side < 40.0 {
                continue;
            }
            let ratio = seed.mask.count() as f64 / (side * side) / (3f64.sqrt() / 4.0);
            assert!((0.97..=1.03).contains(&ratio), "side {side}, ratio {ratio}");
            checked += 1;
        }
    }
    assert!(checked >= 10);
}

#[test]
fn every_seed_fits_inside_its_source_circle() {
    let img = RgbImage::from_pixel(200, 200, Rgb([1, 2, 3]));
    let samples = [SampleCircle::new(60.0, 60.0, 25.0), SampleCircle::new(140.0, 130.0, 18.0)];
    let set = extract_seeds(&img, &samples, &RenderConfig::default(), &mut stream_rng(5, 1)).unwrap();
    for seed in &set.seeds {
        let src = samples[seed.source_index];
        let (dx, dy) = (seed.center[0] - src.cx, seed.center[1] - src.cy);
        assert!((dx * dx + dy * dy).sqrt() + seed.shape.circumradius() <= src.r + 1e-9);
        assert_eq!(seed.texture.dimensions(), (seed.mask.width() as u32, seed.mask.height() as u32));
    }
}

#[test]
fn mean_paste_count_is_four() {
    let img = RgbImage::from_pixel(256, 256, Rgb([200, 150, 150]));
    let samples = [SampleCircle::new(128.0, 128.0, 20.0)];
    let cfg = RenderConfig {
        seeds_per_sample: 4,
        ..RenderConfig::default()
    };
    let seeds = extract_seeds(&img, &samples, &cfg, &mut stream_rng(1, 0)).unwrap();
    let mut drawn = 0usize;
    for i in 0..1000 {
        let s = paste_seeds(&img, &seeds, &cfg, &mut stream_rng(2, i)).unwrap();
        drawn += s.placements.len() + s.skipped.len();
    }
    let mean = drawn as f64 / 1000.0;
    assert!((3.7..=4.3).contains(&mean), "mean paste count {mean}");
}

#[test]
fn small_dataset_is_deterministic_and_nonempty() {
    let p = phantom(2);
    let cfg = small_cfg(10);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_dataset(&p.annotated, &cfg, a.path()).unwrap();
    let mb = generate_dataset(&p.annotated, &cfg, b.path()).unwrap();
    assert_eq!(ma.k(), 10);
    assert_eq!(ma.m(), 8);
    assert_eq!(ma.fingerprint(), mb.fingerprint());
    for (ra, rb) in ma.samples.iter().zip(&mb.samples) {
        assert_eq!(ra.image.sha256, rb.image.sha256);
        assert_eq!(ra.mask.sha256, rb.mask.sha256);
        assert_eq!(ra.edge.sha256, rb.edge.sha256);
    }

    let ds = Dataset::open(a.path()).unwrap();
    assert_eq!(ds.len(), 10);
    let seed_masks: Vec<Mask> = ma.seeds.iter().map(|s| s.mask()).collect();
    for i in 0..ds.len() {
        let (image, mask, edge) = ds.load_sample(i).unwrap();
        assert_eq!(image.dimensions(), (128, 128));
        assert!(mask.count() > 0);
        let rec = &ma.samples[i];
        assert_eq!(rec.foreground_pixels, mask.count());
        assert_eq!(mask, mask_from_placements(&seed_masks, &rec.placements, 128, 128));
        assert_eq!(edge, derive_edge_map(&mask, cfg.edge_thickness));
    }

    let reseeded = RenderConfig { rng_seed: 12, ..cfg };
    let other = generate_dataset(&p.annotated, &reseeded, tempfile::tempdir().unwrap().path()).unwrap();
    assert_ne!(other.fingerprint(), ma.fingerprint());
}

#[test]
fn sample_streams_are_order_independent() {
    let p = phantom(3);
    let cfg = small_cfg(12);
    let ctx = RenderContext::new(&p.annotated, &cfg).unwrap();
    let n = p.annotated.samples.len();
    assert!(n < ctx.seeds.len() && ctx.seeds.len() < cfg.k);
    let fwd: Vec<_> = (0..cfg.k).map(|i| ctx.render_sample(&cfg, i).unwrap()).collect();
    for i in (0..cfg.k).rev() {
        assert_eq!(ctx.render_sample(&cfg, i).unwrap(), fwd[i]);
    }
}

#[test]
fn too_few_samples_for_k_is_rejected() {
    let p = phantom(4);
    let cfg = small_cfg(8);
    assert!(RenderContext::new(&p.annotated, &cfg).is_err());
}

fn random_mask() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
    (4usize..24, 4usize..24).prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(any::<bool>(), w * h)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn edge_map_matches_neighborhood_scan((w, h, bits) in random_mask(), thickness in 1usize..6) {
        let mask = Mask::from_vec(w, h, bits.clone());
        let fast = derive_edge_map(&mask, thickness);
        let want = morphology::edge_map(&bits, w, h, thickness);
        prop_assert_eq!(fast.as_slice(), want.as_slice());
    }

    #[test]
    fn pasted_masks_never_overlap(seed in 0u64..10_000) {
        let img = RgbImage::from_fn(96, 96, |x, y| Rgb([x as u8, y as u8, 150]));
        let samples = [SampleCircle::new(30.0, 30.0, 14.0), SampleCircle::new(65.0, 60.0, 12.0)];
        let cfg = RenderConfig { seeds_per_sample: 6, pastes_per_image_range: (3, 8), ..RenderConfig::default() };
        let seeds = extract_seeds(&img, &samples, &cfg, &mut stream_rng(seed, 0)).unwrap();
        let s = paste_seeds(&img, &seeds, &cfg, &mut stream_rng(seed, 1)).unwrap();
        let masks: Vec<Mask> = seeds.seeds.iter().map(|s| s.mask.clone()).collect();
        let total: usize = s.placements.iter().map(|p| masks[p.seed_index].count()).sum();
        prop_assert_eq!(total, s.mask.count());
        prop_assert_eq!(&s.mask, &mask_from_placements(&masks, &s.placements, 96, 96));
        prop_assert_eq!(&s.edge, &derive_edge_map(&s.mask, cfg.edge_thickness));
        // Pixels outside the mask keep the base color.
        for y in 0..96 {
            for x in 0..96 {
                if !*s.mask.get(x, y) {
                    prop_assert_eq!(s.image.get_pixel(x as u32, y as u32), img.get_pixel(x as u32, y as u32));
                }
            }
        }
    }
}
