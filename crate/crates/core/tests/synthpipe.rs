use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texsynth_core::backends::mock::{MockCodec, OracleNoise, ZeroNoise};
use texsynth_core::backends::{LatentCodec, LatentTensor};
use texsynth_core::imageops::{ssim_map, BinaryMask, Image};
use texsynth_core::maskgen::{MaskBundle, Rect};
use texsynth_core::synthpipe::{
    add_noise, ddim_step, refine_mask, sample_noise, synthesize, tali_blend, NoiseSchedule,
    RefinePolarity, SynthesisConfig, SynthesisRequest,
};

fn random_latent(rng: &mut ChaCha8Rng, shape: (usize, usize, usize)) -> LatentTensor {
    sample_noise(shape, rng)
}

fn rel_err(a: &LatentTensor, b: &LatentTensor) -> f64 {
    let num: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.data.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn blend_equals_select_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let (c, h, w) = (rng.random_range(1..5), rng.random_range(1..9), rng.random_range(1..9));
        let a = random_latent(&mut rng, (c, h, w));
        let b = random_latent(&mut rng, (c, h, w));
        let m = BinaryMask::from_fn(w, h, |x, y| (x + y) % 2 == 0);
        let out = tali_blend(&a, &b, &m).unwrap();
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let want = if m.get(x, y) { b.get(ci, y, x) } else { a.get(ci, y, x) };
                    assert_eq!(out.get(ci, y, x), want);
                }
            }
        }
    }
}

#[test]
fn single_step_inverts_add_noise() {
    let s = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 1..=20 {
        let z = random_latent(&mut rng, (4, 6, 6));
        let eps = random_latent(&mut rng, (4, 6, 6));
        let zt = add_noise(&z, t, &eps, &s).unwrap();
        let stepped = ddim_step(&zt, t, &eps, &s).unwrap();
        let direct = add_noise(&z, t - 1, &eps, &s).unwrap();
        assert!(rel_err(&stepped, &direct) < 1e-6, "t={t}");
    }
}

#[test]
fn chain_from_t_star_recovers_latent() {
    let s = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let z = random_latent(&mut rng, (4, 8, 8));
        let eps = random_latent(&mut rng, (4, 8, 8));
        let mut zt = add_noise(&z, 16, &eps, &s).unwrap();
        for t in (1..=16).rev() {
            zt = ddim_step(&zt, t, &eps, &s).unwrap();
        }
        assert!(rel_err(&zt, &z) < 1e-5);
    }
}

/// Image constant on every 8×8 block, so the mock codec round-trips it.
fn blocky(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<[f32; 3]> = (0..(w / 8) * (h / 8))
        .map(|_| {
            let q = |r: &mut ChaCha8Rng| r.random_range(0..=255u8) as f32 / 255.0;
            [q(&mut rng), q(&mut rng), q(&mut rng)]
        })
        .collect();
    Image::from_fn(w, h, |x, y| blocks[(y / 8) * (w / 8) + x / 8])
}

fn bundle_for(normal: &Image, texture: &Image, latent_mask: BinaryMask) -> MaskBundle {
    let (w, h) = normal.dims();
    let rect = Rect {
        x: 8,
        y: 8,
        width: 16,
        height: 16,
    };
    let m_in = rect.to_mask(w, h);
    let support = BinaryMask::from_fn(w, h, |x, y| latent_mask.get(x / 8, y / 8));
    MaskBundle {
        m_in,
        x_texture: texture.masked(&support).unwrap(),
        texture_support: support,
        m_texture_latent: latent_mask,
        rect,
        retries_used: 0,
    }
}

#[test]
fn oracle_backend_reproduces_normal_image_when_mask_empty() {
    let normal = blocky(32, 32, 1);
    let texture = blocky(32, 32, 2);
    let bundle = bundle_for(&normal, &texture, BinaryMask::new(4, 4));
    let req = SynthesisRequest {
        object_name: "cashew",
        description: "cracked",
        asset_id: "a",
        normal_image: &normal,
        bundle: &bundle,
        seed: 9,
    };
    let rec = synthesize(&MockCodec, &OracleNoise::new(1000), &req, &SynthesisConfig::default())
        .unwrap();
    for (a, b) in rec.x_result.pixels().iter().zip(normal.pixels()) {
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-5);
        }
    }
    assert!(rec.m_result.is_subset_of(&rec.m_in));
    assert_eq!(rec.meta.prompt, "A photo of cracked cashew");
}

#[test]
fn oracle_backend_pastes_texture_blocks() {
    let normal = blocky(32, 32, 3);
    let texture = blocky(32, 32, 4);
    let lm = BinaryMask::from_fn(4, 4, |x, y| (1..3).contains(&x) && (1..3).contains(&y));
    let bundle = bundle_for(&normal, &texture, lm.clone());
    let req = SynthesisRequest {
        object_name: "o",
        description: "d",
        asset_id: "a",
        normal_image: &normal,
        bundle: &bundle,
        seed: 1,
    };
    let rec = synthesize(&MockCodec, &OracleNoise::new(1000), &req, &SynthesisConfig::default())
        .unwrap();
    for y in 0..32 {
        for x in 0..32 {
            let want = if lm.get(x / 8, y / 8) { texture.get(x, y) } else { normal.get(x, y) };
            let got = rec.x_result.get(x, y);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn zero_noise_with_empty_mask_scales_the_normal_latent() {
    let normal = blocky(32, 32, 5);
    let bundle = bundle_for(&normal, &normal, BinaryMask::new(4, 4));
    let cfg = SynthesisConfig::default();
    let req = SynthesisRequest {
        object_name: "o",
        description: "d",
        asset_id: "a",
        normal_image: &normal,
        bundle: &bundle,
        seed: 3,
    };
    let rec = synthesize(&MockCodec, &ZeroNoise::default(), &req, &cfg).unwrap();
    // With ε̂ = 0 every step rescales by √(ᾱ_{t-1}/ᾱ_t), so z_0 = z_T*/√ᾱ_T*.
    let z = MockCodec.encode(&normal).unwrap();
    let eps = sample_noise(z.shape(), &mut texsynth_core::synthpipe::noise_rng(3));
    let zt = add_noise(&z, 16, &eps, &cfg.schedule).unwrap();
    let scale = cfg.schedule.alphabar(16).unwrap().sqrt();
    let expected = MockCodec
        .decode(&LatentTensor::new(3, 4, 4, zt.data.iter().map(|v| v / scale).collect()).unwrap())
        .unwrap();
    for (a, b) in rec.x_result.pixels().iter().zip(expected.pixels()) {
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-5);
        }
    }
}

#[test]
fn synthesis_is_deterministic() {
    let normal = blocky(32, 32, 6);
    let texture = blocky(32, 32, 7);
    let lm = BinaryMask::from_fn(4, 4, |x, y| x == 1 && y == 2);
    let bundle = bundle_for(&normal, &texture, lm);
    let req = SynthesisRequest {
        object_name: "o",
        description: "d",
        asset_id: "a",
        normal_image: &normal,
        bundle: &bundle,
        seed: 42,
    };
    let run = || synthesize(&MockCodec, &ZeroNoise::default(), &req, &SynthesisConfig::default()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
}

fn textured(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f32> = (0..64 * 64).map(|_| rng.random_range(0.2..0.8)).collect();
    Image::from_fn(64, 64, |x, y| [v[y * 64 + x]; 3])
}

#[test]
fn refine_finds_perturbed_block() {
    let normal = textured(1);
    let m_in = BinaryMask::from_fn(64, 64, |x, y| (8..56).contains(&x) && (8..56).contains(&y));
    let block = |x: usize, y: usize| (26..38).contains(&x) && (26..38).contains(&y);
    let result = Image::from_fn(64, 64, |x, y| {
        let p = normal.get(x, y);
        if block(x, y) {
            [1.0 - p[0]; 3]
        } else {
            p
        }
    });
    let m_res = refine_mask(&normal, &result, &m_in, RefinePolarity::Dissimilarity).unwrap();
    // Independent check of the decision rule with the SSIM map.
    let a = normal.to_gray().masked(&m_in).unwrap();
    let b = result.to_gray().masked(&m_in).unwrap();
    let s = ssim_map(&a, &b).unwrap();
    let inside: Vec<f64> = (0..64 * 64).filter(|&i| m_in.bits()[i]).map(|i| 1.0 - s.values[i]).collect();
    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    for y in 0..64 {
        for x in 0..64 {
            let want = m_in.get(x, y) && 1.0 - s.get(x, y) > mean;
            assert_eq!(m_res.get(x, y), want);
            if block(x, y) {
                assert!(m_res.get(x, y), "block pixel ({x},{y}) missed");
            }
            let far = x + 5 < 26 || x > 37 + 5 || y + 5 < 26 || y > 37 + 5;
            if far {
                assert!(!m_res.get(x, y), "unchanged pixel ({x},{y}) flagged");
            }
        }
    }
}

#[test]
fn refine_ignores_changes_outside_m_in() {
    let normal = textured(2);
    let m_in = BinaryMask::from_fn(64, 64, |x, y| (16..48).contains(&x) && (16..48).contains(&y));
    let result = Image::from_fn(64, 64, |x, y| {
        let p = normal.get(x, y);
        if (20..30).contains(&x) && (20..30).contains(&y) {
            [0.0; 3]
        } else {
            p
        }
    });
    let other = Image::from_fn(64, 64, |x, y| {
        if m_in.get(x, y) {
            result.get(x, y)
        } else {
            [0.5, 0.1, 0.9]
        }
    });
    let a = refine_mask(&normal, &result, &m_in, RefinePolarity::Dissimilarity).unwrap();
    let b = refine_mask(&normal, &other, &m_in, RefinePolarity::Dissimilarity).unwrap();
    assert_eq!(a, b);
}

#[test]
fn refined_mask_is_within_m_in() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..50 {
        let a = textured(100 + i);
        let b = textured(200 + i);
        let bits: Vec<bool> = (0..64 * 64).map(|_| rng.random::<f64>() < 0.4).collect();
        let m_in = BinaryMask::from_bits(64, 64, bits).unwrap();
        for p in [RefinePolarity::Dissimilarity, RefinePolarity::Similarity] {
            assert!(refine_mask(&a, &b, &m_in, p).unwrap().is_subset_of(&m_in));
        }
    }
}
