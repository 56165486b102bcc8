//! Self-contained demo workspace: a synthetic object photo, a small texture
//! library with every passing texture accepted, and a config pointing at both.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texsynth_core::imageops::{save_image, Image};
use texsynth_core::texlib::{CurationState, Decision, Library};

use crate::config::{ObjectConfig, Paths, RunConfig};
use crate::error::CliResult;
use crate::pipeline::write_json;

pub const DEMO_OBJECT: &str = "cashew";
pub const CONFIG_FILE: &str = "config.json";

/// 128×128 object on a dark background, constant on every 8×8 block.
pub fn object_image(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shade: Vec<f32> = (0..256).map(|_| rng.random_range(0.0..0.08)).collect();
    Image::from_fn(128, 128, |x, y| {
        let (bx, by) = (x / 8, y / 8);
        let (cx, cy) = (bx as f32 * 8.0 + 4.0 - 64.0, by as f32 * 8.0 + 4.0 - 64.0);
        let s = shade[by * 16 + bx];
        if (cx / 50.0).powi(2) + (cy / 40.0).powi(2) < 1.0 {
            [0.78 + s, 0.62 + s, 0.40 + s]
        } else {
            [0.12 + s, 0.12 + s, 0.14 + s]
        }
    })
}

fn stripes(period: usize, angle: bool) -> Image {
    Image::from_fn(96, 96, |x, y| {
        let t = if angle { x + y } else { x };
        let v = if (t / period).is_multiple_of(2) { 0.15 } else { 0.85 };
        [v, v * 0.9, v * 0.7]
    })
}

fn checker(cell: usize) -> Image {
    Image::from_fn(96, 96, |x, y| {
        let v = if (x / cell + y / cell).is_multiple_of(2) { 0.2 } else { 0.8 };
        [v * 0.6, v * 0.4, v * 0.3]
    })
}

fn blotches(seed: u64, cell: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 96 / cell + 1;
    let v: Vec<f32> = (0..n * n).map(|_| if rng.random::<bool>() { 0.1 } else { 0.9 }).collect();
    Image::from_fn(96, 96, |x, y| {
        let g = v[(y / cell) * n + x / cell];
        [g * 0.5, g * 0.7, g * 0.3]
    })
}

/// Source textures per category; the flat one fails the sparse bound.
pub fn texture_sources() -> BTreeMap<&'static str, Vec<Image>> {
    let mut m = BTreeMap::new();
    m.insert("cracked", vec![stripes(6, true), blotches(1, 8), checker(10)]);
    m.insert("rusty", vec![blotches(2, 6), checker(12), stripes(8, false)]);
    m.insert("moldy", vec![blotches(3, 10), stripes(10, true), Image::filled(96, 96, [0.5; 3])]);
    m
}

/// Writes the demo workspace into `dir` and returns the config path.
pub fn write_demo(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir.join("objects"))?;
    save_image(&object_image(1), dir.join("objects/cashew.png"))?;
    let lib_root = dir.join("texlib");
    let mut lib = Library::open_or_create(&lib_root)?;
    for (category, images) in texture_sources() {
        let src = dir.join("sources").join(category);
        std::fs::create_dir_all(&src)?;
        for (i, img) in images.iter().enumerate() {
            save_image(img, src.join(format!("{i:02}.png")))?;
        }
        lib.ingest(category, &src)?;
    }
    let pending: Vec<String> = lib
        .manifest()
        .assets
        .iter()
        .filter(|a| a.curation_state == CurationState::Pending)
        .map(|a| a.asset_id.clone())
        .collect();
    for id in pending {
        lib.decide(&id, Decision::Accept, None, "demo")?;
    }

    let mut cfg = RunConfig {
        seed: 7,
        paths: Paths {
            library: "texlib".into(),
            runs: "runs".into(),
            templates: None,
        },
        ..RunConfig::default()
    };
    cfg.objects.insert(
        DEMO_OBJECT.into(),
        ObjectConfig {
            image: "objects/cashew.png".into(),
            count: Some(10),
        },
    );
    let backends = cfg.backends();
    lib.caption_accepted(backends.captioner.as_ref())?;
    lib.build_embedding_cache(backends.image_embedder.as_ref())?;
    let path = dir.join(CONFIG_FILE);
    write_json(&path, &cfg)?;
    Ok(path)
}
