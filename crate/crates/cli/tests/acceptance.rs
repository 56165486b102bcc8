//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use texsynth::fixture::write_demo;
use texsynth_core::backends::mock::{MockCodec, MockFeatureExtractor, OracleNoise, ThresholdSegmenter};
use texsynth_core::backends::{EmbeddingVector, FeatureExtractor, LatentCodec, NoisePredictor};
use texsynth_core::descmatch::{match_embedding, AnomalyDescriptor, MatchingPool};
use texsynth_core::imageops::{area_fraction, ssim_map, AreaBase, BinaryMask, Image};
use texsynth_core::maskgen::{generate, generate_from_masks, MaskGenConfig, REASON_FOREGROUND, REASON_TEXTURE};
use texsynth_core::metrics::{inception_score, intra_cluster_distance, kmeans_reduce, ProbRow};
use texsynth_core::synthpipe::{
    add_noise, ddim_step, noise_rng, refine_mask, sample_noise, tali_blend, NoiseSchedule, RefinePolarity,
};
use texsynth_core::texlib::{auto_clean, CleanSettings, CleanVerdict, CurationState, Library};
use texsynth_core::Error;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn c1_tali() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..500 {
        let (c, h, w) = (rng.random_range(1..=4), rng.random_range(1..=16), rng.random_range(1..=16));
        let zn = sample_noise((c, h, w), &mut rng);
        let zt = sample_noise((c, h, w), &mut rng);
        let bits: Vec<bool> = (0..w * h).map(|_| rng.random()).collect();
        let m = BinaryMask::from_bits(w, h, bits.clone()).unwrap();
        let out = tali_blend(&zn, &zt, &m).map_err(|e| e.to_string())?;
        for ci in 0..c {
            for (i, &on) in bits.iter().enumerate() {
                let k = ci * h * w + i;
                let want = if on { zt.data[k] } else { zn.data[k] };
                ensure(out.data[k] == want, || format!("case {case}: element {k} differs"))?;
            }
        }
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("500 triples exact, {:.2}s", start.elapsed().as_secs_f64()))
}

fn blocky(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    let blocks: Vec<[f32; 3]> = (0..(w / 8) * (h / 8))
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    Image::from_fn(w, h, |x, y| blocks[(y / 8) * (w / 8) + x / 8])
}

fn c2_ddim() -> Check {
    let start = Instant::now();
    let s = NoiseSchedule::default();
    let oracle = OracleNoise::new(s.steps());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let img = blocky(&mut rng, 64, 64);
        let z = MockCodec.encode(&img).map_err(|e| e.to_string())?;
        let eps = sample_noise(z.shape(), &mut noise_rng(case));
        oracle.observe_noise(&eps);
        let mask = BinaryMask::new(64, 64);
        let mut zt = add_noise(&z, 16, &eps, &s).map_err(|e| e.to_string())?;
        for t in (1..=16).rev() {
            let e = oracle.predict_noise(&zt, t, &mask, &img, "p").map_err(|e| e.to_string())?;
            zt = ddim_step(&zt, t, &e, &s).map_err(|e| e.to_string())?;
        }
        let num: f64 = zt.data.iter().zip(&z.data).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = z.data.iter().map(|b| b * b).sum();
        worst = worst.max((num / den).sqrt());
    }
    ensure(worst < 1e-5, || format!("worst relative error {worst:e}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("100 latents, worst rel err {worst:.1e}, {:.2}s", start.elapsed().as_secs_f64()))
}

fn c3_clean_bounds() -> Check {
    let settings = CleanSettings::default();
    let n = 1000 * 1000;
    let cases = [
        (0.019, CleanVerdict::RejectSparse),
        (0.021, CleanVerdict::Pass),
        (0.699, CleanVerdict::Pass),
        (0.701, CleanVerdict::RejectDense),
    ];
    for (coverage, want) in cases {
        let on = (coverage * n as f64).round() as usize;
        let mask = BinaryMask::from_fn(1000, 1000, |x, y| y * 1000 + x < on);
        let density = area_fraction(&mask, AreaBase::WholeImage).map_err(|e| e.to_string())?;
        let got = auto_clean(density, &settings);
        ensure(got == want, || format!("coverage {coverage}: {got:?}, expected {want:?}"))?;
    }
    Ok("0.019 sparse / 0.021 pass / 0.699 pass / 0.701 dense".into())
}

fn scene(rng: &mut ChaCha8Rng) -> (BinaryMask, Image, BinaryMask) {
    let (cx, cy) = (rng.random_range(16.0..48.0), rng.random_range(16.0..48.0));
    let rad: f64 = rng.random_range(10.0..40.0);
    let fg = BinaryMask::from_fn(64, 64, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) < rad * rad);
    let density: f64 = rng.random_range(0.05..0.5);
    let bits: Vec<bool> = (0..64 * 64).map(|_| rng.random::<f64>() < density).collect();
    let tex = Image::from_fn(64, 64, |x, y| [(x ^ y) as f32 / 64.0, 0.5, y as f32 / 64.0]);
    (fg, tex, BinaryMask::from_bits(64, 64, bits).unwrap())
}

fn c4_maskgen() -> Check {
    let start = Instant::now();
    let cfg = MaskGenConfig::default();
    ensure(cfg.thresh1 == 0.3 && cfg.thresh2 == 0.05 && cfg.l_rate == 0.1 && cfg.h_rate == 0.3, || {
        "default constants changed".into()
    })?;
    let mut scenes = ChaCha8Rng::seed_from_u64(4);
    let mut accepted = 0;
    for i in 0..1000u64 {
        let (fg, tex, edges) = scene(&mut scenes);
        let b = match generate_from_masks(&fg, &tex, &edges, 8, &cfg, &mut ChaCha8Rng::seed_from_u64(i)) {
            Ok(b) => b,
            Err(Error::GenerationFailed { .. }) => continue,
            Err(e) => return Err(format!("bundle {i}: {e}")),
        };
        accepted += 1;
        let r = b.rect;
        let (mut on_fg, mut on_edges) = (0usize, 0usize);
        for y in r.y..r.y + r.height {
            for x in r.x..r.x + r.width {
                if fg.get(x, y) {
                    on_fg += 1;
                    on_edges += edges.get(x, y) as usize;
                }
            }
        }
        let area = r.width * r.height;
        ensure(on_fg as f64 / area as f64 > 0.3, || format!("bundle {i}: foreground predicate"))?;
        ensure(on_edges as f64 / on_fg as f64 > 0.05, || format!("bundle {i}: texture predicate"))?;
        for side in [r.width, r.height] {
            ensure((7..=19).contains(&side), || format!("bundle {i}: side {side} outside [0.1n, 0.3n]"))?;
        }
        for y in 0..64 {
            for x in 0..64 {
                let inside = x >= r.x && x < r.x + r.width && y >= r.y && y < r.y + r.height;
                ensure(b.m_in.get(x, y) == (inside && fg.get(x, y)), || format!("bundle {i}: M_in at ({x},{y})"))?;
                if b.x_texture.get(x, y) != [0.0; 3] || b.texture_support.get(x, y) {
                    ensure(b.m_in.get(x, y), || format!("bundle {i}: texture leaves M_in at ({x},{y})"))?;
                }
            }
        }
    }
    ensure(accepted > 900, || format!("only {accepted} of 1000 accepted"))?;

    let seg = ThresholdSegmenter::default();
    let striped = Image::from_fn(64, 64, |x, _| [((x / 3) % 2) as f32; 3]);
    let empty_fg = generate(&Image::filled(64, 64, [0.1; 3]), &striped, &seg, 8, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
    let edgeless = generate(&Image::filled(64, 64, [0.9; 3]), &Image::filled(64, 64, [0.4; 3]), &seg, 8, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
    for (res, reason) in [(empty_fg, REASON_FOREGROUND), (edgeless, REASON_TEXTURE)] {
        match res {
            Err(Error::GenerationFailed { attempts, reason: got }) if attempts == cfg.max_retries && got == reason => {}
            other => return Err(format!("expected `{reason}` failure, got {other:?}")),
        }
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("{accepted}/1000 accepted and recounted, impossible inputs rejected, {:.2}s", start.elapsed().as_secs_f64()))
}

fn c5_matching() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = AnomalyDescriptor::manual("bottle", "scratched").map_err(|e| e.to_string())?;
    let mut ties = 0;
    for case in 0..1000 {
        let dim = rng.random_range(2..12);
        let n = rng.random_range(1..=64);
        let vec = |rng: &mut ChaCha8Rng| loop {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-2i32..=2) as f32).collect();
            if v.iter().any(|&x| x != 0.0) {
                break v;
            }
        };
        let raw: Vec<(String, EmbeddingVector)> = (0..n)
            .map(|i| (format!("t{:04}", rng.random_range(0..100) * 100 + i), EmbeddingVector::new(vec(&mut rng)).unwrap()))
            .collect();
        let q = EmbeddingVector::new(vec(&mut rng)).unwrap();
        let sims: Vec<f64> = raw
            .iter()
            .map(|(_, v)| q.values().iter().zip(v.values()).map(|(&a, &b)| a as f64 * b as f64).sum())
            .collect();
        let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<&String> = raw.iter().zip(&sims).filter(|(_, s)| **s == best).map(|(e, _)| &e.0).collect();
        if winners.len() > 1 {
            ties += 1;
        }
        let want = winners.into_iter().min().unwrap();
        let got = match_embedding(&d, &q, &MatchingPool::new(raw.clone()), 5).map_err(|e| e.to_string())?;
        ensure(&got.asset_id == want, || format!("case {case}: {} != {want}", got.asset_id))?;
    }
    Ok(format!("1000 pools equal brute force ({ties} with ties)"))
}

fn noisy(rng: &mut ChaCha8Rng) -> Image {
    let v: Vec<f32> = (0..64 * 64).map(|_| rng.random_range(0.2..0.8)).collect();
    Image::from_fn(64, 64, |x, y| [v[y * 64 + x]; 3])
}

fn c6_refine() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let normal = noisy(&mut rng);
    let m_in = BinaryMask::from_fn(64, 64, |x, y| (8..56).contains(&x) && (8..56).contains(&y));
    let same = refine_mask(&normal, &normal, &m_in, RefinePolarity::Dissimilarity).map_err(|e| e.to_string())?;
    ensure(same.is_empty(), || "identical images gave a nonempty mask".into())?;

    let block = |x: usize, y: usize| (26..38).contains(&x) && (26..38).contains(&y);
    let result = Image::from_fn(64, 64, |x, y| {
        let p = normal.get(x, y);
        if block(x, y) { [1.0 - p[0]; 3] } else { p }
    });
    let m = refine_mask(&normal, &result, &m_in, RefinePolarity::Dissimilarity).map_err(|e| e.to_string())?;
    let s = ssim_map(&normal.to_gray().masked(&m_in).unwrap(), &result.to_gray().masked(&m_in).unwrap())
        .map_err(|e| e.to_string())?;
    let inside: Vec<f64> = (0..64 * 64).filter(|&i| m_in.bits()[i]).map(|i| 1.0 - s.values[i]).collect();
    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    for y in 0..64 {
        for x in 0..64 {
            ensure(m.get(x, y) == (m_in.get(x, y) && 1.0 - s.get(x, y) > mean), || format!("rule differs at ({x},{y})"))?;
            if block(x, y) {
                ensure(m.get(x, y), || format!("block pixel ({x},{y}) missed"))?;
            }
            if x + 5 < 26 || x > 42 || y + 5 < 26 || y > 42 {
                ensure(!m.get(x, y), || format!("unchanged pixel ({x},{y}) flagged"))?;
            }
        }
    }
    for case in 0..200 {
        let (a, b) = (noisy(&mut rng), noisy(&mut rng));
        let p = rng.random_range(0.05..0.9);
        let bits: Vec<bool> = (0..64 * 64).map(|_| rng.random::<f64>() < p).collect();
        let mi = BinaryMask::from_bits(64, 64, bits).unwrap();
        let r = refine_mask(&a, &b, &mi, RefinePolarity::Dissimilarity).map_err(|e| e.to_string())?;
        ensure(r.is_subset_of(&mi), || format!("case {case}: M_res leaves M_in"))?;
    }
    Ok(format!("identical→empty, block covered (halo 5px), 200 subset cases, {} px flagged", m.count()))
}

fn c7_metrics() -> Check {
    let row = ProbRow::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let is1 = inception_score(&vec![row; 40]).map_err(|e| e.to_string())?;
    ensure((is1 - 1.0).abs() <= 1e-9, || format!("identical rows IS {is1}"))?;
    for k in [2usize, 7, 25] {
        let rows: Vec<ProbRow> = (0..k)
            .map(|i| ProbRow::new((0..k).map(|j| (i == j) as u8 as f64).collect()).unwrap())
            .collect();
        let is = inception_score(&rows).map_err(|e| e.to_string())?;
        ensure((is - k as f64).abs() <= 1e-6, || format!("{k} one-hots IS {is}"))?;
    }
    let img = Image::from_fn(48, 48, |x, y| [x as f32 / 48.0, 0.3, y as f32 / 48.0]);
    let feats: Vec<Vec<f64>> = MockFeatureExtractor::default()
        .extract(&vec![img; 5])
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|f| f.perceptual)
        .collect();
    let il = intra_cluster_distance(&feats).map_err(|e| e.to_string())?;
    ensure(il == 0.0, || format!("identical cluster IL {il}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for set in 0..50 {
        let n = rng.random_range(10..150);
        let d = rng.random_range(1..6);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let k = rng.random_range(1..=n.min(10));
        let km = kmeans_reduce(&pts, k, &mut rng).map_err(|e| e.to_string())?;
        ensure(km.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9), || format!("dataset {set}: inertia increased"))?;
    }
    Ok("IS=1 for identical rows, IS=K for one-hots, IL=0, k-means monotone on 50 sets".into())
}

fn texsynth(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_texsynth"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c8_determinism(cfg: &Path, work: &Path) -> Check {
    let start = Instant::now();
    let mut snaps = Vec::new();
    for name in ["a", "b"] {
        let out = work.join(name);
        let o = texsynth(&["--config", cfg.to_str().unwrap(), "synth", "--object", "cashew", "--count", "10", "--seed", "7", "--out", out.to_str().unwrap()])?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        snaps.push(snapshot(&out));
    }
    let images = snaps[0].keys().filter(|k| k.to_str().unwrap().ends_with("_mask.png")).count();
    ensure(images == 10, || format!("{images} records instead of 10"))?;
    ensure(snaps[0] == snaps[1], || "run directories differ".into())?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("{} files byte-identical across two runs, {:.2}s", snaps[0].len(), start.elapsed().as_secs_f64()))
}

fn c9_sweep(cfg: &Path, work: &Path) -> Check {
    let out = work.join("sweep");
    let o = texsynth(&["--config", cfg.to_str().unwrap(), "sweep-tstar", "--values", "12,14,16,18,20", "--object", "cashew", "--count", "4", "--out", out.to_str().unwrap()])?;
    ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with("| T*=")).collect();
    ensure(rows.len() == 5, || format!("{} rows:\n{table}", rows.len()))?;
    for (row, v) in rows.iter().zip([12, 14, 16, 18, 20]) {
        let cells: Vec<&str> = row.trim_matches('|').split('|').map(str::trim).collect();
        ensure(cells[0] == format!("T*={v}"), || format!("row label {}", cells[0]))?;
        let parts: Vec<&str> = cells[1].split(" / ").collect();
        ensure(parts.len() == 2 && parts.iter().all(|p| p.parse::<f64>().is_ok()), || format!("cell `{}`", cells[1]))?;
    }
    Ok("5 rows of `T*=v | IS / IL`".into())
}

fn c10_api(work: &Path) -> Check {
    use reqwest::blocking::Client;
    let root = work.join("api");
    let lib = common::fixture_library(&root);
    let lib_root = lib.root().to_path_buf();
    let server = common::Server::start(lib);
    let c = Client::new();
    let queue = |s: &common::Server| -> Result<Vec<String>, String> {
        let v: Value = c.get(s.url("/api/queue?state=pending")).send().map_err(|e| e.to_string())?.json().map_err(|e| e.to_string())?;
        Ok(v["items"].as_array().unwrap().iter().map(|i| i["asset_id"].as_str().unwrap().to_string()).collect())
    };
    let ids = queue(&server)?;
    let r = c.post(server.url(&format!("/api/assets/{}/decision", ids[0]))).json(&json!({"decision": "accept"})).send().map_err(|e| e.to_string())?;
    ensure(r.status() == 200, || format!("accept returned {}", r.status()))?;
    ensure(!queue(&server)?.contains(&ids[0]), || "accepted asset still pending".into())?;

    let barrier = Arc::new(Barrier::new(2));
    let threads: Vec<_> = ["accept", "reject"]
        .into_iter()
        .map(|d| {
            let (url, b) = (server.url(&format!("/api/assets/{}/decision", ids[1])), barrier.clone());
            std::thread::spawn(move || {
                let c = Client::new();
                b.wait();
                c.post(url).json(&json!({"decision": d})).send().map(|r| r.status().as_u16()).unwrap_or(0)
            })
        })
        .collect();
    let mut codes: Vec<u16> = threads.into_iter().map(|t| t.join().unwrap()).collect();
    codes.sort();
    ensure(codes == [200, 409], || format!("concurrent decisions returned {codes:?}"))?;
    let second = c.get(server.url(&format!("/api/assets/{}", ids[1]))).send().map_err(|e| e.to_string())?.json::<Value>().map_err(|e| e.to_string())?;
    server.stop();

    let reopened = Library::open(&lib_root).map_err(|e| e.to_string())?;
    ensure(reopened.asset(&ids[0]).unwrap().curation_state == CurationState::Accepted, || "first decision lost".into())?;
    let state = reopened.asset(&ids[1]).unwrap().curation_state.to_string();
    ensure(second["curation_state"] == state.as_str(), || "second decision lost".into())?;
    ensure(reopened.manifest().count_in(CurationState::Pending) == 6, || "pending count after restart".into())?;
    Ok("accept leaves queue; double decision → [200, 409]; restart keeps both decisions".into())
}

fn c11_live() -> Option<Check> {
    let url = std::env::var("TEXSYNTH_LIVE_DIFFUSION_URL").ok()?;
    Some((|| {
        let work = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg_path = write_demo(work.path()).map_err(|e| e.to_string())?;
        let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
        cfg["backends"]["inpainter"] = json!({"kind": "http", "base_url": url, "max_t": 20});
        let big = Image::from_fn(1024, 1024, |x, y| {
            let (dx, dy) = (x as f32 - 512.0, y as f32 - 512.0);
            if (dx / 400.0).powi(2) + (dy / 320.0).powi(2) < 1.0 { [0.8, 0.6, 0.4] } else { [0.1; 3] }
        });
        let img = work.path().join("objects/live.png");
        texsynth_core::imageops::save_image(&big, &img).map_err(|e| e.to_string())?;
        std::fs::write(&cfg_path, cfg.to_string()).unwrap();
        let out = work.path().join("live");
        let o = texsynth(&["--config", cfg_path.to_str().unwrap(), "synth", "--object", "cashew", "--image", img.to_str().unwrap(), "--count", "1", "--out", out.to_str().unwrap()])?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        let run: Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
        let rec = &run["records"][0];
        let png = texsynth_core::imageops::load_image(out.join(rec["image"].as_str().unwrap())).map_err(|e| e.to_string())?;
        ensure(png.dims() == (1024, 1024), || format!("output is {:?}", png.dims()))?;
        let mask = texsynth_core::imageops::load_mask(out.join(rec["mask"].as_str().unwrap())).map_err(|e| e.to_string())?;
        ensure(!mask.is_empty(), || "refined mask is empty".into())?;
        Ok("1024×1024 output with nonempty refined mask".into())
    })())
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let cfg = write_demo(&work.path().join("demo")).expect("demo fixture");
    let checks: Vec<Criterion> = vec![
        ("1 TALI exactness", Box::new(c1_tali)),
        ("2 DDIM inversion", Box::new(c2_ddim)),
        ("3 cleaning bounds", Box::new(c3_clean_bounds)),
        ("4 mask generation soundness", Box::new(c4_maskgen)),
        ("5 matching oracle equivalence", Box::new(c5_matching)),
        ("6 refinement", Box::new(c6_refine)),
        ("7 metrics", Box::new(c7_metrics)),
        ("8 end-to-end determinism", Box::new(|| c8_determinism(&cfg, work.path()))),
        ("9 T* sweep harness", Box::new(|| c9_sweep(&cfg, work.path()))),
        ("10 curation API", Box::new(|| c10_api(work.path()))),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS [{name}] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{name}] {why}");
            }
        }
    }
    match c11_live() {
        None => println!("SKIP [11 live inpainting smoke test] set TEXSYNTH_LIVE_DIFFUSION_URL to run"),
        Some(Ok(detail)) => println!("PASS [11 live inpainting smoke test] {detail}"),
        Some(Err(why)) => {
            failed += 1;
            println!("FAIL [11 live inpainting smoke test] {why}");
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
