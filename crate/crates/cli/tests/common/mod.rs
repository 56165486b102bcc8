#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texsynth::server::{self, AppState};
use texsynth_core::imageops::{save_image, Image};
use texsynth_core::texlib::Library;

/// Ten texture files: eight with clear edges, two flat (auto-rejected).
pub fn write_sources(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let cell = 4 + i as usize;
        let v: Vec<f32> = (0..400).map(|_| rng.random_range(0.0..1.0)).collect();
        let img = Image::from_fn(64, 64, |x, y| [v[(y / cell) * 20 + x / cell]; 3]);
        save_image(&img, dir.join(format!("tex{i}.png"))).unwrap();
    }
    save_image(&Image::filled(64, 64, [0.3; 3]), dir.join("flat0.png")).unwrap();
    save_image(&Image::filled(64, 64, [0.6; 3]), dir.join("flat1.png")).unwrap();
}

pub fn fixture_library(root: &Path) -> Library {
    let src = root.join("src");
    write_sources(&src);
    let mut lib = Library::open_or_create(root.join("lib")).unwrap();
    let report = lib.ingest("cracked", &src).unwrap();
    assert_eq!((report.added_pending, report.auto_rejected), (8, 2));
    lib
}

pub struct Server {
    pub base: String,
    rt: Option<tokio::runtime::Runtime>,
}

impl Server {
    pub fn start(lib: Library) -> Self {
        let rt = tokio::runtime::Runtime::new().unwrap();
        let listener = rt
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        rt.spawn(server::serve(listener, AppState::new(lib, None)));
        Self { base, rt: Some(rt) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    /// Drops the runtime, which aborts the server task.
    pub fn stop(mut self) {
        if let Some(rt) = self.rt.take() {
            rt.shutdown_background();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(rt) = self.rt.take() {
            rt.shutdown_background();
        }
    }
}
