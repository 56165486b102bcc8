use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    auto_clean, cache_key, edge_density, evaluation_copy, CleanVerdict, CurationState, Decision,
    DecisionEvent, DecisionLog, EmbeddingCache, LibraryManifest, Taxonomy, TextureAsset,
};
use crate::backends::{Captioner, ImageEmbedder};
use crate::imageops::{canny, load_image, save_image, BinaryMask, Image};
use crate::{Error, Result};

const MANIFEST: &str = "manifest.json";
const DECISIONS: &str = "decisions.jsonl";
const CATEGORIES: &str = "categories.txt";
const IMAGES: &str = "images";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// New assets left pending for human review.
    pub added_pending: usize,
    /// New assets rejected by the edge-density filter.
    pub auto_rejected: usize,
    pub duplicates: usize,
    /// Files that could not be decoded as images.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub passed: usize,
    pub rejected_dense: usize,
    pub rejected_sparse: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub computed: usize,
    pub hits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub total: usize,
    pub by_state: BTreeMap<CurationState, usize>,
    pub by_category: BTreeMap<String, BTreeMap<CurationState, usize>>,
}

/// A texture library rooted at a directory. All mutations go through `&mut
/// self`; callers sharing a library across threads wrap it in a lock.
#[derive(Debug)]
pub struct Library {
    root: PathBuf,
    manifest: LibraryManifest,
    log: DecisionLog,
}

impl Library {
    /// Initialises an empty library with `taxonomy`.
    pub fn create(root: impl Into<PathBuf>, taxonomy: Taxonomy) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join(IMAGES)).map_err(|e| Error::io(&root, e))?;
        if root.join(MANIFEST).exists() {
            return Err(Error::invalid(format!(
                "{} already holds a library",
                root.display()
            )));
        }
        let cat_path = root.join(CATEGORIES);
        std::fs::write(&cat_path, taxonomy.to_text()).map_err(|e| Error::io(&cat_path, e))?;
        let lib = Self {
            log: DecisionLog::open(root.join(DECISIONS))?,
            manifest: LibraryManifest::new(taxonomy),
            root,
        };
        lib.save()?;
        Ok(lib)
    }

    /// Loads the manifest and folds in any logged decisions it has not seen.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut manifest: LibraryManifest = serde_json::from_str(&text)?;
        let events = DecisionLog::read_all(&root.join(DECISIONS))?;
        let mut replayed = 0;
        let seen = manifest.last_decision_seq;
        for ev in events.iter().filter(|e| e.seq > seen) {
            manifest.apply(ev);
            replayed += 1;
        }
        let lib = Self {
            log: DecisionLog::open(root.join(DECISIONS))?,
            manifest,
            root,
        };
        if replayed > 0 {
            log::info!("replayed {replayed} decision(s) missing from the manifest");
            lib.save()?;
        }
        Ok(lib)
    }

    pub fn open_or_create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if root.join(MANIFEST).exists() {
            Self::open(root)
        } else {
            Self::create(root, Taxonomy::default())
        }
    }

    /// Rebuilds asset states from the decision log alone.
    pub fn replay_states(&self) -> Result<BTreeMap<String, CurationState>> {
        let mut states = BTreeMap::new();
        for ev in DecisionLog::read_all(self.log.path())? {
            states.insert(ev.asset_id, ev.to);
        }
        Ok(states)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &LibraryManifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut LibraryManifest {
        &mut self.manifest
    }

    pub fn asset(&self, asset_id: &str) -> Result<&TextureAsset> {
        self.manifest
            .asset(asset_id)
            .ok_or_else(|| Error::NotFound(asset_id.to_string()))
    }

    pub fn image_path(&self, asset: &TextureAsset) -> PathBuf {
        self.root.join(&asset.image_path)
    }

    pub fn load_asset_image(&self, asset_id: &str) -> Result<Image> {
        load_image(self.image_path(self.asset(asset_id)?))
    }

    /// Canny edges of an asset exactly as the cleaner measured them.
    pub fn edge_mask(&self, asset_id: &str) -> Result<BinaryMask> {
        let gray = self.load_asset_image(asset_id)?.to_gray();
        let s = &self.manifest.clean;
        canny(&evaluation_copy(&gray, s.eval_resolution), s.canny.low, s.canny.high)
    }

    /// Writes `manifest.json` atomically.
    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST);
        let tmp = self.root.join(format!("{MANIFEST}.tmp"));
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn log_event(
        &mut self,
        asset_id: &str,
        from: Option<CurationState>,
        to: CurationState,
        actor: &str,
        note: Option<String>,
        asset: Option<TextureAsset>,
    ) -> Result<DecisionEvent> {
        let ev = self.log.append(DecisionEvent {
            seq: 0,
            timestamp: String::new(),
            asset_id: asset_id.to_string(),
            from,
            to,
            actor: actor.to_string(),
            note,
            asset,
        })?;
        self.manifest.apply(&ev);
        Ok(ev)
    }

    /// Adds every decodable image in `source_dir` (sorted by file name) as an
    /// asset of `category`, measuring edge density and applying the cleaning
    /// verdict immediately. Files whose content is already in the library are
    /// skipped as duplicates.
    pub fn ingest(&mut self, category: &str, source_dir: impl AsRef<Path>) -> Result<IngestReport> {
        if !self.manifest.taxonomy.contains(category) {
            return Err(Error::UnknownCategory(category.to_string()));
        }
        let source_dir = source_dir.as_ref();
        let mut files: Vec<PathBuf> = std::fs::read_dir(source_dir)
            .map_err(|e| Error::io(source_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();

        let mut report = IngestReport::default();
        for path in files {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let hash = hex::encode(Sha256::digest(&bytes));
            if self.manifest.assets.iter().any(|a| a.content_hash == hash) {
                report.duplicates += 1;
                continue;
            }
            let image = match image::load_from_memory(&bytes) {
                Ok(img) => Image::from_rgb32f(&img.to_rgb32f()),
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    report.skipped += 1;
                    continue;
                }
            };
            let density = edge_density(&image.to_gray(), &self.manifest.clean)?;
            let asset_id = hash[..16].to_string();
            let rel = format!("{IMAGES}/{asset_id}.png");
            std::fs::create_dir_all(self.root.join(IMAGES)).map_err(|e| Error::io(&self.root, e))?;
            save_image(&image, self.root.join(&rel))?;

            let state = match auto_clean(density, &self.manifest.clean) {
                CleanVerdict::Pass => {
                    report.added_pending += 1;
                    CurationState::Pending
                }
                _ => {
                    report.auto_rejected += 1;
                    CurationState::AutoRejected
                }
            };
            let asset = TextureAsset {
                asset_id: asset_id.clone(),
                category: category.to_string(),
                image_path: rel,
                content_hash: hash,
                edge_density: density,
                caption: None,
                curation_state: state,
                decision_note: None,
                embedding_ref: None,
            };
            self.log_event(&asset_id, None, state, "ingest", None, Some(asset))?;
        }
        self.save()?;
        Ok(report)
    }

    /// Re-applies the density bounds to every pending or auto-rejected asset,
    /// so the state always agrees with the current bounds.
    pub fn clean(&mut self) -> Result<CleanReport> {
        let settings = self.manifest.clean;
        let mut report = CleanReport::default();
        let candidates: Vec<(String, f64, CurationState)> = self
            .manifest
            .assets
            .iter()
            .filter(|a| {
                matches!(
                    a.curation_state,
                    CurationState::Pending | CurationState::AutoRejected
                )
            })
            .map(|a| (a.asset_id.clone(), a.edge_density, a.curation_state))
            .collect();
        for (id, density, state) in candidates {
            let verdict = auto_clean(density, &settings);
            let target = match verdict {
                CleanVerdict::Pass => {
                    report.passed += 1;
                    CurationState::Pending
                }
                CleanVerdict::RejectDense => {
                    report.rejected_dense += 1;
                    CurationState::AutoRejected
                }
                CleanVerdict::RejectSparse => {
                    report.rejected_sparse += 1;
                    CurationState::AutoRejected
                }
            };
            if target != state {
                let note = match verdict {
                    CleanVerdict::Pass => None,
                    CleanVerdict::RejectDense => Some("edge density above bound".to_string()),
                    CleanVerdict::RejectSparse => Some("edge density below bound".to_string()),
                };
                self.log_event(&id, Some(state), target, "auto-clean", note, None)?;
            }
        }
        self.save()?;
        Ok(report)
    }

    /// Records a curator's decision on a pending asset.
    ///
    /// The decision is synced to the log before the manifest is rewritten.
    pub fn decide(
        &mut self,
        asset_id: &str,
        decision: Decision,
        note: Option<String>,
        actor: &str,
    ) -> Result<TextureAsset> {
        let state = self.asset(asset_id)?.curation_state;
        if state != CurationState::Pending {
            return Err(Error::StateConflict {
                asset_id: asset_id.to_string(),
                state: state.to_string(),
            });
        }
        self.log_event(asset_id, Some(state), decision.target_state(), actor, note, None)?;
        self.save()?;
        Ok(self.asset(asset_id)?.clone())
    }

    /// Captions every accepted asset that lacks one. Idempotent.
    ///
    /// On a backend failure the captions produced so far are saved and the
    /// error reports how many remain.
    pub fn caption_accepted(&mut self, captioner: &dyn Captioner) -> Result<usize> {
        let todo: Vec<String> = self
            .manifest
            .assets
            .iter()
            .filter(|a| a.curation_state == CurationState::Accepted && a.caption.is_none())
            .map(|a| a.asset_id.clone())
            .collect();
        let total = todo.len();
        self.manifest.record_backend(captioner.descriptor());
        for (done, id) in todo.iter().enumerate() {
            let result = self.load_asset_image(id).and_then(|img| {
                let category = self.asset(id)?.category.clone();
                captioner.caption(&img, &category)
            });
            match result {
                Ok(caption) => {
                    self.manifest.asset_mut(id).expect("asset exists").caption = Some(caption)
                }
                Err(e) => {
                    self.save()?;
                    return Err(e.at_stage(if total - done == 1 {
                        "captioning (1 asset remaining)"
                    } else {
                        "captioning (assets remaining)"
                    }));
                }
            }
        }
        self.save()?;
        Ok(total)
    }

    /// Makes sure every accepted asset has an embedding cached under the
    /// embedder's name, computing only the missing ones.
    pub fn build_embedding_cache(&mut self, embedder: &dyn ImageEmbedder) -> Result<CacheStats> {
        let mut cache = EmbeddingCache::open(&self.root)?;
        let descriptor = embedder.descriptor();
        let mut stats = CacheStats::default();
        let accepted: Vec<(String, String)> = self
            .manifest
            .assets
            .iter()
            .filter(|a| a.curation_state == CurationState::Accepted)
            .map(|a| (a.asset_id.clone(), a.content_hash.clone()))
            .collect();
        self.manifest.record_backend(descriptor.clone());
        for (id, hash) in accepted {
            let key = cache_key(&hash, &descriptor.name);
            if cache.contains(&key) {
                stats.hits += 1;
            } else {
                let embedded = self
                    .load_asset_image(&id)
                    .and_then(|img| embedder.embed_image(&img))
                    .and_then(|v| cache.insert(&key, v));
                if let Err(e) = embedded {
                    self.save()?;
                    return Err(e.at_stage("embedding cache"));
                }
                stats.computed += 1;
            }
            self.manifest.asset_mut(&id).expect("asset exists").embedding_ref = Some(key);
        }
        self.save()?;
        Ok(stats)
    }

    pub fn embedding_cache(&self) -> Result<EmbeddingCache> {
        EmbeddingCache::open(&self.root)
    }

    pub fn stats(&self) -> LibraryStats {
        let mut stats = LibraryStats {
            total: self.manifest.assets.len(),
            ..Default::default()
        };
        for state in CurationState::ALL {
            stats.by_state.insert(state, 0);
        }
        for a in &self.manifest.assets {
            *stats.by_state.entry(a.curation_state).or_default() += 1;
            *stats
                .by_category
                .entry(a.category.clone())
                .or_default()
                .entry(a.curation_state)
                .or_default() += 1;
        }
        stats
    }
}
