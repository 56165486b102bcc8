//! The curated texture library.
//!
//! On disk a library is a directory:
//!
//! ```text
//! manifest.json     schema version, taxonomy, cleaning settings, assets
//! decisions.jsonl   append-only log of every state change
//! categories.txt    the taxonomy, one name per line
//! images/<id>.png   normalised copy of every ingested asset
//! embeddings.bin    (key, dim, vector) records
//! embeddings.idx    plain-text index into embeddings.bin
//! ```
//!
//! The decision log is written and synced before the manifest, so a crash
//! between the two is repaired on the next [`Library::open`].

mod cache;
mod decisions;
mod library;

pub use cache::{cache_key, EmbeddingCache};
pub use decisions::{DecisionEvent, DecisionLog};
pub use library::{CacheStats, CleanReport, IngestReport, Library, LibraryStats};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::BackendDescriptor;
use crate::imageops::{area_fraction, canny, AreaBase, CannyParams, GrayImage};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_CATEGORIES: &str = include_str!("categories.txt");

/// Ordered, unique category names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Taxonomy(Vec<String>);

impl Taxonomy {
    pub fn new(categories: Vec<String>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::invalid("taxonomy must contain at least one category"));
        }
        for (i, c) in categories.iter().enumerate() {
            if c.trim().is_empty() || c.trim() != c {
                return Err(Error::invalid(format!("malformed category name {c:?}")));
            }
            if categories[..i].contains(c) {
                return Err(Error::invalid(format!("duplicate category `{c}`")));
            }
        }
        Ok(Self(categories))
    }

    /// Parses `categories.txt`: one name per line, `#` comments, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.0.join("\n");
        s.push('\n');
        s
    }

    pub fn contains(&self, category: &str) -> bool {
        self.0.iter().any(|c| c == category)
    }

    pub fn categories(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::parse(DEFAULT_CATEGORIES).expect("bundled taxonomy is valid")
    }
}

impl TryFrom<Vec<String>> for Taxonomy {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Taxonomy> for Vec<String> {
    fn from(t: Taxonomy) -> Self {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurationState {
    Pending,
    Accepted,
    Rejected,
    AutoRejected,
}

impl CurationState {
    pub const ALL: [CurationState; 4] = [
        CurationState::Pending,
        CurationState::Accepted,
        CurationState::Rejected,
        CurationState::AutoRejected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CurationState::Pending => "pending",
            CurationState::Accepted => "accepted",
            CurationState::Rejected => "rejected",
            CurationState::AutoRejected => "auto_rejected",
        }
    }
}

impl std::fmt::Display for CurationState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CurationState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CurationState::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown curation state `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn target_state(self) -> CurationState {
        match self {
            Decision::Accept => CurationState::Accepted,
            Decision::Reject => CurationState::Rejected,
        }
    }
}

/// One texture image and its curation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureAsset {
    pub asset_id: String,
    pub category: String,
    /// Relative to the library root.
    pub image_path: String,
    pub content_hash: String,
    pub edge_density: f64,
    #[serde(default)]
    pub caption: Option<String>,
    pub curation_state: CurationState,
    #[serde(default)]
    pub decision_note: Option<String>,
    #[serde(default)]
    pub embedding_ref: Option<String>,
}

/// Edge-density cleaning configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanSettings {
    /// Densities strictly below this are rejected as too sparse.
    pub min_density: f64,
    /// Densities strictly above this are rejected as too dense.
    pub max_density: f64,
    /// Images larger than this (either side) are resampled to
    /// `eval_resolution × eval_resolution` before edge detection.
    pub eval_resolution: usize,
    pub canny: CannyParams,
}

impl Default for CleanSettings {
    fn default() -> Self {
        Self {
            min_density: 0.02,
            max_density: 0.70,
            eval_resolution: 512,
            canny: CannyParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanVerdict {
    Pass,
    RejectDense,
    RejectSparse,
}

/// Pass iff `min_density ≤ edge_density ≤ max_density`.
pub fn auto_clean(edge_density: f64, settings: &CleanSettings) -> CleanVerdict {
    if edge_density > settings.max_density {
        CleanVerdict::RejectDense
    } else if edge_density < settings.min_density {
        CleanVerdict::RejectSparse
    } else {
        CleanVerdict::Pass
    }
}

/// Fraction of pixels Canny marks as edges, measured at the evaluation resolution.
pub fn edge_density(gray: &GrayImage, settings: &CleanSettings) -> Result<f64> {
    let edges = canny(
        &evaluation_copy(gray, settings.eval_resolution),
        settings.canny.low,
        settings.canny.high,
    )?;
    area_fraction(&edges, AreaBase::WholeImage)
}

pub(crate) fn evaluation_copy(gray: &GrayImage, resolution: usize) -> GrayImage {
    if gray.width() <= resolution && gray.height() <= resolution {
        return gray.clone();
    }
    let buf = image::ImageBuffer::<image::Luma<f32>, Vec<f32>>::from_raw(
        gray.width() as u32,
        gray.height() as u32,
        gray.data().to_vec(),
    )
    .expect("buffer length matches dimensions");
    let small = image::imageops::resize(
        &buf,
        resolution as u32,
        resolution as u32,
        image::imageops::FilterType::Triangle,
    );
    GrayImage::from_fn(resolution, resolution, |x, y| small.get_pixel(x as u32, y as u32).0[0])
}

/// Persisted index of the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub schema_version: u32,
    pub taxonomy: Taxonomy,
    #[serde(default)]
    pub clean: CleanSettings,
    pub assets: Vec<TextureAsset>,
    #[serde(default)]
    pub backend_descriptors: Vec<BackendDescriptor>,
    /// Sequence number of the last decision folded into this snapshot.
    #[serde(default)]
    pub last_decision_seq: u64,
}

impl LibraryManifest {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            taxonomy,
            clean: CleanSettings::default(),
            assets: Vec::new(),
            backend_descriptors: Vec::new(),
            last_decision_seq: 0,
        }
    }

    pub fn asset(&self, asset_id: &str) -> Option<&TextureAsset> {
        self.assets.iter().find(|a| a.asset_id == asset_id)
    }

    pub(crate) fn asset_mut(&mut self, asset_id: &str) -> Option<&mut TextureAsset> {
        self.assets.iter_mut().find(|a| a.asset_id == asset_id)
    }

    pub fn count_in(&self, state: CurationState) -> usize {
        self.assets.iter().filter(|a| a.curation_state == state).count()
    }

    /// Records `descriptor`, replacing any earlier descriptor of the same kind.
    pub fn record_backend(&mut self, descriptor: BackendDescriptor) {
        self.backend_descriptors.retain(|d| d.kind != descriptor.kind);
        self.backend_descriptors.push(descriptor);
        self.backend_descriptors.sort_by_key(|d| d.kind);
    }

    /// Folds one logged event into the snapshot.
    pub fn apply(&mut self, event: &DecisionEvent) {
        match (&event.asset, self.asset_mut(&event.asset_id)) {
            (_, Some(asset)) => {
                asset.curation_state = event.to;
                if event.note.is_some() {
                    asset.decision_note = event.note.clone();
                }
            }
            (Some(snapshot), None) => {
                let mut asset = snapshot.clone();
                asset.curation_state = event.to;
                self.assets.push(asset);
            }
            (None, None) => {
                log::warn!("decision {} names unknown asset {}", event.seq, event.asset_id)
            }
        }
        self.last_decision_seq = self.last_decision_seq.max(event.seq);
    }
}
