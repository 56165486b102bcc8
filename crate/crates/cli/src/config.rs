use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use texsynth_core::backends::mock::{
    HashEmbedder, MockCaptioner, MockCodec, MockFeatureExtractor, MockProjector, MockVllm,
    OracleNoise, ThresholdSegmenter, ZeroNoise,
};
use texsynth_core::backends::{
    BackendDescriptor, Captioner, ChatVllm, FeatureExtractor, HttpDiffusion,
    ImageEmbedder, LatentCodec, NoisePredictor, Projector, Segmenter, TextEmbedder, Vllm,
    DEFAULT_TEMPLATE_ID,
};
use texsynth_core::maskgen::MaskGenConfig;
use texsynth_core::synthpipe::SynthesisConfig;

use crate::error::CliError;

pub const DEFAULT_COUNT: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Size of the synthesis worker pool.
    pub workers: usize,
    pub backends: BackendsConfig,
    pub synthesis: SynthesisConfig,
    pub maskgen: MaskGenConfig,
    pub describe: DescribeConfig,
    /// Images to generate per object when `--count` is not given.
    pub default_count: usize,
    pub objects: BTreeMap<String, ObjectConfig>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 4,
            backends: BackendsConfig::default(),
            synthesis: SynthesisConfig::default(),
            maskgen: MaskGenConfig::default(),
            describe: DescribeConfig::default(),
            default_count: DEFAULT_COUNT,
            objects: BTreeMap::new(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub image: PathBuf,
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescribeConfig {
    pub template_id: String,
    pub repeats: usize,
    pub runner_ups: usize,
    /// Restrict matching to one texture category.
    pub category: Option<String>,
}

impl Default for DescribeConfig {
    fn default() -> Self {
        Self {
            template_id: DEFAULT_TEMPLATE_ID.to_string(),
            repeats: 1,
            runner_ups: texsynth_core::descmatch::DEFAULT_RUNNER_UPS,
            category: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub library: PathBuf,
    pub runs: PathBuf,
    /// Extra question templates (`*.txt`, keyed by file stem).
    pub templates: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            library: "texlib".into(),
            runs: "runs".into(),
            templates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VllmConfig {
    Mock {
        #[serde(default)]
        seed: u64,
        /// Extra fixed answers keyed by object name.
        #[serde(default)]
        answers: BTreeMap<String, String>,
    },
    Chat(ChatVllm),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderConfig {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_dim() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SegmenterConfig {
    Threshold {
        #[serde(default = "default_threshold")]
        threshold: f32,
    },
}

fn default_threshold() -> f32 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InpainterConfig {
    /// Block codec with a noise predictor that returns the initial noise.
    MockOracle,
    /// Block codec with a predictor that always answers zero.
    MockZero,
    Http(HttpDiffusion),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CaptionerConfig {
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeaturesConfig {
    Mock {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
}

fn default_classes() -> usize {
    10
}

fn default_temperature() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProjectorConfig {
    Mock {
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    pub vllm: VllmConfig,
    pub embedder: EmbedderConfig,
    pub segmenter: SegmenterConfig,
    pub inpainter: InpainterConfig,
    pub captioner: CaptionerConfig,
    pub features: FeaturesConfig,
    pub projector: ProjectorConfig,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            vllm: VllmConfig::Mock {
                seed: 0,
                answers: BTreeMap::new(),
            },
            embedder: EmbedderConfig::Hash {
                dim: default_dim(),
                seed: 0,
            },
            segmenter: SegmenterConfig::Threshold {
                threshold: default_threshold(),
            },
            inpainter: InpainterConfig::MockOracle,
            captioner: CaptionerConfig::Mock,
            features: FeaturesConfig::Mock {
                classes: default_classes(),
                seed: 0,
                temperature: default_temperature(),
            },
            projector: ProjectorConfig::Mock { seed: 0 },
        }
    }
}

/// Live backend instances built from a [`BackendsConfig`].
pub struct Backends {
    pub vllm: Box<dyn Vllm>,
    pub text_embedder: Box<dyn TextEmbedder>,
    pub image_embedder: Box<dyn ImageEmbedder>,
    pub segmenter: Box<dyn Segmenter>,
    pub codec: Arc<dyn LatentCodec>,
    pub denoiser: Arc<dyn NoisePredictor>,
    pub captioner: Box<dyn Captioner>,
    pub features: Box<dyn FeatureExtractor>,
    pub projector: Box<dyn Projector>,
    text_descriptor: BackendDescriptor,
}

impl Backends {
    pub fn build(cfg: &BackendsConfig, max_t: usize) -> Self {
        let vllm: Box<dyn Vllm> = match &cfg.vllm {
            VllmConfig::Mock { seed, answers } => {
                let mut m = MockVllm {
                    seed: *seed,
                    ..MockVllm::default()
                };
                m.answers.extend(answers.clone());
                Box::new(m)
            }
            VllmConfig::Chat(c) => Box::new(c.clone()),
        };
        let EmbedderConfig::Hash { dim, seed } = cfg.embedder;
        let embedder = HashEmbedder::new(dim, seed);
        let SegmenterConfig::Threshold { threshold } = cfg.segmenter;
        let (codec, denoiser): (Arc<dyn LatentCodec>, Arc<dyn NoisePredictor>) = match &cfg.inpainter {
            InpainterConfig::MockOracle => (Arc::new(MockCodec), Arc::new(OracleNoise::new(max_t))),
            InpainterConfig::MockZero => (
                Arc::new(MockCodec),
                Arc::new(ZeroNoise { max_t }),
            ),
            InpainterConfig::Http(h) => (Arc::new(h.clone()), Arc::new(h.clone())),
        };
        let FeaturesConfig::Mock {
            classes,
            seed: fseed,
            temperature,
        } = cfg.features;
        let ProjectorConfig::Mock { seed: pseed } = cfg.projector;
        Self {
            vllm,
            text_descriptor: embedder.text_descriptor(),
            text_embedder: Box::new(embedder.clone()),
            image_embedder: Box::new(embedder),
            segmenter: Box::new(ThresholdSegmenter { threshold }),
            codec,
            denoiser,
            captioner: Box::new(MockCaptioner),
            features: Box::new(MockFeatureExtractor {
                classes,
                seed: fseed,
                temperature,
            }),
            projector: Box::new(MockProjector { seed: pseed }),
        }
    }

    /// One descriptor per backend role, in a fixed order.
    pub fn descriptors(&self) -> Vec<BackendDescriptor> {
        let mut out = vec![
            self.vllm.descriptor(),
            self.text_descriptor.clone(),
            self.image_embedder.descriptor(),
            self.segmenter.descriptor(),
            self.denoiser.descriptor(),
            self.captioner.descriptor(),
            self.features.descriptor(),
            self.projector.descriptor(),
        ];
        out.sort_by_key(|d| d.kind);
        out
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let abs = std::path::absolute(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(abs.parent().unwrap_or(Path::new("/")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.library);
        fix(&mut self.paths.runs);
        if let Some(t) = self.paths.templates.as_mut() {
            fix(t);
        }
        for o in self.objects.values_mut() {
            fix(&mut o.image);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: texsynth_core::Error| CliError::Config(e.to_string());
        self.synthesis.validate().map_err(bad)?;
        self.maskgen.validate().map_err(bad)?;
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.describe.repeats == 0 {
            return Err(CliError::Config("describe.repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn backends(&self) -> Backends {
        Backends::build(&self.backends, self.synthesis.schedule.steps())
    }

    pub fn count_for(&self, object: &str) -> usize {
        self.objects
            .get(object)
            .and_then(|o| o.count)
            .unwrap_or(self.default_count)
    }
}
