use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use texsynth_core::backends::{BackendDescriptor, PromptTemplates};
use texsynth_core::descmatch::{
    generate_descriptions, match_all, AnomalyDescriptor, DescribeOptions, MatchResult, MatchingPool,
};
use texsynth_core::imageops::{load_image, save_image, save_mask, Image};
use texsynth_core::maskgen;
use texsynth_core::metrics::{
    dataset_il, export_projection, inception_score, intra_cluster_distance, CategoryMetrics,
    MetricReport, ProbRow, Projection,
};
use texsynth_core::synthpipe::{synthesize, NoiseSchedule, SynthesisConfig, SynthesisRequest};
use texsynth_core::texlib::{CurationState, Library};
use texsynth_core::Error as CoreError;

use crate::config::{Backends, RunConfig};
use crate::error::{CliError, CliResult};

pub const RUN_MANIFEST: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.json";
const TRANSCRIPT: &str = "transcript.txt";

/// Lowercase ASCII slug used for directory names.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_matches('-').to_string();
    if out.is_empty() {
        "unnamed".into()
    } else {
        out
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> CliResult<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn templates(cfg: &RunConfig) -> CliResult<PromptTemplates> {
    Ok(match &cfg.paths.templates {
        Some(dir) => PromptTemplates::with_dir(dir)?,
        None => PromptTemplates::default(),
    })
}

/// Image for `object`: the explicit path if given, else the configured one.
pub fn object_image_path(cfg: &RunConfig, object: &str, explicit: Option<&Path>) -> CliResult<PathBuf> {
    match explicit {
        Some(p) => Ok(p.to_path_buf()),
        None => cfg
            .objects
            .get(object)
            .map(|o| o.image.clone())
            .ok_or_else(|| {
                CliError::Config(format!("no image for object `{object}`; pass --image or add it to the config"))
            }),
    }
}

/// Asks the VLLM for descriptions. When `transcript` is set the file is
/// rewritten and each descriptor points into it by file name.
pub fn describe(
    cfg: &RunConfig,
    backends: &Backends,
    object: &str,
    image: &Image,
    transcript: Option<&Path>,
) -> CliResult<Vec<AnomalyDescriptor>> {
    if let Some(t) = transcript {
        if t.exists() {
            std::fs::remove_file(t)?;
        }
    }
    let opts = DescribeOptions {
        template_id: cfg.describe.template_id.clone(),
        repeats: cfg.describe.repeats,
        transcript: transcript.map(Path::to_path_buf),
    };
    let mut out = generate_descriptions(backends.vllm.as_ref(), &templates(cfg)?, object, image, &opts)?;
    if let Some(name) = transcript.and_then(|t| t.file_name()).and_then(|n| n.to_str()) {
        for d in &mut out {
            if let Some(r) = d.raw_answer_ref.as_mut() {
                let idx = r.rsplit('#').next().unwrap_or("").to_string();
                *r = format!("{name}#{idx}");
            }
        }
    }
    Ok(out)
}

pub fn open_pool(cfg: &RunConfig, backends: &Backends) -> CliResult<(Library, MatchingPool)> {
    let lib = Library::open(&cfg.paths.library)?;
    let cache = lib.embedding_cache()?;
    let pool = MatchingPool::from_library(
        lib.manifest(),
        &cache,
        &backends.image_embedder.descriptor().name,
        cfg.describe.category.as_deref(),
    )?;
    Ok((lib, pool))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFailureRecord {
    pub description: String,
    pub error: String,
}

pub fn match_descriptors(
    cfg: &RunConfig,
    backends: &Backends,
    pool: &MatchingPool,
    descriptors: &[AnomalyDescriptor],
) -> (Vec<MatchResult>, Vec<MatchFailureRecord>) {
    let outcome = match_all(
        descriptors,
        pool,
        backends.text_embedder.as_ref(),
        cfg.describe.runner_ups,
    );
    let failures = outcome
        .failures
        .into_iter()
        .map(|f| {
            log::warn!("could not match `{}`: {}", f.descriptor.description, f.error);
            MatchFailureRecord {
                description: f.descriptor.description,
                error: f.error.to_string(),
            }
        })
        .collect();
    (outcome.results, failures)
}

/// Everything needed to regenerate a run besides the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub object: String,
    pub image: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub t_star: usize,
    pub steps: usize,
}

impl SynthParams {
    /// Fills unset flags from the config.
    pub fn resolve(
        cfg: &RunConfig,
        object: &str,
        image: Option<&Path>,
        count: Option<usize>,
        seed: Option<u64>,
        t_star: Option<usize>,
        steps: Option<usize>,
    ) -> CliResult<Self> {
        Ok(Self {
            object: object.to_string(),
            image: object_image_path(cfg, object, image)?,
            count: count.unwrap_or_else(|| cfg.count_for(object)),
            seed: seed.unwrap_or(cfg.seed),
            t_star: t_star.unwrap_or(cfg.synthesis.t_star),
            steps: steps.unwrap_or(cfg.synthesis.schedule.steps()),
        })
    }

    /// The synthesis config with these overrides applied. A changed step
    /// count rebuilds the cosine schedule with the same final ᾱ.
    pub fn synthesis_config(&self, base: &SynthesisConfig) -> CliResult<SynthesisConfig> {
        let mut out = base.clone();
        if self.steps != base.schedule.steps() {
            let last = base.schedule.alphabar(base.schedule.steps())?;
            out.schedule = NoiseSchedule::cosine(self.steps, last)?;
        }
        out.t_star = self.t_star;
        out.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySnapshot {
    pub last_decision_seq: u64,
    pub accepted_assets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub index: usize,
    pub seed: u64,
    pub description: String,
    pub asset_id: String,
    /// Paths relative to the run directory.
    pub image: String,
    pub mask: String,
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub index: usize,
    pub seed: u64,
    pub description: String,
    pub asset_id: String,
    pub error: String,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub params: SynthParams,
    pub config: RunConfig,
    pub backends: Vec<BackendDescriptor>,
    pub library: LibrarySnapshot,
    pub descriptors: Vec<AnomalyDescriptor>,
    pub matches: Vec<MatchResult>,
    pub match_failures: Vec<MatchFailureRecord>,
    pub records: Vec<RecordEntry>,
    pub failures: Vec<TaskFailure>,
}

/// Default run directory for `params`.
pub fn default_run_dir(cfg: &RunConfig, params: &SynthParams) -> PathBuf {
    cfg.paths
        .runs
        .join(format!("{}-seed{}-tstar{}", slug(&params.object), params.seed, params.t_star))
}

/// Runs the full pipeline for one object into `out`.
///
/// Task `i` uses match `i mod n`, seed `seed ^ i`, and is written as
/// `<object>/<description>/<i div n>` so file names do not depend on
/// scheduling order.
pub fn synth(cfg: &RunConfig, params: &SynthParams, out: &Path) -> CliResult<RunManifest> {
    let syn_cfg = params.synthesis_config(&cfg.synthesis)?;
    let backends = crate::config::Backends::build(&cfg.backends, syn_cfg.schedule.steps());
    let normal = load_image(&params.image)?;
    std::fs::create_dir_all(out)?;

    let descriptors = describe(cfg, &backends, &params.object, &normal, Some(&out.join(TRANSCRIPT)))?;
    let (lib, pool) = open_pool(cfg, &backends)?;
    let (matches, match_failures) = match_descriptors(cfg, &backends, &pool, &descriptors);
    if matches.is_empty() {
        return Err(CliError::Core(CoreError::NoCandidates));
    }
    let mut textures = BTreeMap::new();
    for m in &matches {
        if !textures.contains_key(&m.asset_id) {
            textures.insert(m.asset_id.clone(), lib.load_asset_image(&m.asset_id)?);
        }
    }
    let snapshot = LibrarySnapshot {
        last_decision_seq: lib.manifest().last_decision_seq,
        accepted_assets: lib.manifest().count_in(CurationState::Accepted),
    };

    let n = matches.len();
    let object_dir = slug(&params.object);
    let run_task = |index: usize| -> Result<Result<RecordEntry, TaskFailure>, CliError> {
        let m = &matches[index % n];
        let seed = params.seed ^ index as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let failure = |e: &CoreError| TaskFailure {
            index,
            seed,
            description: m.descriptor.description.clone(),
            asset_id: m.asset_id.clone(),
            error: e.to_string(),
        };
        let bundle = match maskgen::generate(
            &normal,
            &textures[&m.asset_id],
            backends.segmenter.as_ref(),
            backends.codec.downscale(),
            &cfg.maskgen,
            &mut rng,
        ) {
            Ok(b) => b,
            Err(e) if matches!(e.root(), CoreError::GenerationFailed { .. }) => {
                log::warn!("task {index}: {e}");
                return Ok(Err(failure(&e)));
            }
            Err(e) => return Err(e.at_stage("mask generation").into()),
        };
        let req = SynthesisRequest {
            object_name: &params.object,
            description: &m.descriptor.description,
            asset_id: &m.asset_id,
            normal_image: &normal,
            bundle: &bundle,
            seed,
        };
        let rec = synthesize(backends.codec.as_ref(), backends.denoiser.as_ref(), &req, &syn_cfg)?;
        let rel_dir = format!("{object_dir}/{}", slug(&m.descriptor.description));
        std::fs::create_dir_all(out.join(&rel_dir))?;
        let stem = format!("{rel_dir}/{:04}", index / n);
        let entry = RecordEntry {
            index,
            seed,
            description: m.descriptor.description.clone(),
            asset_id: m.asset_id.clone(),
            image: format!("{stem}.png"),
            mask: format!("{stem}_mask.png"),
            meta: format!("{stem}.json"),
        };
        save_image(&rec.x_result, out.join(&entry.image))?;
        save_mask(&rec.m_result, out.join(&entry.mask))?;
        write_json(&out.join(&entry.meta), &rec.meta)?;
        Ok(Ok(entry))
    };

    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let results: Vec<_> = pool_threads.install(|| (0..params.count).into_par_iter().map(run_task).collect());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r? {
            Ok(e) => records.push(e),
            Err(f) => failures.push(f),
        }
    }
    let manifest = RunManifest {
        params: params.clone(),
        config: cfg.clone(),
        backends: backends.descriptors(),
        library: snapshot,
        descriptors,
        matches,
        match_failures,
        records,
        failures,
    };
    write_json(&out.join(RUN_MANIFEST), &manifest)?;
    if !manifest.failures.is_empty() {
        return Err(CliError::Generation {
            failed: manifest.failures.len(),
            total: params.count,
        });
    }
    Ok(manifest)
}

/// Re-executes a run from its `run.json` into `out`.
pub fn rerun(run_json: &Path, out: &Path) -> CliResult<RunManifest> {
    let m: RunManifest = read_json(run_json)?;
    synth(&m.config, &m.params, out)
}

pub fn load_run(run_dir: &Path) -> CliResult<RunManifest> {
    read_json(&run_dir.join(RUN_MANIFEST))
}

/// IS per object over all its images; IL per object is the mean over
/// (object, description) clusters with at least two images.
pub fn evaluate(run_dir: &Path) -> CliResult<MetricReport> {
    let run = load_run(run_dir)?;
    let backends = Backends::build(&run.config.backends, run.params.steps);
    let mut by_object: BTreeMap<&str, Vec<&RecordEntry>> = BTreeMap::new();
    for r in &run.records {
        by_object.entry(run.params.object.as_str()).or_default().push(r);
    }
    let mut categories = Vec::new();
    for (object, recs) in by_object {
        let images = recs
            .iter()
            .map(|r| load_image(run_dir.join(&r.image)))
            .collect::<Result<Vec<_>, _>>()?;
        let feats = backends.features.extract(&images)?;
        let rows = feats
            .iter()
            .map(|f| ProbRow::new(f.probabilities.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut clusters: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
        for (r, f) in recs.iter().zip(&feats) {
            clusters.entry(&r.description).or_default().push(f.perceptual.clone());
        }
        let ils: Vec<f64> = clusters
            .values()
            .filter(|c| c.len() >= 2)
            .map(|c| intra_cluster_distance(c))
            .collect::<Result<_, _>>()?;
        categories.push(CategoryMetrics {
            object_name: object.to_string(),
            images: images.len(),
            is: inception_score(&rows)?,
            il: dataset_il(&ils).ok(),
        });
    }
    if categories.is_empty() {
        return Err(CliError::Other(format!("{} has no records to evaluate", run_dir.display())));
    }
    let report = MetricReport::from_categories(categories)?;
    write_json(&run_dir.join(METRICS_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t_star: usize,
    pub images: usize,
    pub is: f64,
    pub il: Option<f64>,
}

/// One synth + eval per T* value, each in `out/tstar-<v>`.
pub fn sweep_t_star(cfg: &RunConfig, base: &SynthParams, values: &[usize], out: &Path) -> CliResult<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &v in values {
        let params = SynthParams {
            t_star: v,
            ..base.clone()
        };
        let dir = out.join(format!("tstar-{v}"));
        synth(cfg, &params, &dir)?;
        let report = evaluate(&dir)?;
        rows.push(SweepRow {
            t_star: v,
            images: report.categories.iter().map(|c| c.images).sum(),
            is: report.mean_is,
            il: report.mean_il,
        });
    }
    write_json(&out.join("sweep.json"), &rows)?;
    std::fs::write(out.join("sweep.md"), sweep_table(&rows))?;
    Ok(rows)
}

/// Markdown table, one row per T* value, cells formatted `IS / IL`.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("| Choice | IS/IL |\n|---|---|\n");
    for r in rows {
        let il = r.il.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        out.push_str(&format!("| T*={} | {:.2} / {il} |\n", r.t_star, r.is));
    }
    out
}

/// Projects perceptual features of every run's images to 2-D, one group per
/// object (prefixed by the run directory name when several runs are given).
pub fn visualize(runs: &[PathBuf], reduce_to: Option<usize>, seed: u64, out: &Path) -> CliResult<Projection> {
    if runs.is_empty() {
        return Err(CliError::Config("viz needs at least one run".into()));
    }
    let mut groups: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let mut backends = None;
    for dir in runs {
        let run = load_run(dir)?;
        let b = backends.get_or_insert_with(|| Backends::build(&run.config.backends, run.params.steps));
        let images = run
            .records
            .iter()
            .map(|r| load_image(dir.join(&r.image)))
            .collect::<Result<Vec<_>, _>>()?;
        if images.is_empty() {
            continue;
        }
        let feats = b.features.extract(&images)?;
        let label = if runs.len() > 1 {
            let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run");
            format!("{name}/{}", run.params.object)
        } else {
            run.params.object.clone()
        };
        groups.push((label, feats.into_iter().map(|f| f.perceptual).collect()));
    }
    let b = backends.expect("at least one run was loaded");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = export_projection(&groups, b.projector.as_ref(), reduce_to, &mut rng)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("projection.csv"), proj.to_csv())?;
    write_json(&out.join("ellipses.json"), &proj.ellipses)?;
    Ok(proj)
}
