//! Anomaly descriptions from a vision-language model, matched to textures by
//! cosine similarity of text and image embeddings.

use std::cmp::Ordering;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backends::{vllm_query, EmbeddingVector, PromptTemplates, TextEmbedder, Vllm};
use crate::imageops::Image;
use crate::texlib::{cache_key, CurationState, EmbeddingCache, LibraryManifest};
use crate::{Error, Result};

pub const DEFAULT_RUNNER_UPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorSource {
    Vllm,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyDescriptor {
    pub object_name: String,
    pub description: String,
    pub source: DescriptorSource,
    /// `<transcript file>#<exchange index>` for descriptions from the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_answer_ref: Option<String>,
}

impl AnomalyDescriptor {
    /// A hand-written description, normalised the same way model answers are.
    pub fn manual(object_name: &str, description: &str) -> Result<Self> {
        let description = normalize(description);
        if description.is_empty() {
            return Err(Error::invalid("description is empty"));
        }
        Ok(Self {
            object_name: object_name.to_string(),
            description,
            source: DescriptorSource::Manual,
            raw_answer_ref: None,
        })
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub asset_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub descriptor: AnomalyDescriptor,
    pub asset_id: String,
    pub similarity: f64,
    pub runner_ups: Vec<Candidate>,
}

/// Immutable snapshot of the embeddings that matching searches.
#[derive(Debug, Clone, Default)]
pub struct MatchingPool {
    entries: Vec<(String, EmbeddingVector)>,
}

impl MatchingPool {
    pub fn new(mut entries: Vec<(String, EmbeddingVector)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Self { entries }
    }

    /// Accepted assets with a cached embedding from `backend_name`,
    /// optionally restricted to one category.
    pub fn from_library(
        manifest: &LibraryManifest,
        cache: &EmbeddingCache,
        backend_name: &str,
        category: Option<&str>,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for a in &manifest.assets {
            if a.curation_state != CurationState::Accepted
                || category.is_some_and(|c| c != a.category)
            {
                continue;
            }
            match cache.get(&cache_key(&a.content_hash, backend_name)) {
                Some(v) => entries.push((a.asset_id.clone(), v.clone())),
                None => {
                    return Err(Error::invalid(format!(
                        "asset {} has no `{backend_name}` embedding; build the cache first",
                        a.asset_id
                    )))
                }
            }
        }
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, EmbeddingVector)] {
        &self.entries
    }

    /// Ranks the whole pool against `query`: similarity descending, then
    /// asset id ascending.
    pub fn rank(&self, query: &EmbeddingVector) -> Result<Vec<Candidate>> {
        if self.entries.is_empty() {
            return Err(Error::NoCandidates);
        }
        let mut ranked = self
            .entries
            .iter()
            .map(|(id, e)| {
                Ok(Candidate {
                    asset_id: id.clone(),
                    similarity: query.cosine(e)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ranked.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.asset_id.cmp(&b.asset_id))
        });
        Ok(ranked)
    }
}

/// Best match for an already embedded description.
pub fn match_embedding(
    descriptor: &AnomalyDescriptor,
    query: &EmbeddingVector,
    pool: &MatchingPool,
    runner_ups: usize,
) -> Result<MatchResult> {
    let mut ranked = pool.rank(query)?.into_iter();
    let best = ranked.next().expect("rank returns a nonempty list");
    Ok(MatchResult {
        descriptor: descriptor.clone(),
        asset_id: best.asset_id,
        similarity: best.similarity,
        runner_ups: ranked.take(runner_ups).collect(),
    })
}

/// Embeds the bare description and matches it against `pool`.
pub fn match_descriptor(
    descriptor: &AnomalyDescriptor,
    pool: &MatchingPool,
    embedder: &dyn TextEmbedder,
    runner_ups: usize,
) -> Result<MatchResult> {
    if pool.is_empty() {
        return Err(Error::NoCandidates);
    }
    let query = embedder.embed_text(&descriptor.description)?;
    match_embedding(descriptor, &query, pool, runner_ups)
}

#[derive(Debug)]
pub struct MatchFailure {
    pub index: usize,
    pub descriptor: AnomalyDescriptor,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct MatchOutcome {
    pub results: Vec<MatchResult>,
    pub failures: Vec<MatchFailure>,
}

/// Matches every descriptor in order; a failure is recorded and the
/// remaining descriptors are still matched.
pub fn match_all(
    descriptors: &[AnomalyDescriptor],
    pool: &MatchingPool,
    embedder: &dyn TextEmbedder,
    runner_ups: usize,
) -> MatchOutcome {
    let mut out = MatchOutcome::default();
    for (index, d) in descriptors.iter().enumerate() {
        match match_descriptor(d, pool, embedder, runner_ups) {
            Ok(r) => out.results.push(r),
            Err(error) => out.failures.push(MatchFailure {
                index,
                descriptor: d.clone(),
                error,
            }),
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct DescribeOptions {
    pub template_id: String,
    /// Ask this many times and take the union of the answers.
    pub repeats: usize,
    /// Append every exchange to this file.
    pub transcript: Option<PathBuf>,
}

impl Default for DescribeOptions {
    fn default() -> Self {
        Self {
            template_id: crate::backends::DEFAULT_TEMPLATE_ID.to_string(),
            repeats: 1,
            transcript: None,
        }
    }
}

fn append_transcript(path: &PathBuf, text: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn transcript_entry(index: usize, object: &str, question: &str, raw: &str) -> String {
    format!("=== exchange {index} object={object}\n--- question\n{question}\n--- answer\n{raw}\n\n")
}

/// Asks the model for anomaly descriptions of `object_name`.
pub fn generate_descriptions(
    vllm: &dyn Vllm,
    templates: &PromptTemplates,
    object_name: &str,
    normal_image: &Image,
    options: &DescribeOptions,
) -> Result<Vec<AnomalyDescriptor>> {
    if options.repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let mut out: Vec<AnomalyDescriptor> = Vec::new();
    for i in 0..options.repeats {
        let answer = match vllm_query(vllm, templates, object_name, normal_image, &options.template_id)
        {
            Ok(a) => a,
            Err(e) => {
                if let (Some(path), Error::Parse { raw }) = (&options.transcript, &e) {
                    let q = templates.render(&options.template_id, object_name)?;
                    append_transcript(path, &transcript_entry(i, object_name, &q, raw))?;
                }
                return Err(e.at_stage("describe"));
            }
        };
        let raw_ref = match &options.transcript {
            Some(path) => {
                append_transcript(
                    path,
                    &transcript_entry(i, object_name, &answer.question, &answer.raw),
                )?;
                Some(format!("{}#{i}", path.display()))
            }
            None => None,
        };
        for d in answer.descriptions {
            if !out.iter().any(|o| o.description == d) {
                out.push(AnomalyDescriptor {
                    object_name: object_name.to_string(),
                    description: d,
                    source: DescriptorSource::Vllm,
                    raw_answer_ref: raw_ref.clone(),
                });
            }
        }
    }
    Ok(out)
}
