//! End-to-end forging: corpora → windows → trend descriptions → augmented
//! instruction samples on disk.
//!
//! Sample `i` of a run has id `{i:06}`; its augmented copies are
//! `{i:06}-a1` … `{i:06}-a9`. Every random choice is keyed by the batch seed
//! and the window index, so output is identical however work is scheduled.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::augmentation::{make_augmented_set, AugmentError, AugmentationSpec, AUGMENTATIONS_PER_WINDOW};
use crate::decomposition::{decompose, DecompositionConfig, DecompositionError};
use crate::description::{
    describe_llm, describe_rules, rephrase_llm, rephrase_rules, DescriptionError, LlmClient, PromptTemplate,
    TrendDescription, RULES_MODEL_ID,
};
use crate::emitter::{
    emit_dataset, format_instruction, image_rel_path, render_plot, write_image, DatasetManifest, EmitConfig,
    EmitError, InstructionSample, Provenance,
};
use crate::ingest::{train_split, Corpus, IngestError};
use crate::rng::derive_seed;
use crate::trend_summary::{summarize, SummaryError, TrendSummary};
use crate::windowing::{sample_batch, SampleManifest, TauRange, Window, WindowError};

/// Sub-stream of a window's seed that drives its augmentations.
const AUGMENT_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("{sample_id}: decomposition failed: {source}")]
    Decomposition {
        sample_id: String,
        source: DecompositionError,
    },
    #[error("{sample_id}: summary failed: {source}")]
    Summary { sample_id: String, source: SummaryError },
    #[error("{sample_id}: description failed: {source}")]
    Description {
        sample_id: String,
        source: DescriptionError,
    },
    #[error("{sample_id}: augmentation failed: {source}")]
    Augment { sample_id: String, source: AugmentError },
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Source of trend descriptions and paraphrases.
pub enum Describer<'a> {
    Rules,
    Llm(&'a LlmClient),
}

impl Describer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Describer::Rules => "rules",
            Describer::Llm(_) => "llm",
        }
    }

    fn describe(&self, summary: &TrendSummary, template: &PromptTemplate) -> Result<TrendDescription, DescriptionError> {
        match self {
            Describer::Rules => describe_rules(summary),
            Describer::Llm(client) => describe_llm(client, summary, template),
        }
    }

    fn rephrase(&self, description: &TrendDescription, variant: usize) -> Result<TrendDescription, DescriptionError> {
        match self {
            Describer::Rules => Ok(rephrase_rules(description, variant)),
            Describer::Llm(client) => rephrase_llm(client, description, variant),
        }
    }

    fn template_version(&self, template: &PromptTemplate) -> String {
        match self {
            Describer::Rules => RULES_MODEL_ID.to_string(),
            Describer::Llm(_) => template.version.clone(),
        }
    }

    fn threads(&self) -> usize {
        match self {
            Describer::Rules => rayon::current_num_threads(),
            // blocking HTTP calls: one worker per permitted in-flight request
            Describer::Llm(client) => client.config().max_in_flight.max(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForgeConfig {
    pub n: usize,
    pub seed: u64,
    pub tau: TauRange,
    pub train_ratio: f64,
    pub template: PromptTemplate,
    pub emit: EmitConfig,
    pub decomposition: DecompositionConfig,
    pub augmentations: usize,
    pub images: bool,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            n: 1,
            seed: 0,
            tau: TauRange::default(),
            train_ratio: 0.7,
            template: PromptTemplate::default(),
            emit: EmitConfig::default(),
            decomposition: DecompositionConfig::default(),
            augmentations: AUGMENTATIONS_PER_WINDOW,
            images: true,
        }
    }
}

/// A sample together with the window values its image is drawn from.
#[derive(Debug, Clone)]
pub struct ForgedSample {
    pub sample: InstructionSample,
    pub values: Vec<f64>,
}

pub fn original_id(index: usize) -> String {
    format!("{index:06}")
}

pub fn augmented_id(original: &str, j: usize) -> String {
    format!("{original}-a{j}")
}

/// Training prefixes of every corpus.
pub fn training_corpora(corpora: &[Corpus], ratio: f64) -> Result<Vec<Corpus>, ForgeError> {
    corpora
        .iter()
        .map(|c| Ok(train_split(c, ratio)?.train))
        .collect()
}

fn sample_for(
    id: String,
    original: Option<&str>,
    window: &Window,
    augmentation: AugmentationSpec,
    description: &TrendDescription,
    summary: Option<&TrendSummary>,
    template_version: &str,
    config: &ForgeConfig,
) -> Result<ForgedSample, ForgeError> {
    let question = config.emit.question_for(&id).to_string();
    let formatted = format_instruction(&config.emit.window_token(&window.values), &question, &description.text)?;
    let sample = InstructionSample {
        image_path: config.images.then(|| image_rel_path(&id)),
        original_id: original.map(str::to_string),
        split: window.split,
        question,
        answer: description.text.clone(),
        formatted,
        provenance: Provenance::of(window),
        augmentation,
        generator: description.generator,
        model_id: description.model_id.clone(),
        template_version: template_version.to_string(),
        summary: summary.map(|s| s.values.clone()),
        sample_id: id,
    };
    Ok(ForgedSample {
        sample,
        values: window.values.clone(),
    })
}

/// The original sample for window `index` followed by its augmented copies.
pub fn forge_window(
    index: usize,
    window: &Window,
    describer: &Describer<'_>,
    config: &ForgeConfig,
) -> Result<Vec<ForgedSample>, ForgeError> {
    let id = original_id(index);
    let decomposition = decompose(window, &config.decomposition).map_err(|source| ForgeError::Decomposition {
        sample_id: id.clone(),
        source,
    })?;
    let summary = summarize(id.clone(), &decomposition.trend).map_err(|source| ForgeError::Summary {
        sample_id: id.clone(),
        source,
    })?;
    let describe_err = |sample_id: &str| {
        let sample_id = sample_id.to_string();
        move |source| ForgeError::Description { sample_id, source }
    };
    let description = describer
        .describe(&summary, &config.template)
        .map_err(describe_err(&id))?;
    let version = describer.template_version(&config.template);

    let mut out = Vec::with_capacity(config.augmentations + 1);
    out.push(sample_for(
        id.clone(),
        None,
        window,
        AugmentationSpec::original(),
        &description,
        Some(&summary),
        &version,
        config,
    )?);
    let augmented = make_augmented_set(window, config.augmentations, derive_seed(window.seed, AUGMENT_STREAM))
        .map_err(|source| ForgeError::Augment {
            sample_id: id.clone(),
            source,
        })?;
    for (j, (aug_window, spec)) in augmented.into_iter().enumerate() {
        let aug_id = augmented_id(&id, j + 1);
        let text = describer.rephrase(&description, j).map_err(describe_err(&aug_id))?;
        out.push(sample_for(aug_id, Some(&id), &aug_window, spec, &text, None, &version, config)?);
    }
    Ok(out)
}

/// Samples `config.n` windows from the training prefixes of `corpora` and
/// forges them. The result is ordered by sample id.
pub fn forge_samples(
    corpora: &[Corpus],
    describer: &Describer<'_>,
    config: &ForgeConfig,
) -> Result<Vec<ForgedSample>, ForgeError> {
    let train = training_corpora(corpora, config.train_ratio)?;
    let batch = sample_batch(&train, config.n, config.seed, config.tau)?;
    let work = || -> Result<Vec<Vec<ForgedSample>>, ForgeError> {
        batch
            .windows
            .par_iter()
            .enumerate()
            .map(|(i, w)| forge_window(i, w, describer, config))
            .collect()
    };
    let nested = if describer.threads() == rayon::current_num_threads() {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(describer.threads())
            .build()
            .map_err(|e| std::io::Error::other(e.to_string()))?
            .install(work)?
    };
    Ok(nested.into_iter().flatten().collect())
}

/// Run parameters recorded in the manifest. Only inputs go here so that
/// repeated runs produce identical manifests.
pub fn run_parameters(corpora: &[Corpus], describer: &Describer<'_>, config: &ForgeConfig) -> BTreeMap<String, Value> {
    let mut p = BTreeMap::new();
    p.insert("n".into(), json!(config.n));
    p.insert("seed".into(), json!(config.seed));
    p.insert("tau_min".into(), json!(config.tau.min));
    p.insert("tau_max".into(), json!(config.tau.max));
    p.insert("train_ratio".into(), json!(config.train_ratio));
    p.insert("describer".into(), json!(describer.name()));
    p.insert("augmentations_per_original".into(), json!(config.augmentations));
    p.insert("question_pool".into(), json!(config.emit.question_pool));
    p.insert("inline_window".into(), json!(config.emit.inline_window));
    p.insert(
        "corpora".into(),
        json!(corpora.iter().map(|c| c.name.as_str()).collect::<Vec<_>>()),
    );
    match describer {
        Describer::Rules => {
            p.insert("model".into(), json!(RULES_MODEL_ID));
        }
        Describer::Llm(client) => {
            p.insert("model".into(), json!(client.config().model));
            p.insert("template_version".into(), json!(config.template.version));
        }
    }
    p
}

/// Renders images (when enabled) and writes `samples.jsonl` plus
/// `manifest.json` into `out_dir`.
pub fn write_output(
    samples: &[ForgedSample],
    out_dir: &Path,
    parameters: BTreeMap<String, Value>,
) -> Result<DatasetManifest, ForgeError> {
    samples
        .par_iter()
        .filter(|s| s.sample.image_path.is_some())
        .try_for_each(|s| {
            let png = render_plot(&s.values)?;
            write_image(out_dir, &s.sample.sample_id, &png)
        })?;
    let plain: Vec<InstructionSample> = samples.iter().map(|s| s.sample.clone()).collect();
    Ok(emit_dataset(&plain, out_dir, parameters)?)
}

/// Full run: forge from `corpora` and write everything under `out_dir`.
pub fn forge(
    corpora: &[Corpus],
    describer: &Describer<'_>,
    config: &ForgeConfig,
    out_dir: &Path,
) -> Result<DatasetManifest, ForgeError> {
    let samples = forge_samples(corpora, describer, config)?;
    write_output(&samples, out_dir, run_parameters(corpora, describer, config))
}

/// One line of a sampled-windows file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window_id: String,
    #[serde(flatten)]
    pub window: Window,
}

/// Writes windows as JSONL with ids `{i:06}`, plus the per-dataset manifest
/// at `manifest_path`.
pub fn write_windows(
    windows: &[Window],
    path: &Path,
    manifest_path: &Path,
) -> Result<SampleManifest, ForgeError> {
    let mut sink = BufWriter::new(File::create(path)?);
    for (i, window) in windows.iter().enumerate() {
        let record = WindowRecord {
            window_id: original_id(i),
            window: window.clone(),
        };
        serde_json::to_writer(&mut sink, &record).map_err(std::io::Error::other)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    let manifest = SampleManifest::from_windows(windows);
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    json.push(b'\n');
    std::fs::write(manifest_path, json)?;
    Ok(manifest)
}

pub fn read_windows(path: &Path) -> Result<Vec<WindowRecord>, ForgeError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| ForgeError::Io(std::io::Error::other(e))))
        .collect()
}
