//! Instruction samples in the single-round Human/Assistant layout, their
//! line-delimited serialisation, and plot images.

mod plot;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::plot::{render_image, render_plot, tick_label, y_limits, CANVAS};
use crate::augmentation::{AugmentationSpec, AUGMENTATIONS_PER_WINDOW};
use crate::description::{format_values, Generator};
use crate::ingest::Granularity;
use crate::rng::fnv1a;
use crate::windowing::{Window, WindowSplit};

pub const STOP: &str = "<STOP>";
pub const WINDOW_TOKEN: &str = "<window>";
pub const DEFAULT_QUESTION: &str = "Please describe the trend of this time series.";
pub const QUESTION_POOL: [&str; 5] = [
    DEFAULT_QUESTION,
    "Describe the overall trend of this time series.",
    "What is the trend of this time series?",
    "Summarize how this time series changes over time.",
    "Explain the trend shown in this time series.",
];

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("{0} must not contain the stop token")]
    ReservedToken(&'static str),
    #[error("window token must be a single line")]
    MultilineWindow,
    #[error("text does not follow the instruction layout: {0}")]
    Malformed(&'static str),
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error("cannot plot {0} points")]
    TooShort(usize),
    #[error("non-finite value in plotted window")]
    NonFinite,
    #[error("image encoding failed: {0}")]
    Encode(String),
    #[error("writing {path}: {source}")]
    SinkFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn sink(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::SinkFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// `Human: {window}\n{question} <STOP>\nAssistant: {answer} <STOP>\n`
pub fn format_instruction(window: &str, question: &str, answer: &str) -> Result<String, EmitError> {
    if question.trim().is_empty() {
        return Err(EmitError::EmptyField("question"));
    }
    if answer.trim().is_empty() {
        return Err(EmitError::EmptyField("answer"));
    }
    if window.is_empty() {
        return Err(EmitError::EmptyField("window"));
    }
    if window.contains('\n') {
        return Err(EmitError::MultilineWindow);
    }
    for (name, field) in [("window", window), ("question", question), ("answer", answer)] {
        if field.contains(STOP) {
            return Err(EmitError::ReservedToken(name));
        }
    }
    Ok(format!("Human: {window}\n{question} {STOP}\nAssistant: {answer} {STOP}\n"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInstruction {
    pub window: String,
    pub question: String,
    pub answer: String,
}

/// Inverse of [`format_instruction`].
pub fn parse_instruction(text: &str) -> Result<ParsedInstruction, EmitError> {
    let rest = text.strip_prefix("Human: ").ok_or(EmitError::Malformed("missing `Human: ` prefix"))?;
    let (window, rest) = rest.split_once('\n').ok_or(EmitError::Malformed("missing newline after window"))?;
    let marker = format!(" {STOP}\nAssistant: ");
    let (question, rest) = rest.split_once(&marker).ok_or(EmitError::Malformed("missing assistant turn"))?;
    let answer = rest
        .strip_suffix(&format!(" {STOP}\n"))
        .ok_or(EmitError::Malformed("missing final stop token"))?;
    if question.contains(STOP) || answer.contains(STOP) {
        return Err(EmitError::Malformed("stray stop token"));
    }
    if question.trim().is_empty() || answer.trim().is_empty() {
        return Err(EmitError::Malformed("empty turn"));
    }
    Ok(ParsedInstruction {
        window: window.to_string(),
        question: question.to_string(),
        answer: answer.to_string(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitConfig {
    /// Rotate through [`QUESTION_POOL`] by sample id instead of the fixed question.
    pub question_pool: bool,
    /// Put the window's values after the window token for text-only consumers.
    pub inline_window: bool,
}

impl EmitConfig {
    pub fn question_for(&self, sample_id: &str) -> &'static str {
        if self.question_pool {
            QUESTION_POOL[(fnv1a(sample_id.as_bytes()) % QUESTION_POOL.len() as u64) as usize]
        } else {
            DEFAULT_QUESTION
        }
    }

    pub fn window_token(&self, values: &[f64]) -> String {
        if self.inline_window {
            format!("{WINDOW_TOKEN} {}", format_values(values))
        } else {
            WINDOW_TOKEN.to_string()
        }
    }
}

/// Where a sample's window came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub series_id: String,
    pub start_index: usize,
    pub tau: usize,
    pub granularity: Granularity,
    pub window_seed: u64,
}

impl Provenance {
    pub fn of(window: &Window) -> Self {
        Self {
            dataset: window.source.corpus.clone(),
            series_id: window.source.series_id.clone(),
            start_index: window.source.start_index,
            tau: window.tau,
            granularity: window.source.granularity,
            window_seed: window.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub sample_id: String,
    /// Id of the original sample an augmented copy derives from.
    pub original_id: Option<String>,
    pub split: WindowSplit,
    pub question: String,
    pub answer: String,
    pub formatted: String,
    pub image_path: Option<String>,
    pub provenance: Provenance,
    pub augmentation: AugmentationSpec,
    pub generator: Generator,
    pub model_id: String,
    pub template_version: String,
    /// Rounded trend summary the description was generated from.
    pub summary: Option<Vec<f64>>,
}

impl InstructionSample {
    pub fn is_original(&self) -> bool {
        self.original_id.is_none()
    }

    pub fn validate(&self) -> Result<(), EmitError> {
        if self.sample_id.is_empty() {
            return Err(EmitError::EmptyField("sample_id"));
        }
        let parsed = parse_instruction(&self.formatted)?;
        if parsed.question != self.question || parsed.answer != self.answer {
            return Err(EmitError::Malformed("formatted text disagrees with question/answer"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub dataset: String,
    pub granularity: Granularity,
    pub kind: SampleKind,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Original,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicityCheck {
    pub expected_per_original: usize,
    pub complete: bool,
    /// Original ids whose augmented count differs from the expectation.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub total: usize,
    pub originals: usize,
    pub augmented: usize,
    pub rows: Vec<ManifestRow>,
    pub multiplicity: MultiplicityCheck,
    /// Run parameters recorded by the caller.
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl DatasetManifest {
    /// Counts by `(dataset, granularity, original/augmented)`.
    pub fn from_samples(samples: &[InstructionSample], expected_per_original: usize) -> Self {
        let mut counts: BTreeMap<(String, String, SampleKind), (Granularity, usize)> = BTreeMap::new();
        let mut children: BTreeMap<&str, usize> = BTreeMap::new();
        for s in samples {
            let kind = if s.is_original() {
                children.entry(&s.sample_id).or_insert(0);
                SampleKind::Original
            } else {
                SampleKind::Augmented
            };
            let key = (
                s.provenance.dataset.clone(),
                s.provenance.granularity.name().to_string(),
                kind,
            );
            counts.entry(key).or_insert((s.provenance.granularity, 0)).1 += 1;
        }
        let mut orphans = BTreeSet::new();
        for s in samples {
            if let Some(parent) = &s.original_id {
                match children.get_mut(parent.as_str()) {
                    Some(c) => *c += 1,
                    None => {
                        orphans.insert(parent.clone());
                    }
                }
            }
        }
        let mut violations: Vec<String> = children
            .iter()
            .filter(|(_, c)| **c != expected_per_original)
            .map(|(id, _)| id.to_string())
            .collect();
        violations.extend(orphans);
        let originals = samples.iter().filter(|s| s.is_original()).count();
        Self {
            total: samples.len(),
            originals,
            augmented: samples.len() - originals,
            rows: counts
                .into_iter()
                .map(|((dataset, _, kind), (granularity, count))| ManifestRow {
                    dataset,
                    granularity,
                    kind,
                    count,
                })
                .collect(),
            multiplicity: MultiplicityCheck {
                expected_per_original,
                complete: violations.is_empty(),
                violations,
            },
            parameters: BTreeMap::new(),
        }
    }
}

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_DIR: &str = "images";

/// Relative path of a sample's image inside the output directory.
pub fn image_rel_path(sample_id: &str) -> String {
    format!("{IMAGES_DIR}/{sample_id}.png")
}

pub fn write_image(out_dir: &Path, sample_id: &str, png: &[u8]) -> Result<(), EmitError> {
    let dir = out_dir.join(IMAGES_DIR);
    fs::create_dir_all(&dir).map_err(sink(&dir))?;
    let path = out_dir.join(image_rel_path(sample_id));
    fs::write(&path, png).map_err(sink(&path))
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), EmitError> {
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(sink(&tmp))?;
    file.write_all(bytes).map_err(sink(&tmp))?;
    file.sync_all().map_err(sink(&tmp))?;
    fs::rename(&tmp, path).map_err(sink(path))
}

/// Writes `samples.jsonl` (sorted by id) and `manifest.json` into `out_dir`.
pub fn emit_dataset(
    samples: &[InstructionSample],
    out_dir: &Path,
    parameters: BTreeMap<String, serde_json::Value>,
) -> Result<DatasetManifest, EmitError> {
    let mut sorted: Vec<&InstructionSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    for pair in sorted.windows(2) {
        if pair[0].sample_id == pair[1].sample_id {
            return Err(EmitError::DuplicateId(pair[0].sample_id.clone()));
        }
    }
    let mut body = Vec::new();
    for s in &sorted {
        s.validate()?;
        serde_json::to_writer(&mut body, s).expect("samples serialise");
        body.push(b'\n');
    }
    fs::create_dir_all(out_dir).map_err(sink(out_dir))?;
    write_atomically(&out_dir.join(SAMPLES_FILE), &body)?;

    let owned: Vec<InstructionSample> = sorted.into_iter().cloned().collect();
    let mut manifest = DatasetManifest::from_samples(&owned, AUGMENTATIONS_PER_WINDOW);
    manifest.parameters = parameters;
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    json.push(b'\n');
    write_atomically(&out_dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

pub fn read_samples(path: &Path) -> Result<Vec<InstructionSample>, EmitError> {
    let text = fs::read_to_string(path).map_err(sink(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| EmitError::SinkFailure {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmentation::AugOp;
    use proptest::prelude::*;

    #[test]
    fn layout_example() {
        assert_eq!(
            format_instruction(WINDOW_TOKEN, "Describe the trend.", "It rises.").unwrap(),
            "Human: <window>\nDescribe the trend. <STOP>\nAssistant: It rises. <STOP>\n"
        );
        assert!(matches!(
            format_instruction(WINDOW_TOKEN, "Q", ""),
            Err(EmitError::EmptyField("answer"))
        ));
        assert!(matches!(
            format_instruction(WINDOW_TOKEN, "Q <STOP>", "A"),
            Err(EmitError::ReservedToken("question"))
        ));
    }

    #[test]
    fn parser_rejects_garbage() {
        for bad in [
            "",
            "Human: <window>\nQ <STOP>\nAssistant: A <STOP>",
            "Human: <window>\nQ\nAssistant: A <STOP>\n",
            "Human: <window>Q <STOP>\nAssistant: A <STOP>\n",
        ] {
            assert!(parse_instruction(bad).is_err(), "{bad:?}");
        }
    }

    fn sample(id: &str, parent: Option<&str>) -> InstructionSample {
        let answer = "It rises.".to_string();
        InstructionSample {
            sample_id: id.into(),
            original_id: parent.map(String::from),
            split: WindowSplit::Train,
            question: DEFAULT_QUESTION.into(),
            formatted: format_instruction(WINDOW_TOKEN, DEFAULT_QUESTION, &answer).unwrap(),
            answer,
            image_path: None,
            provenance: Provenance {
                dataset: "toy".into(),
                series_id: "T1".into(),
                start_index: 0,
                tau: 40,
                granularity: Granularity::Hourly,
                window_seed: 1,
            },
            augmentation: if parent.is_some() {
                AugmentationSpec {
                    ops: vec![AugOp::Scale { c: 2.0 }],
                    seed: 1,
                }
            } else {
                AugmentationSpec::original()
            },
            generator: Generator::Rules,
            model_id: "rules-v1".into(),
            template_version: "trend-v1".into(),
            summary: None,
        }
    }

    fn family(k: usize) -> Vec<InstructionSample> {
        let id = format!("{k:06}");
        let mut out = vec![sample(&id, None)];
        out.extend((0..9).map(|j| sample(&format!("{id}-a{j}"), Some(&id))));
        out
    }

    #[test]
    fn manifest_counts_thirty() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<_> = (0..3).flat_map(family).collect();
        let m = emit_dataset(&samples, dir.path(), BTreeMap::new()).unwrap();
        assert_eq!(m.total, 30);
        assert_eq!((m.originals, m.augmented), (3, 27));
        assert!(m.multiplicity.complete);
        assert_eq!(m.rows.iter().map(|r| r.count).sum::<usize>(), 30);
        let lines = fs::read_to_string(dir.path().join(SAMPLES_FILE)).unwrap();
        assert_eq!(lines.lines().count(), 30);
        assert_eq!(read_samples(&dir.path().join(SAMPLES_FILE)).unwrap().len(), 30);
    }

    #[test]
    fn duplicates_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let dup = vec![sample("a", None), sample("a", None)];
        assert!(matches!(
            emit_dataset(&dup, dir.path(), BTreeMap::new()),
            Err(EmitError::DuplicateId(id)) if id == "a"
        ));
        let m = emit_dataset(&[], dir.path(), BTreeMap::new()).unwrap();
        assert_eq!(m.total, 0);
        assert!(m.rows.is_empty());
        assert_eq!(fs::read(dir.path().join(SAMPLES_FILE)).unwrap(), b"");
    }

    #[test]
    fn multiplicity_violation_reported() {
        let mut samples = family(0);
        samples.pop();
        let m = DatasetManifest::from_samples(&samples, 9);
        assert!(!m.multiplicity.complete);
        assert_eq!(m.multiplicity.violations, vec!["000000".to_string()]);
    }

    #[test]
    fn sink_failure() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = emit_dataset(&[sample("a", None)], &file.path().join("sub"), BTreeMap::new()).unwrap_err();
        assert!(matches!(err, EmitError::SinkFailure { .. }));
    }

    #[test]
    fn config_switches() {
        let pooled = EmitConfig {
            question_pool: true,
            inline_window: true,
        };
        assert!(QUESTION_POOL.contains(&pooled.question_for("000001")));
        assert_eq!(EmitConfig::default().question_for("x"), DEFAULT_QUESTION);
        assert_eq!(pooled.window_token(&[1.0, -0.0]), "<window> [1.0, 0.0]");
        let distinct: BTreeSet<_> = (0..50).map(|i| pooled.question_for(&format!("{i:06}"))).collect();
        assert!(distinct.len() > 1);
    }

    proptest! {
        #[test]
        fn round_trip(q in "[^\\n]{0,40}[a-z]", a in "(?s).{0,80}[a-z]", inline in proptest::collection::vec(-100.0f64..100.0, 0..6)) {
            prop_assume!(!q.contains(STOP) && !a.contains(STOP));
            let window = EmitConfig { question_pool: false, inline_window: !inline.is_empty() }.window_token(&inline);
            let text = format_instruction(&window, &q, &a).unwrap();
            let parsed = parse_instruction(&text).unwrap();
            prop_assert_eq!(parsed, ParsedInstruction { window, question: q, answer: a });
        }
    }
}
