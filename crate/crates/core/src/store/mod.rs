//! Append-only store of verified question/chain/answer records.
//!
//! On-disk layout of a store directory:
//!
//! ```text
//! manifest.json        segment list with record counts and SHA-256 checksums
//! segment-00000.jsonl  one VerifiedQA per line, sorted by qa_id within a segment
//! curriculum.json      curriculum snapshot used for referential checks
//! verdicts.jsonl       every consensus verdict seen, one per prompt
//! audit.jsonl          rejected ingest inputs with reasons
//! keywords.json        optional qa_id -> keywords annotations
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusVerdict, FinalAnswer, LCoTTrace, VerdictStatus};
use crate::digest::{sha256_hex, short_digest};
use crate::socrates::{AnswerType, Category, Curriculum, Discipline, PromptSpec, TargetLevel};
use crate::util::read_jsonl;

const MANIFEST: &str = "manifest.json";
const CURRICULUM: &str = "curriculum.json";
const VERDICTS: &str = "verdicts.jsonl";
const AUDIT: &str = "audit.jsonl";
const KEYWORDS: &str = "keywords.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedQA {
    pub qa_id: String,
    pub prompt_id: String,
    pub question: String,
    pub chain_text: String,
    pub answer: FinalAnswer,
    pub answer_type: AnswerType,
    pub category: Category,
    pub course_id: String,
    pub topic_id: String,
    pub discipline: Discipline,
    pub target_level: TargetLevel,
    /// Traces whose answers agreed.
    pub trace_ids: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
}

/// Content address of a record: question plus agreed answer.
pub fn qa_id_for(question: &str, answer: &FinalAnswer) -> String {
    let answer = serde_json::to_string(answer).expect("answers serialize");
    format!("qa-{}", short_digest(format!("{question}\n{answer}").as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub record_count: usize,
    pub segments: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedVerdict {
    #[serde(flatten)]
    pub verdict: ConsensusVerdict,
    pub target_level: TargetLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub prompt_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub ingested: usize,
    pub duplicates: usize,
    pub rejected: Vec<AuditEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub by_discipline: BTreeMap<String, usize>,
    pub by_category: BTreeMap<String, usize>,
    pub by_level: BTreeMap<String, usize>,
    pub attempted_by_level: BTreeMap<String, usize>,
    pub verified_by_level: BTreeMap<String, usize>,
    /// verified / attempted per target level, from the verdict log.
    pub verification_yield: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanFilter {
    pub discipline: Option<Discipline>,
    pub category: Option<Category>,
    pub level: Option<TargetLevel>,
}

impl ScanFilter {
    pub fn matches(&self, qa: &VerifiedQA) -> bool {
        self.discipline.is_none_or(|d| d == qa.discipline)
            && self.category.is_none_or(|c| c == qa.category)
            && self.level.is_none_or(|l| l == qa.target_level)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("checksum mismatch for segment {file}")]
    Checksum { file: String },
    #[error("no store at {0}")]
    Missing(String),
    #[error("store already exists at {0}")]
    Exists(String),
    #[error("record {0} not found")]
    NotFound(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn jsonl_bytes<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

#[derive(Debug)]
pub struct KnowledgeStore {
    dir: PathBuf,
    manifest: Manifest,
    curriculum: Curriculum,
    records: BTreeMap<String, VerifiedQA>,
    verdicts: BTreeMap<String, LoggedVerdict>,
    keywords: BTreeMap<String, Vec<String>>,
}

impl KnowledgeStore {
    /// Creates an empty store; fails if `dir` already holds one.
    pub fn create(dir: impl AsRef<Path>, curriculum: &Curriculum) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        if dir.join(MANIFEST).exists() {
            return Err(StoreError::Exists(dir.display().to_string()));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join(CURRICULUM), curriculum.to_json().as_bytes())?;
        let store = Self {
            manifest: Manifest {
                format_version: 1,
                record_count: 0,
                segments: Vec::new(),
            },
            dir,
            curriculum: curriculum.clone(),
            records: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            keywords: BTreeMap::new(),
        };
        store.write_manifest()?;
        Ok(store)
    }

    /// Loads the snapshot described by the manifest, verifying every segment checksum.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(StoreError::Missing(dir.display().to_string()));
        }
        let corrupt = |path: &Path, reason: String| StoreError::Corrupt {
            path: path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(&manifest_path, e.to_string()))?;
        let cur_path = dir.join(CURRICULUM);
        let cur_text = fs::read_to_string(&cur_path).map_err(io_err(&cur_path))?;
        let curriculum = Curriculum::from_json(&cur_text).map_err(|e| corrupt(&cur_path, e.to_string()))?;
        let mut records = BTreeMap::new();
        for seg in &manifest.segments {
            let path = dir.join(&seg.file);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if sha256_hex(&bytes) != seg.sha256 {
                return Err(StoreError::Checksum { file: seg.file.clone() });
            }
            let text = String::from_utf8(bytes).map_err(|e| corrupt(&path, e.to_string()))?;
            for (n, line) in text.lines().enumerate() {
                let qa: VerifiedQA =
                    serde_json::from_str(line).map_err(|e| corrupt(&path, format!("line {}: {e}", n + 1)))?;
                records.insert(qa.qa_id.clone(), qa);
            }
        }
        if records.len() != manifest.record_count {
            return Err(corrupt(
                &manifest_path,
                format!("manifest lists {} records, segments hold {}", manifest.record_count, records.len()),
            ));
        }
        let verdict_path = dir.join(VERDICTS);
        let verdicts = if verdict_path.exists() {
            read_jsonl::<LoggedVerdict>(&verdict_path)
                .map_err(io_err(&verdict_path))?
                .into_iter()
                .map(|v| (v.verdict.prompt_id.clone(), v))
                .collect()
        } else {
            BTreeMap::new()
        };
        let kw_path = dir.join(KEYWORDS);
        let keywords: BTreeMap<String, Vec<String>> = if kw_path.exists() {
            let text = fs::read_to_string(&kw_path).map_err(io_err(&kw_path))?;
            serde_json::from_str(&text).map_err(|e| corrupt(&kw_path, e.to_string()))?
        } else {
            BTreeMap::new()
        };
        for (id, kws) in &keywords {
            if let Some(r) = records.get_mut(id) {
                r.keywords = kws.clone();
            }
        }
        Ok(Self {
            dir,
            manifest,
            curriculum,
            records,
            verdicts,
            keywords,
        })
    }

    pub fn open_or_create(dir: impl AsRef<Path>, curriculum: &Curriculum) -> Result<Self, StoreError> {
        if dir.as_ref().join(MANIFEST).exists() {
            Self::open(dir)
        } else {
            Self::create(dir, curriculum)
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn curriculum(&self) -> &Curriculum {
        &self.curriculum
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn write_manifest(&self) -> Result<(), StoreError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_atomic(&self.dir.join(MANIFEST), text.as_bytes())
    }

    /// Stores one record per verified verdict. Every verdict is logged for
    /// yield accounting; non-verified or unresolvable inputs are audited.
    pub fn ingest(
        &mut self,
        verdicts: &[ConsensusVerdict],
        prompts: &[PromptSpec],
        traces: &[LCoTTrace],
    ) -> Result<IngestReport, StoreError> {
        let prompts: BTreeMap<&str, &PromptSpec> = prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
        let traces: BTreeMap<&str, &LCoTTrace> = traces.iter().map(|t| (t.trace_id.as_str(), t)).collect();
        let mut report = IngestReport::default();
        let mut fresh: BTreeMap<String, VerifiedQA> = BTreeMap::new();
        for verdict in verdicts {
            let mut reject = |reason: String| {
                report.rejected.push(AuditEntry {
                    prompt_id: verdict.prompt_id.clone(),
                    reason,
                })
            };
            let Some(prompt) = prompts.get(verdict.prompt_id.as_str()) else {
                reject("prompt not supplied".into());
                continue;
            };
            self.verdicts.insert(
                verdict.prompt_id.clone(),
                LoggedVerdict {
                    verdict: verdict.clone(),
                    target_level: prompt.target_level,
                },
            );
            let status = match verdict.status {
                VerdictStatus::Verified => None,
                VerdictStatus::Divergent => Some("divergent"),
                VerdictStatus::Unverifiable => Some("unverifiable"),
            };
            if let Some(status) = status {
                reject(format!("verdict status {status}"));
                continue;
            }
            let Some(answer) = verdict.agreed_answer.clone() else {
                reject("verified verdict without agreed answer".into());
                continue;
            };
            let Some(trace) = verdict.traces.first().and_then(|id| traces.get(id.as_str())) else {
                reject("trace not supplied".into());
                continue;
            };
            let Some(course) = self.curriculum.course_of_topic(&prompt.topic_id) else {
                reject(format!("topic {} not in curriculum", prompt.topic_id));
                continue;
            };
            if prompt.text.trim().is_empty() || trace.chain_text.trim().is_empty() {
                reject("empty question or chain".into());
                continue;
            }
            let qa_id = qa_id_for(&prompt.text, &answer);
            if self.records.contains_key(&qa_id) || fresh.contains_key(&qa_id) {
                report.duplicates += 1;
                continue;
            }
            fresh.insert(
                qa_id.clone(),
                VerifiedQA {
                    qa_id,
                    prompt_id: prompt.prompt_id.clone(),
                    question: prompt.text.clone(),
                    chain_text: trace.chain_text.clone(),
                    answer,
                    answer_type: prompt.answer_type,
                    category: prompt.category,
                    course_id: course.course_id.clone(),
                    topic_id: prompt.topic_id.clone(),
                    discipline: course.discipline,
                    target_level: prompt.target_level,
                    trace_ids: verdict.traces.clone(),
                    keywords: Vec::new(),
                },
            );
        }
        report.ingested = fresh.len();
        if !fresh.is_empty() {
            let file = format!("segment-{:05}.jsonl", self.manifest.segments.len());
            let bytes = jsonl_bytes(fresh.values());
            write_atomic(&self.dir.join(&file), &bytes)?;
            self.manifest.segments.push(SegmentEntry {
                file,
                records: fresh.len(),
                sha256: sha256_hex(&bytes),
            });
            self.manifest.record_count += fresh.len();
            self.write_manifest()?;
            self.records.extend(fresh);
        }
        write_atomic(&self.dir.join(VERDICTS), &jsonl_bytes(self.verdicts.values()))?;
        if !report.rejected.is_empty() {
            let path = self.dir.join(AUDIT);
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            f.write_all(&jsonl_bytes(&report.rejected)).map_err(io_err(&path))?;
        }
        Ok(report)
    }

    pub fn get(&self, qa_id: &str) -> Result<&VerifiedQA, StoreError> {
        self.records.get(qa_id).ok_or_else(|| StoreError::NotFound(qa_id.to_string()))
    }

    /// Records in ascending qa_id order.
    pub fn scan(&self, filter: ScanFilter) -> impl Iterator<Item = &VerifiedQA> + '_ {
        self.records.values().filter(move |qa| filter.matches(qa))
    }

    pub fn verdict_log(&self) -> impl Iterator<Item = &LoggedVerdict> + '_ {
        self.verdicts.values()
    }

    pub fn audit_log(&self) -> Result<Vec<AuditEntry>, StoreError> {
        let path = self.dir.join(AUDIT);
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_jsonl(&path).map_err(io_err(&path))
    }

    /// Attaches keyword annotations. Stored records are untouched; the
    /// annotations live beside them and are merged on read.
    pub fn annotate_keywords(&mut self, annotations: &BTreeMap<String, Vec<String>>) -> Result<(), StoreError> {
        for (id, kws) in annotations {
            let Some(record) = self.records.get_mut(id) else {
                return Err(StoreError::NotFound(id.clone()));
            };
            let merged: BTreeSet<String> = self
                .keywords
                .get(id)
                .into_iter()
                .flatten()
                .chain(kws)
                .cloned()
                .collect();
            let merged: Vec<String> = merged.into_iter().collect();
            record.keywords = merged.clone();
            self.keywords.insert(id.clone(), merged);
        }
        let text = serde_json::to_string_pretty(&self.keywords).expect("keywords serialize");
        write_atomic(&self.dir.join(KEYWORDS), text.as_bytes())
    }

    pub fn stats(&self) -> CorpusStats {
        let mut s = CorpusStats {
            total: self.records.len(),
            ..CorpusStats::default()
        };
        for qa in self.records.values() {
            *s.by_discipline.entry(qa.discipline.as_str().into()).or_default() += 1;
            *s.by_category.entry(qa.category.as_str().into()).or_default() += 1;
            *s.by_level.entry(qa.target_level.as_str().into()).or_default() += 1;
        }
        for v in self.verdicts.values() {
            let level = v.target_level.as_str().to_string();
            *s.attempted_by_level.entry(level.clone()).or_default() += 1;
            let verified = s.verified_by_level.entry(level).or_default();
            if v.verdict.status == VerdictStatus::Verified {
                *verified += 1;
            }
        }
        for (level, attempted) in &s.attempted_by_level {
            let verified = s.verified_by_level.get(level).copied().unwrap_or(0);
            s.verification_yield.insert(level.clone(), verified as f64 / *attempted as f64);
        }
        s
    }
}
