//! Two-stage retrieval-then-generation pipeline: encode the query, retrieve
//! top-K context documents, assemble a character-budgeted prompt, generate.

mod generate;

pub use generate::{generate_answer, GeneratorConfig, GeneratorKind, SYSTEM_INSTRUCTION};

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PatentRecord;
use crate::embed::{EmbedError, Embedder};
use crate::index::{IndexError, SearchHit, VectorIndex};

/// Environment variable holding the remote generator API key.
pub const GENERATOR_API_KEY_VAR: &str = "GENERATOR_API_KEY";

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_BUDGET_CHARS: usize = 2048;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("unknown doc id in hits: {0}")]
    UnknownDocId(String),
    #[error("retrieval context has no hits")]
    EmptyContext,
    #[error("generator unavailable after {attempts} attempts: {reason}")]
    GeneratorUnavailable { attempts: u32, reason: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("invalid generator response: {0}")]
    InvalidResponse(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// How retrieval consults the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exact,
    Ivf { nprobe: usize },
}

/// One rendered context snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub text: String,
    pub truncated: bool,
}

/// Retrieved hits plus their rendered, budgeted snippets for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalContext {
    pub query: String,
    pub hits: Vec<SearchHit>,
    pub snippets: Vec<Snippet>,
    pub budget_chars: usize,
}

/// A generated answer with its citations and stage timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub answer_text: String,
    pub cited_doc_ids: Vec<String>,
    pub retrieval_scores: Vec<f32>,
    pub retrieval_ms: u64,
    pub generation_ms: u64,
}

/// Embeds the query and returns the top-k hits from the index.
pub fn retrieve(
    query: &str,
    k: usize,
    embedder: &dyn Embedder,
    index: &VectorIndex,
    mode: SearchMode,
) -> Result<Vec<SearchHit>, RagError> {
    let vector = embedder.embed_text(query)?;
    let hits = match mode {
        SearchMode::Exact => index.search_exact(&vector.values, k)?,
        SearchMode::Ivf { nprobe } => index.search_ivf(&vector.values, k, nprobe)?,
    };
    Ok(hits)
}

/// Renders hits as numbered snippets under a total character budget. Each
/// snippet gets an equal share of what remains, so unused budget from short
/// snippets rolls to later ones.
pub fn assemble_context(
    query: &str,
    hits: &[SearchHit],
    records: &HashMap<String, PatentRecord>,
    budget_chars: usize,
) -> Result<RetrievalContext, RagError> {
    let mut snippets = Vec::with_capacity(hits.len());
    let mut remaining = budget_chars;
    for (i, hit) in hits.iter().enumerate() {
        let record = records
            .get(&hit.doc_id)
            .ok_or_else(|| RagError::UnknownDocId(hit.doc_id.clone()))?;
        let share = remaining / (hits.len() - i);
        let full = format!(
            "[{}] {} | {} | {}",
            hit.rank, hit.doc_id, record.title, record.abstract_text
        );
        let (text, truncated) = truncate_chars(full, share);
        remaining -= text.chars().count();
        snippets.push(Snippet {
            doc_id: hit.doc_id.clone(),
            text,
            truncated,
        });
    }
    Ok(RetrievalContext {
        query: query.to_string(),
        hits: hits.to_vec(),
        snippets,
        budget_chars,
    })
}

fn truncate_chars(text: String, limit: usize) -> (String, bool) {
    match text.char_indices().nth(limit) {
        Some((byte_idx, _)) => {
            let mut t = text;
            t.truncate(byte_idx);
            (t, true)
        }
        None => (text, false),
    }
}

/// Retrieval parameters for a pipeline instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub budget_chars: usize,
    pub mode: SearchMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            budget_chars: DEFAULT_BUDGET_CHARS,
            mode: SearchMode::Exact,
        }
    }
}

/// An immutable query pipeline over one index snapshot. Safe to share across
/// threads; every answer runs retrieval before generation.
pub struct RagPipeline {
    embedder: Arc<dyn Embedder>,
    index: Arc<VectorIndex>,
    records: HashMap<String, PatentRecord>,
    generator: GeneratorConfig,
    config: PipelineConfig,
}

impl RagPipeline {
    pub fn new(
        embedder: Arc<dyn Embedder>,
        index: Arc<VectorIndex>,
        records: HashMap<String, PatentRecord>,
        generator: GeneratorConfig,
        config: PipelineConfig,
    ) -> Self {
        Self {
            embedder,
            index,
            records,
            generator,
            config,
        }
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn retrieve_hits(&self, query: &str, k: Option<usize>) -> Result<Vec<SearchHit>, RagError> {
        retrieve(
            query,
            k.unwrap_or(self.config.k),
            self.embedder.as_ref(),
            &self.index,
            self.config.mode,
        )
    }

    /// Full two-stage run: retrieve, assemble, generate.
    pub fn answer(&self, query: &str) -> Result<RagAnswer, RagError> {
        self.answer_with_k(query, None)
    }

    pub fn answer_with_k(&self, query: &str, k: Option<usize>) -> Result<RagAnswer, RagError> {
        let started = Instant::now();
        let hits = self.retrieve_hits(query, k)?;
        let context = assemble_context(query, &hits, &self.records, self.config.budget_chars)?;
        let retrieval_ms = started.elapsed().as_millis() as u64;
        let mut answer = generate_answer(&context, &self.generator)?;
        answer.retrieval_ms = retrieval_ms;
        Ok(answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn record(id: &str, title: &str, abstract_text: &str) -> PatentRecord {
        PatentRecord {
            application_number: id.to_string(),
            title: title.to_string(),
            abstract_text: abstract_text.to_string(),
            application_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            status: "pending".to_string(),
            publication_number: None,
            publication_type: None,
            field_of_invention: "it".to_string(),
            ipc_codes: vec![],
            inventors: vec![],
            background: None,
        }
    }

    fn hit(doc_id: &str, score: f32, rank: usize) -> SearchHit {
        SearchHit {
            doc_id: doc_id.to_string(),
            score,
            rank,
        }
    }

    fn record_map(records: &[PatentRecord]) -> HashMap<String, PatentRecord> {
        records
            .iter()
            .map(|r| (r.application_number.clone(), r.clone()))
            .collect()
    }

    #[test]
    fn short_snippets_fit_without_truncation() {
        let records = record_map(&[
            record("a", "T1", "small"),
            record("b", "T2", "small"),
        ]);
        let hits = vec![hit("a", 1.0, 1), hit("b", 0.5, 2)];
        let ctx = assemble_context("q", &hits, &records, 2048).unwrap();
        assert_eq!(ctx.snippets.len(), 2);
        assert!(ctx.snippets.iter().all(|s| !s.truncated));
        assert_eq!(ctx.snippets[0].text, "[1] a | T1 | small");
    }

    #[test]
    fn oversized_snippet_is_cut_to_budget() {
        let records = record_map(&[record("a", "T", &"x".repeat(10_000))]);
        let hits = vec![hit("a", 1.0, 1)];
        let ctx = assemble_context("q", &hits, &records, 2048).unwrap();
        assert!(ctx.snippets[0].truncated);
        assert_eq!(ctx.snippets[0].text.chars().count(), 2048);
    }

    #[test]
    fn unused_share_rolls_to_later_snippets() {
        // Budget 100 over five snippets: the first share is 100/5 = 20.
        // Snippet 1 renders only 13 chars, so snippet 2's share grows to
        // (100-13)/4 = 21, snippet 3's to (100-13-21)/3 = 22, and so on.
        let records = record_map(&[
            record("d1", "t", ""),
            record("d2", "t", &"a".repeat(200)),
            record("d3", "t", &"b".repeat(200)),
            record("d4", "t", &"c".repeat(200)),
            record("d5", "t", &"d".repeat(200)),
        ]);
        let hits = vec![
            hit("d1", 5.0, 1),
            hit("d2", 4.0, 2),
            hit("d3", 3.0, 3),
            hit("d4", 2.0, 4),
            hit("d5", 1.0, 5),
        ];
        let ctx = assemble_context("q", &hits, &records, 100).unwrap();
        let lens: Vec<usize> = ctx.snippets.iter().map(|s| s.text.chars().count()).collect();
        assert_eq!(ctx.snippets[0].text, "[1] d1 | t | ");
        assert_eq!(lens, vec![13, 21, 22, 22, 22]);
        assert!(!ctx.snippets[0].truncated);
        assert!(ctx.snippets[1..].iter().all(|s| s.truncated));
        assert_eq!(lens.iter().sum::<usize>(), 100);
        assert!(lens[1] > 100 / 5);
    }

    #[test]
    fn unknown_doc_id_is_an_error() {
        let records = record_map(&[record("a", "T", "x")]);
        let hits = vec![hit("ghost", 1.0, 1)];
        assert!(matches!(
            assemble_context("q", &hits, &records, 100),
            Err(RagError::UnknownDocId(id)) if id == "ghost"
        ));
    }

    #[test]
    fn total_length_never_exceeds_budget() {
        for budget in [10, 37, 64, 100, 500] {
            let records = record_map(&[
                record("a", &"t".repeat(50), &"x".repeat(300)),
                record("b", "s", &"y".repeat(10)),
                record("c", &"u".repeat(80), &"z".repeat(300)),
            ]);
            let hits = vec![hit("a", 3.0, 1), hit("b", 2.0, 2), hit("c", 1.0, 3)];
            let ctx = assemble_context("q", &hits, &records, budget).unwrap();
            let total: usize = ctx.snippets.iter().map(|s| s.text.chars().count()).sum();
            assert!(total <= budget, "total {total} over budget {budget}");
        }
    }
}
