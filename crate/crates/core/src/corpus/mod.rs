//! Relation-instance data model, JSON-lines ingestion, vocabularies, corpus
//! statistics and the planted synthetic-corpus generator.

mod stats;
mod synth;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

pub use stats::{relation_distribution, top_k_share, RelationCount, RelationStats, UNALIGNED_BUCKET};
pub use synth::{synth_corpus, synth_corpus_with_log, zipf_pmf, SynthConfig, SynthLog};
pub use vocab::{build_vocabularies, TypePair, Vocab, Vocabularies, UNK};

/// A typed entity mention: tokens `[start, end)` of the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedSpan {
    pub start: usize,
    pub end: usize,
    pub etype: String,
    pub surface: Vec<String>,
}

impl TypedSpan {
    /// Surface form joined by single spaces; the key used by the entity vocabulary.
    pub fn surface_text(&self) -> String {
        self.surface.join(" ")
    }

    fn overlaps(&self, other: &TypedSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// One sentence with a head/tail entity pair and an optional silver relation label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationInstance {
    pub tokens: Vec<String>,
    pub head: TypedSpan,
    pub tail: TypedSpan,
    pub pos: Option<Vec<String>>,
    pub dep_path: Option<Vec<String>>,
    pub gold_relation: Option<String>,
}

impl RelationInstance {
    pub fn is_labelled(&self) -> bool {
        self.gold_relation.is_some()
    }

    /// Token range strictly between the two mentions, whichever comes first.
    pub fn between(&self) -> std::ops::Range<usize> {
        let (first, second) = if self.head.start <= self.tail.start {
            (&self.head, &self.tail)
        } else {
            (&self.tail, &self.head)
        };
        first.end..second.start.max(first.end)
    }

    /// Serialize to one line of the JSON-lines schema (no trailing newline).
    pub fn to_json_line(&self) -> String {
        let raw = RawInstance {
            tokens: self.tokens.clone(),
            head: RawSpan::from(&self.head),
            tail: RawSpan::from(&self.tail),
            pos: self.pos.clone(),
            dep_path: self.dep_path.clone(),
            relation: self.gold_relation.clone(),
        };
        serde_json::to_string(&raw).expect("instance serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    etype: String,
}

impl From<&TypedSpan> for RawSpan {
    fn from(s: &TypedSpan) -> Self {
        RawSpan {
            start: s.start,
            end: s.end,
            etype: s.etype.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    tokens: Vec<String>,
    head: RawSpan,
    tail: RawSpan,
    #[serde(default)]
    pos: Option<Vec<String>>,
    #[serde(default)]
    dep_path: Option<Vec<String>>,
    #[serde(default)]
    relation: Option<String>,
}

fn validate_span(
    raw: RawSpan,
    slot: &'static str,
    tokens: &[String],
    line: usize,
) -> Result<TypedSpan, CorpusError> {
    if raw.start >= raw.end || raw.end > tokens.len() {
        return Err(CorpusError::SpanOutOfRange {
            line,
            slot,
            start: raw.start,
            end: raw.end,
            len: tokens.len(),
        });
    }
    if raw.etype.is_empty() {
        return Err(CorpusError::EmptyType { line, slot });
    }
    Ok(TypedSpan {
        start: raw.start,
        end: raw.end,
        surface: tokens[raw.start..raw.end].to_vec(),
        etype: raw.etype,
    })
}

/// Parse and validate one JSON-lines record. `line` is 1-based and only used in errors.
pub fn parse_instance(text: &str, line: usize) -> Result<RelationInstance, CorpusError> {
    let raw: RawInstance =
        serde_json::from_str(text).map_err(|source| CorpusError::Json { line, source })?;
    let head = validate_span(raw.head, "head", &raw.tokens, line)?;
    let tail = validate_span(raw.tail, "tail", &raw.tokens, line)?;
    if head.overlaps(&tail) {
        return Err(CorpusError::OverlappingSpans {
            line,
            head_start: head.start,
            head_end: head.end,
            tail_start: tail.start,
            tail_end: tail.end,
        });
    }
    if let Some(pos) = &raw.pos {
        if pos.len() != raw.tokens.len() {
            return Err(CorpusError::PosLengthMismatch {
                line,
                pos_len: pos.len(),
                tokens_len: raw.tokens.len(),
            });
        }
    }
    Ok(RelationInstance {
        tokens: raw.tokens,
        head,
        tail,
        pos: raw.pos,
        dep_path: raw.dep_path,
        gold_relation: raw.relation,
    })
}

/// An ordered collection of instances. The index of an instance identifies it in
/// every clustering derived from the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub instances: Vec<RelationInstance>,
}

impl Corpus {
    pub fn new(instances: Vec<RelationInstance>) -> Self {
        Corpus { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RelationInstance> {
        self.instances.iter()
    }

    pub fn n_labelled(&self) -> usize {
        self.instances.iter().filter(|i| i.is_labelled()).count()
    }

    /// Gold labels aligned by index (`None` for unaligned instances).
    pub fn gold_labels(&self) -> Vec<Option<&str>> {
        self.instances
            .iter()
            .map(|i| i.gold_relation.as_deref())
            .collect()
    }

    /// Keep only labelled instances, preserving order.
    pub fn labelled_only(&self) -> Corpus {
        Corpus::new(
            self.instances
                .iter()
                .filter(|i| i.is_labelled())
                .cloned()
                .collect(),
        )
    }

    /// Parse a whole JSON-lines document held in memory. Blank lines are skipped.
    pub fn from_jsonl_str(text: &str) -> Result<Corpus, CorpusError> {
        let mut instances = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            instances.push(parse_instance(line, i + 1)?);
        }
        Ok(Corpus { instances })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for inst in &self.instances {
            out.write_all(inst.to_json_line().as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_jsonl(BufWriter::new(file)).map_err(io_err)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a RelationInstance;
    type IntoIter = std::slice::Iter<'a, RelationInstance>;

    fn into_iter(self) -> Self::IntoIter {
        self.instances.iter()
    }
}

/// Load a JSON-lines corpus, keeping file order. Errors carry `path:line`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut instances = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_instance(&line, line_no).map_err(|e| CorpusError::InFile {
            path: path.to_path_buf(),
            line: line_no,
            source: Box::new(e),
        })?;
        instances.push(inst);
    }
    Ok(Corpus { instances })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BAITZ: &str = r#"{"tokens":["Jon","Baitz",",","born","in","Los","Angeles"],"head":{"start":0,"end":2,"type":"PERSON"},"tail":{"start":5,"end":7,"type":"LOCATION"},"relation":"/people/person/place_of_birth"}"#;

    #[test]
    fn parses_labelled_instance() {
        let inst = parse_instance(BAITZ, 1).unwrap();
        assert_eq!(
            inst.gold_relation.as_deref(),
            Some("/people/person/place_of_birth")
        );
        assert_eq!(inst.head.surface, vec!["Jon", "Baitz"]);
        assert_eq!(inst.tail.surface_text(), "Los Angeles");
        assert_eq!(inst.head.etype, "PERSON");
        assert_eq!(inst.between(), 2..5);
        assert!(inst.pos.is_none() && inst.dep_path.is_none());
    }

    #[test]
    fn null_or_missing_relation_is_unaligned() {
        let null = BAITZ.replace(r#""/people/person/place_of_birth""#, "null");
        assert_eq!(parse_instance(&null, 1).unwrap().gold_relation, None);
        let missing = BAITZ.replace(r#","relation":"/people/person/place_of_birth""#, "");
        assert_eq!(parse_instance(&missing, 1).unwrap().gold_relation, None);
    }

    #[test]
    fn rejects_out_of_range_span() {
        let bad = BAITZ.replace(r#""start":0,"end":2"#, r#""start":3,"end":9"#);
        match parse_instance(&bad, 4) {
            Err(CorpusError::SpanOutOfRange {
                line: 4,
                slot: "head",
                start: 3,
                end: 9,
                len: 7,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let empty = BAITZ.replace(r#""start":0,"end":2"#, r#""start":1,"end":1"#);
        assert!(matches!(
            parse_instance(&empty, 1),
            Err(CorpusError::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_overlap_pos_mismatch_and_bad_json() {
        let overlap = BAITZ.replace(r#""start":5,"end":7"#, r#""start":1,"end":3"#);
        assert!(matches!(
            parse_instance(&overlap, 1),
            Err(CorpusError::OverlappingSpans { .. })
        ));
        let pos = BAITZ.replace(r#""relation""#, r#""pos":["NNP"],"relation""#);
        assert!(matches!(
            parse_instance(&pos, 1),
            Err(CorpusError::PosLengthMismatch {
                pos_len: 1,
                tokens_len: 7,
                ..
            })
        ));
        assert!(matches!(
            parse_instance("{not json", 9),
            Err(CorpusError::Json { line: 9, .. })
        ));
        let no_type = BAITZ.replace(r#""type":"PERSON""#, r#""type":"""#);
        assert!(matches!(
            parse_instance(&no_type, 1),
            Err(CorpusError::EmptyType { slot: "head", .. })
        ));
    }

    #[test]
    fn serialization_round_trips() {
        let inst = parse_instance(BAITZ, 1).unwrap();
        let again = parse_instance(&inst.to_json_line(), 1).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn reversed_mentions_have_between_range() {
        let rev = BAITZ
            .replace(r#""head":{"start":0,"end":2"#, r#""head":{"start":5,"end":7"#)
            .replace(r#""tail":{"start":5,"end":7"#, r#""tail":{"start":0,"end":2"#);
        let inst = parse_instance(&rev, 1).unwrap();
        assert_eq!(inst.between(), 2..5);
    }
}
