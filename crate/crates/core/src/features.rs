//! Feature templates for the relation classifier.
//!
//! The type-pair one-hot always occupies ids `0..n_type_pairs`; every other
//! enabled template owns a disjoint id range allocated after it, so a feature
//! vector is the union of per-template blocks.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, RelationInstance, Vocabularies, UNK};

const BUILTIN_STOP_WORDS: &str = include_str!("../data/stopwords.txt");

pub fn builtin_stop_words() -> Vec<String> {
    BUILTIN_STOP_WORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTemplate {
    TypePair,
    /// Surface form of each entity.
    Entity,
    /// Lowercased bag of words between the entities.
    Bow,
    /// Dependency path words: whole path plus each word.
    DepPath,
    /// POS tags between the entities: whole sequence plus each tag.
    Pos,
    /// Dependency path words that are not stop words.
    Trigger,
}

impl FeatureTemplate {
    pub const ALL: [FeatureTemplate; 6] = [
        FeatureTemplate::TypePair,
        FeatureTemplate::Entity,
        FeatureTemplate::Bow,
        FeatureTemplate::DepPath,
        FeatureTemplate::Pos,
        FeatureTemplate::Trigger,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureTemplate::TypePair => "type_pair",
            FeatureTemplate::Entity => "entity",
            FeatureTemplate::Bow => "bow",
            FeatureTemplate::DepPath => "dep_path",
            FeatureTemplate::Pos => "pos",
            FeatureTemplate::Trigger => "trigger",
        }
    }
}

impl fmt::Display for FeatureTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureTemplate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect();
        Ok(match key.as_str() {
            "typepair" | "etype" => FeatureTemplate::TypePair,
            "entity" => FeatureTemplate::Entity,
            "bow" => FeatureTemplate::Bow,
            "deppath" => FeatureTemplate::DepPath,
            "pos" => FeatureTemplate::Pos,
            "trigger" => FeatureTemplate::Trigger,
            _ => {
                return Err(format!(
                    "unknown feature template {s:?} (expected one of entity, bow, dep_path, pos, trigger, type_pair)"
                ))
            }
        })
    }
}

/// Enabled templates. `TypePair` is always a member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureTemplate>", into = "Vec<FeatureTemplate>")]
pub struct FeatureSet(BTreeSet<FeatureTemplate>);

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet::type_pair_only()
    }
}

impl FeatureSet {
    pub fn type_pair_only() -> Self {
        FeatureSet(BTreeSet::from([FeatureTemplate::TypePair]))
    }

    pub fn with(mut self, template: FeatureTemplate) -> Self {
        self.0.insert(template);
        self
    }

    pub fn contains(&self, template: FeatureTemplate) -> bool {
        self.0.contains(&template)
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureTemplate> + '_ {
        self.0.iter().copied()
    }

    /// Parse a comma list such as `"entity,trigger"`; the type pair is implied.
    pub fn parse_list(list: &str) -> Result<Self, String> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .try_fold(FeatureSet::type_pair_only(), |set, name| {
                Ok(set.with(name.parse()?))
            })
    }
}

impl From<Vec<FeatureTemplate>> for FeatureSet {
    fn from(v: Vec<FeatureTemplate>) -> Self {
        v.into_iter().fold(FeatureSet::type_pair_only(), FeatureSet::with)
    }
}

impl From<FeatureSet> for Vec<FeatureTemplate> {
    fn from(s: FeatureSet) -> Self {
        s.0.into_iter().collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(FeatureTemplate::name).collect();
        f.write_str(&names.join(","))
    }
}

/// Multi-hot input vector: strictly increasing active ids below `dimension`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseFeatureVector {
    indices: Vec<usize>,
    dimension: usize,
}

impl SparseFeatureVector {
    /// Sorts and deduplicates `indices`. Panics if an index is `>= dimension`.
    pub fn new(mut indices: Vec<usize>, dimension: usize) -> Self {
        indices.sort_unstable();
        indices.dedup();
        assert!(
            indices.last().is_none_or(|&i| i < dimension),
            "feature id out of range"
        );
        SparseFeatureVector { indices, dimension }
    }

    pub fn one_hot(index: usize, dimension: usize) -> Self {
        SparseFeatureVector::new(vec![index], dimension)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub template: String,
    pub string: String,
    pub id: usize,
}

/// Feature-string → id map built over a training corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "IndexRepr", into = "IndexRepr")]
pub struct FeatureIndex {
    templates: FeatureSet,
    n_type_pairs: usize,
    type_pair_names: Vec<String>,
    entries: Vec<(FeatureTemplate, String)>,
    lookup: HashMap<(FeatureTemplate, String), usize>,
    stop_words: HashSet<String>,
}

#[derive(Serialize, Deserialize)]
struct IndexRepr {
    templates: FeatureSet,
    type_pairs: Vec<String>,
    entries: Vec<(FeatureTemplate, String)>,
    stop_words: Vec<String>,
}

impl From<IndexRepr> for FeatureIndex {
    fn from(r: IndexRepr) -> Self {
        let n = r.type_pairs.len();
        let lookup = r
            .entries
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, n + i))
            .collect();
        FeatureIndex {
            templates: r.templates,
            n_type_pairs: n,
            type_pair_names: r.type_pairs,
            entries: r.entries,
            lookup,
            stop_words: r.stop_words.into_iter().collect(),
        }
    }
}

impl From<FeatureIndex> for IndexRepr {
    fn from(ix: FeatureIndex) -> Self {
        let mut stop_words: Vec<String> = ix.stop_words.into_iter().collect();
        stop_words.sort();
        IndexRepr {
            templates: ix.templates,
            type_pairs: ix.type_pair_names,
            entries: ix.entries,
            stop_words,
        }
    }
}

fn lowercase(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    tokens.iter().map(|t| t.to_lowercase())
}

fn template_strings(
    inst: &RelationInstance,
    template: FeatureTemplate,
    stop_words: &HashSet<String>,
) -> Vec<String> {
    match template {
        FeatureTemplate::TypePair => Vec::new(),
        FeatureTemplate::Entity => vec![
            format!("head={}", inst.head.surface_text()),
            format!("tail={}", inst.tail.surface_text()),
        ],
        FeatureTemplate::Bow => lowercase(&inst.tokens[inst.between()]).collect(),
        FeatureTemplate::DepPath => match &inst.dep_path {
            Some(path) if !path.is_empty() => {
                let words: Vec<String> = lowercase(path).collect();
                std::iter::once(format!("path={}", words.join(" ")))
                    .chain(words.iter().map(|w| format!("w={w}")))
                    .collect()
            }
            _ => Vec::new(),
        },
        FeatureTemplate::Pos => match &inst.pos {
            Some(tags) => {
                let between = &tags[inst.between()];
                if between.is_empty() {
                    return Vec::new();
                }
                std::iter::once(format!("seq={}", between.join(" ")))
                    .chain(between.iter().map(|t| format!("tag={t}")))
                    .collect()
            }
            None => Vec::new(),
        },
        FeatureTemplate::Trigger => inst
            .dep_path
            .as_deref()
            .map(|p| lowercase(p).filter(|w| !stop_words.contains(w)).collect())
            .unwrap_or_default(),
    }
}

impl FeatureIndex {
    pub fn build(corpus: &Corpus, vocabs: &Vocabularies, templates: &FeatureSet) -> Self {
        Self::build_with_stop_words(corpus, vocabs, templates, builtin_stop_words())
    }

    pub fn build_with_stop_words(
        corpus: &Corpus,
        vocabs: &Vocabularies,
        templates: &FeatureSet,
        stop_words: impl IntoIterator<Item = String>,
    ) -> Self {
        let stop_words: HashSet<String> = stop_words.into_iter().map(|w| w.to_lowercase()).collect();
        let type_pair_names = vocabs
            .type_pairs
            .keys()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i == 0 && vocabs.type_pairs.has_unk() {
                    UNK.to_string()
                } else {
                    format!("{}-{}", p.head, p.tail)
                }
            })
            .collect();
        let n_type_pairs = vocabs.type_pairs.len();
        let mut index = FeatureIndex {
            templates: templates.clone(),
            n_type_pairs,
            type_pair_names,
            entries: Vec::new(),
            lookup: HashMap::new(),
            stop_words,
        };
        for template in templates.iter().filter(|t| *t != FeatureTemplate::TypePair) {
            for inst in corpus {
                for s in template_strings(inst, template, &index.stop_words) {
                    let key = (template, s);
                    if !index.lookup.contains_key(&key) {
                        let id = n_type_pairs + index.entries.len();
                        index.entries.push(key.clone());
                        index.lookup.insert(key, id);
                    }
                }
            }
        }
        index
    }

    pub fn dimension(&self) -> usize {
        self.n_type_pairs + self.entries.len()
    }

    pub fn templates(&self) -> &FeatureSet {
        &self.templates
    }

    pub fn id(&self, template: FeatureTemplate, string: &str) -> Option<usize> {
        self.lookup.get(&(template, string.to_string())).copied()
    }

    pub fn dump(&self) -> Vec<FeatureEntry> {
        let pairs = self
            .type_pair_names
            .iter()
            .enumerate()
            .map(|(id, s)| FeatureEntry {
                template: FeatureTemplate::TypePair.name().to_string(),
                string: s.clone(),
                id,
            });
        let rest = self.entries.iter().enumerate().map(|(i, (t, s))| FeatureEntry {
            template: t.name().to_string(),
            string: s.clone(),
            id: self.n_type_pairs + i,
        });
        pairs.chain(rest).collect()
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("feature index serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Features of one instance. Templates not in `feature_set`, or not indexed,
/// contribute nothing; unseen strings are dropped and an unseen type pair maps
/// to the UNK pair.
pub fn extract_features(
    inst: &RelationInstance,
    feature_set: &FeatureSet,
    vocabs: &Vocabularies,
    index: &FeatureIndex,
) -> SparseFeatureVector {
    let mut ids = Vec::new();
    if feature_set.contains(FeatureTemplate::TypePair) {
        let pair = vocabs.type_pair_id(&inst.head.etype, &inst.tail.etype);
        ids.push(if pair < index.n_type_pairs { pair } else { 0 });
    }
    for template in feature_set
        .iter()
        .filter(|t| *t != FeatureTemplate::TypePair && index.templates.contains(*t))
    {
        for s in template_strings(inst, template, &index.stop_words) {
            if let Some(&id) = index.lookup.get(&(template, s)) {
                ids.push(id);
            }
        }
    }
    SparseFeatureVector::new(ids, index.dimension())
}

/// Features for every instance of a corpus, in order.
pub fn extract_all(
    corpus: &Corpus,
    feature_set: &FeatureSet,
    vocabs: &Vocabularies,
    index: &FeatureIndex,
) -> Vec<SparseFeatureVector> {
    corpus
        .iter()
        .map(|i| extract_features(i, feature_set, vocabs, index))
        .collect()
}
