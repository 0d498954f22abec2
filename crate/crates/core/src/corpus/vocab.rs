use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::Corpus;

/// Reserved surface/type string for unknown entries.
pub const UNK: &str = "<unk>";

/// Dense, contiguous id assignment over a set of keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab<K: Hash + Eq + Clone> {
    items: Vec<K>,
    index: HashMap<K, usize>,
    has_unk: bool,
}

impl<K: Hash + Eq + Clone> Vocab<K> {
    /// Build from keys in the given order. With `unk = Some(key)`, that key takes id 0.
    pub fn from_keys(unk: Option<K>, keys: impl IntoIterator<Item = K>) -> Self {
        let mut v = Vocab {
            items: Vec::new(),
            index: HashMap::new(),
            has_unk: unk.is_some(),
        };
        for k in unk.into_iter().chain(keys) {
            v.insert(k);
        }
        v
    }

    fn insert(&mut self, key: K) -> usize {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.items.len();
        self.items.push(key.clone());
        self.index.insert(key, id);
        id
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn has_unk(&self) -> bool {
        self.has_unk
    }

    /// Exact lookup, without UNK fallback.
    pub fn get(&self, key: &K) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Lookup falling back to the UNK id (0) when the vocabulary has one.
    pub fn id_or_unk(&self, key: &K) -> Option<usize> {
        self.get(key).or(if self.has_unk { Some(0) } else { None })
    }

    pub fn key(&self, id: usize) -> Option<&K> {
        self.items.get(id)
    }

    pub fn keys(&self) -> &[K] {
        &self.items
    }
}

#[derive(Serialize, Deserialize)]
struct VocabRepr<K> {
    has_unk: bool,
    items: Vec<K>,
}

impl<K: Hash + Eq + Clone + Serialize> Serialize for Vocab<K> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabRepr {
            has_unk: self.has_unk,
            items: self.items.clone(),
        }
        .serialize(s)
    }
}

impl<'de, K: Hash + Eq + Clone + Deserialize<'de>> Deserialize<'de> for Vocab<K> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = VocabRepr::<K>::deserialize(d)?;
        let n = repr.items.len();
        let index: HashMap<K, usize> = repr
            .items
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        if index.len() != n {
            return Err(serde::de::Error::custom("duplicate vocabulary entry"));
        }
        Ok(Vocab {
            items: repr.items,
            index,
            has_unk: repr.has_unk,
        })
    }
}

/// Ordered (head type, tail type) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypePair {
    pub head: String,
    pub tail: String,
}

impl TypePair {
    pub fn new(head: impl Into<String>, tail: impl Into<String>) -> Self {
        TypePair {
            head: head.into(),
            tail: tail.into(),
        }
    }

    pub fn unk() -> Self {
        TypePair::new(UNK, UNK)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    /// Entity surface form to id; id 0 is UNK.
    pub entities: Vocab<String>,
    pub types: Vocab<String>,
    /// Observed (head, tail) type pairs; id 0 is the UNK pair.
    pub type_pairs: Vocab<TypePair>,
    pub relations: Vocab<String>,
}

impl Vocabularies {
    pub fn entity_id(&self, surface: &str) -> usize {
        self.entities.id_or_unk(&surface.to_string()).unwrap_or(0)
    }

    pub fn type_pair_id(&self, head: &str, tail: &str) -> usize {
        self.type_pairs
            .id_or_unk(&TypePair::new(head, tail))
            .unwrap_or(0)
    }

    /// Hex SHA-256 of the canonical JSON form; recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("vocabularies serialize");
        hex::encode(Sha256::digest(&json))
    }
}

/// Build all vocabularies. Keys are ordered lexicographically so ids do not
/// depend on instance order; entities seen fewer than `min_entity_freq` times
/// (counting both slots) fall back to UNK.
pub fn build_vocabularies(corpus: &Corpus, min_entity_freq: usize) -> Vocabularies {
    let mut entity_freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut types = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    let mut relations = BTreeSet::new();
    for inst in corpus {
        for span in [&inst.head, &inst.tail] {
            *entity_freq.entry(span.surface_text()).or_default() += 1;
            types.insert(span.etype.clone());
        }
        pairs.insert(TypePair::new(&inst.head.etype, &inst.tail.etype));
        if let Some(r) = &inst.gold_relation {
            relations.insert(r.clone());
        }
    }
    let kept = entity_freq
        .into_iter()
        .filter(|(_, n)| *n >= min_entity_freq)
        .map(|(s, _)| s);
    Vocabularies {
        entities: Vocab::from_keys(Some(UNK.to_string()), kept),
        types: Vocab::from_keys(None, types),
        type_pairs: Vocab::from_keys(Some(TypePair::unk()), pairs),
        relations: Vocab::from_keys(None, relations),
    }
}
