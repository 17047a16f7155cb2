//! Ranking machinery shared by the stores: BM25 lexical scoring, exact
//! cosine scoring, reciprocal-rank fusion and an optional stage-2 rerank.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hooks::{RerankCandidate, Reranker};

/// Lowercased alphanumeric runs. No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored<K> {
    pub id: K,
    pub score: f64,
}

/// Items ordered by score descending, ties by id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList<K> {
    pub items: Vec<Scored<K>>,
    pub source_label: String,
}

impl<K: Ord + Clone> RankedList<K> {
    /// Sorts `items` into canonical order.
    pub fn from_unsorted(mut items: Vec<Scored<K>>, source_label: impl Into<String>) -> Self {
        items.sort_by(compare_scored);
        RankedList {
            items,
            source_label: source_label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<K> {
        self.items.iter().map(|s| s.id.clone()).collect()
    }

    pub fn truncate(&mut self, k: usize) {
        self.items.truncate(k);
    }

    /// 1-based rank of `id`, if present.
    pub fn rank_of(&self, id: &K) -> Option<usize> {
        self.items.iter().position(|s| &s.id == id).map(|p| p + 1)
    }
}

fn compare_scored<K: Ord>(a: &Scored<K>, b: &Scored<K>) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// BM25 scores for every document sharing at least one query term.
///
/// Each distinct query term contributes once. IDF uses the non-negative
/// form `ln(1 + (N - n + 0.5) / (n + 0.5))`.
pub fn bm25_scores<K, S>(corpus: &[(K, S)], query: &str, params: Bm25Params) -> Vec<Scored<K>>
where
    K: Ord + Clone,
    S: AsRef<str>,
{
    let query_terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    if query_terms.is_empty() || corpus.is_empty() {
        return Vec::new();
    }
    let docs: Vec<HashMap<String, usize>> = corpus
        .iter()
        .map(|(_, text)| {
            let mut tf = HashMap::new();
            for t in tokenize(text.as_ref()) {
                *tf.entry(t).or_insert(0) += 1;
            }
            tf
        })
        .collect();
    let lengths: Vec<usize> = docs.iter().map(|d| d.values().sum()).collect();
    let n_docs = corpus.len() as f64;
    let avg_len = lengths.iter().sum::<usize>() as f64 / n_docs;

    let idf: BTreeMap<&str, f64> = query_terms
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains_key(t)).count() as f64;
            (t.as_str(), (1.0 + (n_docs - df + 0.5) / (df + 0.5)).ln())
        })
        .collect();

    let mut out = Vec::new();
    for (i, (id, _)) in corpus.iter().enumerate() {
        let norm = if avg_len > 0.0 {
            1.0 - params.b + params.b * lengths[i] as f64 / avg_len
        } else {
            1.0
        };
        let mut score = 0.0;
        let mut matched = false;
        for (term, weight) in &idf {
            if let Some(&tf) = docs[i].get(*term) {
                matched = true;
                let tf = tf as f64;
                score += weight * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
            }
        }
        if matched {
            out.push(Scored {
                id: id.clone(),
                score,
            });
        }
    }
    out
}

/// Top-`k` BM25 ranking (k1 = 1.2, b = 0.75).
pub fn lexical_rank<K, S>(corpus: &[(K, S)], query: &str, k: usize) -> RankedList<K>
where
    K: Ord + Clone,
    S: AsRef<str>,
{
    let mut list =
        RankedList::from_unsorted(bm25_scores(corpus, query, Bm25Params::default()), "lexical");
    list.truncate(k);
    list
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Exact cosine ranking by full scan.
pub fn vector_rank<K: Ord + Clone>(
    embeddings: &[(K, Vec<f64>)],
    query: &[f64],
    k: usize,
) -> Result<RankedList<K>> {
    let mut items = Vec::with_capacity(embeddings.len());
    for (id, v) in embeddings {
        if v.len() != query.len() {
            return Err(Error::Parameter(format!(
                "embedding dimension mismatch: query has {}, item has {}",
                query.len(),
                v.len()
            )));
        }
        items.push(Scored {
            id: id.clone(),
            score: cosine(v, query),
        });
    }
    let mut list = RankedList::from_unsorted(items, "vector");
    list.truncate(k);
    Ok(list)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub rrf_constant: f64,
    /// Minimum number of input lists an item must appear in.
    pub lists_required: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            rrf_constant: 60.0,
            lists_required: 1,
        }
    }
}

/// Fused ranking plus, per item, the labels of the lists it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused<K> {
    pub list: RankedList<K>,
    pub sources: BTreeMap<K, Vec<String>>,
}

/// Reciprocal-rank fusion: `score(d) = sum over lists of 1 / (k0 + rank_d)`.
pub fn rrf_fuse<K: Ord + Clone>(lists: &[RankedList<K>], config: FusionConfig) -> Result<Fused<K>> {
    if lists.is_empty() {
        return Err(Error::Parameter("rrf_fuse needs at least one list".into()));
    }
    if !(config.rrf_constant > 0.0) {
        return Err(Error::Parameter("rrf constant must be positive".into()));
    }
    let mut acc: BTreeMap<K, (f64, Vec<String>)> = BTreeMap::new();
    for list in lists {
        for (i, item) in list.items.iter().enumerate() {
            let entry = acc.entry(item.id.clone()).or_insert((0.0, Vec::new()));
            entry.0 += 1.0 / (config.rrf_constant + (i + 1) as f64);
            entry.1.push(list.source_label.clone());
        }
    }
    let mut items = Vec::new();
    let mut sources = BTreeMap::new();
    for (id, (score, mut labels)) in acc {
        if labels.len() < config.lists_required.max(1) {
            continue;
        }
        labels.sort();
        sources.insert(id.clone(), labels);
        items.push(Scored { id, score });
    }
    Ok(Fused {
        list: RankedList::from_unsorted(items, "rrf"),
        sources,
    })
}

/// Stage-2 rerank. Without a hook the input order is returned unchanged.
/// With a hook, its ordering is adopted; ids the hook omits keep their
/// relative order at the tail, and unknown or repeated ids are rejected.
/// Scores of the result are positional (`n - position`).
pub fn rerank<K, F>(
    query: &str,
    candidates: &RankedList<K>,
    text_of: F,
    hook: Option<&dyn Reranker>,
) -> Result<RankedList<K>>
where
    K: Ord + Clone + Display,
    F: Fn(&K) -> String,
{
    let Some(hook) = hook else {
        return Ok(candidates.clone());
    };
    let payload: Vec<RerankCandidate> = candidates
        .items
        .iter()
        .map(|s| RerankCandidate {
            id: s.id.to_string(),
            text: text_of(&s.id),
        })
        .collect();
    let order = hook.rerank(query, &payload)?;

    let by_key: HashMap<String, &K> = candidates
        .items
        .iter()
        .map(|s| (s.id.to_string(), &s.id))
        .collect();
    let mut seen = BTreeSet::new();
    let mut ordered: Vec<K> = Vec::with_capacity(candidates.len());
    for key in order {
        let Some(id) = by_key.get(&key) else {
            return Err(Error::Contract(format!(
                "reranker `{}` returned id `{key}` outside the candidate set",
                hook.name()
            )));
        };
        if !seen.insert(key.clone()) {
            return Err(Error::Contract(format!(
                "reranker `{}` returned id `{key}` twice",
                hook.name()
            )));
        }
        ordered.push((*id).clone());
    }
    for s in &candidates.items {
        if !seen.contains(&s.id.to_string()) {
            ordered.push(s.id.clone());
        }
    }
    let n = ordered.len();
    Ok(RankedList {
        items: ordered
            .into_iter()
            .enumerate()
            .map(|(i, id)| Scored {
                id,
                score: (n - i) as f64,
            })
            .collect(),
        source_label: "rerank".into(),
    })
}
