use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::textprep::NormalizedMessage;

/// Lowercases and splits on anything that is not a letter or digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Sparse vector as `(index, weight)` pairs sorted by index.
pub type SparseVector = Vec<(usize, f64)>;

/// Smoothed inverse document frequencies over a fitted vocabulary.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`. Term indices are assigned in
/// lexicographic order so that fitting is independent of document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct TfidfVocabulary {
    index: HashMap<String, usize>,
    terms: Vec<String>,
    idf: Vec<f64>,
    document_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    document_count: usize,
    terms: Vec<(String, f64)>,
}

impl From<VocabularyRepr> for TfidfVocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let (terms, idf): (Vec<String>, Vec<f64>) = r.terms.into_iter().unzip();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            index,
            terms,
            idf,
            document_count: r.document_count,
        }
    }
}

impl From<TfidfVocabulary> for VocabularyRepr {
    fn from(v: TfidfVocabulary) -> Self {
        Self {
            document_count: v.document_count,
            terms: v.terms.into_iter().zip(v.idf).collect(),
        }
    }
}

impl TfidfVocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn idf(&self, index: usize) -> f64 {
        self.idf[index]
    }

    /// L2-normalized tf·idf weights of `text`; out-of-vocabulary terms are ignored.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(&i) = self.index.get(&tok) {
                *tf.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut v: SparseVector = tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }
}

pub fn fit_tfidf(docs: &[NormalizedMessage]) -> Result<TfidfVocabulary, ClassifyError> {
    fit_texts(docs.iter().map(|d| d.text.as_str()))
}

pub(crate) fn fit_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<TfidfVocabulary, ClassifyError> {
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut n = 0usize;
    for text in texts {
        n += 1;
        let mut toks = tokenize(text);
        toks.sort_unstable();
        toks.dedup();
        for t in toks {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    if n == 0 {
        return Err(ClassifyError::EmptyCorpus);
    }
    let nf = n as f64;
    let mut terms = Vec::with_capacity(df.len());
    let mut idf = Vec::with_capacity(df.len());
    for (t, d) in df {
        idf.push(((1.0 + nf) / (1.0 + d as f64)).ln() + 1.0);
        terms.push(t);
    }
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TfidfVocabulary {
        index,
        terms,
        idf,
        document_count: n,
    })
}

pub fn vectorize(vocab: &TfidfVocabulary, doc: &NormalizedMessage) -> SparseVector {
    vocab.transform(&doc.text)
}
