//! Word-level lowercase vocabulary with frequency ranks.
//!
//! Tokens are whitespace-separated lowercase words; anything unknown maps to
//! a reserved UNK token. Class label words (e.g. "yes"/"no") are ordinary
//! single-word tokens, which keeps the class-token scoring path trivial.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::LmError;

pub type TokenId = usize;

pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabData", into = "VocabData")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    /// frequency rank per token id; rank 0 is the most frequent token.
    rank_of: Vec<usize>,
    /// token id per rank, the inverse permutation of `rank_of`.
    id_by_rank: Vec<TokenId>,
    unk: TokenId,
}

#[derive(Serialize, Deserialize)]
struct VocabData {
    tokens: Vec<String>,
    rank_of: Vec<usize>,
}

impl From<Vocabulary> for VocabData {
    fn from(v: Vocabulary) -> Self {
        VocabData {
            tokens: v.tokens,
            rank_of: v.rank_of,
        }
    }
}

impl TryFrom<VocabData> for Vocabulary {
    type Error = LmError;

    fn try_from(data: VocabData) -> Result<Self, LmError> {
        Vocabulary::from_parts(data.tokens, data.rank_of)
    }
}

impl Vocabulary {
    /// Build from token frequency counts. Rank order is descending count
    /// with ties broken by token string, so equal counts rank reproducibly.
    /// `reserved` tokens (label words, template words) are added with count
    /// zero when absent; the UNK token is always present.
    pub fn from_counts(counts: &BTreeMap<String, u64>, reserved: &[&str]) -> Result<Self, LmError> {
        let mut all: BTreeMap<String, u64> = counts.clone();
        all.entry(UNK_TOKEN.to_string()).or_insert(0);
        for &r in reserved {
            let word = normalize_word(r)?;
            all.entry(word).or_insert(0);
        }
        let mut by_freq: Vec<(&String, &u64)> = all.iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));

        let tokens: Vec<String> = all.keys().cloned().collect();
        let index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let mut rank_of = vec![0usize; tokens.len()];
        for (rank, (token, _)) in by_freq.iter().enumerate() {
            rank_of[index[*token]] = rank;
        }
        Self::from_parts_with_index(tokens, index, rank_of)
    }

    fn from_parts(tokens: Vec<String>, rank_of: Vec<usize>) -> Result<Self, LmError> {
        let index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self::from_parts_with_index(tokens, index, rank_of)
    }

    fn from_parts_with_index(
        tokens: Vec<String>,
        index: HashMap<String, TokenId>,
        rank_of: Vec<usize>,
    ) -> Result<Self, LmError> {
        if tokens.is_empty() {
            return Err(LmError::InvalidVocabulary("no tokens".into()));
        }
        if index.len() != tokens.len() {
            return Err(LmError::InvalidVocabulary("duplicate tokens".into()));
        }
        if rank_of.len() != tokens.len() {
            return Err(LmError::InvalidVocabulary(
                "rank table length mismatch".into(),
            ));
        }
        let mut id_by_rank = vec![usize::MAX; tokens.len()];
        for (id, &rank) in rank_of.iter().enumerate() {
            if rank >= tokens.len() || id_by_rank[rank] != usize::MAX {
                return Err(LmError::InvalidVocabulary(
                    "frequency ranks are not a permutation".into(),
                ));
            }
            id_by_rank[rank] = id;
        }
        let unk = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| LmError::InvalidVocabulary("missing UNK token".into()))?;
        Ok(Vocabulary {
            tokens,
            index,
            rank_of,
            id_by_rank,
            unk,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk
    }

    pub fn rank(&self, id: TokenId) -> usize {
        self.rank_of[id]
    }

    /// Token id at a given frequency rank (rank 0 = most frequent).
    pub fn id_at_rank(&self, rank: usize) -> TokenId {
        self.id_by_rank[rank]
    }

    /// The id of a class label word. The word must normalize to exactly one
    /// in-vocabulary token; multi-token labels are rejected.
    pub fn label_id(&self, word: &str) -> Result<TokenId, LmError> {
        let normalized = normalize_word(word)?;
        self.index
            .get(&normalized)
            .copied()
            .ok_or_else(|| LmError::LabelWordNotInVocabulary(word.to_string()))
    }

    /// Lowercase, whitespace-split tokenization with UNK mapping.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        let lower = text.to_lowercase();
        let ids: Vec<TokenId> = lower
            .split_whitespace()
            .map(|w| self.index.get(w).copied().unwrap_or(self.unk))
            .collect();
        if ids.is_empty() {
            return Err(LmError::EmptyInput);
        }
        Ok(ids)
    }

    /// Tokenize and keep only the trailing `max_len` ids. The flag reports
    /// whether truncation happened.
    pub fn tokenize_truncated(
        &self,
        text: &str,
        max_len: usize,
    ) -> Result<(Vec<TokenId>, bool), LmError> {
        let ids = self.tokenize(text)?;
        if ids.len() > max_len {
            let start = ids.len() - max_len;
            Ok((ids[start..].to_vec(), true))
        } else {
            Ok((ids, false))
        }
    }
}

fn normalize_word(word: &str) -> Result<String, LmError> {
    let lower = word.to_lowercase();
    let mut parts = lower.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some(w), None) => Ok(w.to_string()),
        _ => Err(LmError::MultiTokenLabel(word.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        let mut counts = BTreeMap::new();
        counts.insert("the".to_string(), 100);
        counts.insert("cat".to_string(), 40);
        counts.insert("sat".to_string(), 40);
        counts.insert("yes".to_string(), 10);
        counts.insert("no".to_string(), 10);
        Vocabulary::from_counts(&counts, &["yes", "no"]).unwrap()
    }

    #[test]
    fn lookup_roundtrip_over_all_ids() {
        let v = vocab();
        for id in 0..v.len() {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
    }

    #[test]
    fn ranks_are_a_permutation() {
        let v = vocab();
        let mut seen = vec![false; v.len()];
        for id in 0..v.len() {
            let r = v.rank(id);
            assert!(!seen[r]);
            seen[r] = true;
            assert_eq!(v.id_at_rank(r), id);
        }
        // descending count, ties by token string
        assert_eq!(v.token(v.id_at_rank(0)), "the");
        assert_eq!(v.token(v.id_at_rank(1)), "cat");
        assert_eq!(v.token(v.id_at_rank(2)), "sat");
    }

    #[test]
    fn empty_input_is_rejected() {
        let v = vocab();
        assert!(matches!(v.tokenize(""), Err(LmError::EmptyInput)));
        assert!(matches!(v.tokenize("   \t\n"), Err(LmError::EmptyInput)));
    }

    #[test]
    fn case_folding_maps_to_one_id() {
        let v = vocab();
        let yes = v.id("yes").unwrap();
        assert_eq!(v.tokenize("Yes yes YES").unwrap(), vec![yes, yes, yes]);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = vocab();
        let ids = v.tokenize("the zebra").unwrap();
        assert_eq!(ids[0], v.id("the").unwrap());
        assert_eq!(ids[1], v.unk_id());
    }

    #[test]
    fn truncation_keeps_trailing_tokens_and_flags() {
        let v = vocab();
        let long_text = vec!["cat"; 10_000].join(" ");
        let (ids, truncated) = v.tokenize_truncated(&long_text, 245).unwrap();
        assert_eq!(ids.len(), 245);
        assert!(truncated);
        let (ids, truncated) = v.tokenize_truncated("the cat sat", 245).unwrap();
        assert_eq!(ids.len(), 3);
        assert!(!truncated);
    }

    #[test]
    fn truncation_output_is_a_suffix() {
        let v = vocab();
        let full = v.tokenize("the cat sat yes no").unwrap();
        let (cut, _) = v.tokenize_truncated("the cat sat yes no", 2).unwrap();
        assert_eq!(cut, full[full.len() - 2..].to_vec());
    }

    #[test]
    fn multi_token_label_rejected() {
        let v = vocab();
        assert!(matches!(
            v.label_id("not offensive"),
            Err(LmError::MultiTokenLabel(_))
        ));
        assert!(v.label_id("YES").is_ok());
        assert!(matches!(
            v.label_id("maybe"),
            Err(LmError::LabelWordNotInVocabulary(_))
        ));
    }

    #[test]
    fn serde_roundtrip_preserves_ranks() {
        let v = vocab();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.len(), v.len());
        for id in 0..v.len() {
            assert_eq!(back.rank(id), v.rank(id));
            assert_eq!(back.token(id), v.token(id));
        }
    }
}
