use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::words;

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<unk>"];

/// Word-level token table. Ids 0–3 are reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from a caption corpus; words are sorted for stability.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts.into_iter().flat_map(words).collect();
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(set.into_iter().filter(|w| !RESERVED.contains(&w.as_str())))
            .collect();
        Self::from_tokens(tokens).expect("reserved tokens present")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len()
            || tokens.iter().zip(RESERVED.iter()).any(|(t, r)| t != r)
        {
            return Err(Error::VocabMismatch(format!(
                "lines 0-3 must be {:?}",
                RESERVED
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::VocabMismatch(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Encodes text; returns the first out-of-vocabulary word on failure.
    pub fn encode(&self, text: &str) -> std::result::Result<Vec<u32>, String> {
        words(text)
            .into_iter()
            .map(|w| self.id(&w).ok_or(w))
            .collect()
    }

    /// Canonical text form: reserved tokens are dropped.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id > UNK)
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Content fingerprint, stored in decoder checkpoints.
    pub fn fingerprint(&self) -> String {
        crate::fingerprint::sha256_hex(self.to_text().as_bytes())
    }
}
