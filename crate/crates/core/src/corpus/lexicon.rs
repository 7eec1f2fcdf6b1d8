use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense attribute index into an [`AttributeLexicon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeId(pub u32);

impl AttributeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Tokens must equal the lexicon entry as written.
    Exact,
    /// Lexicon entries are lowercased before matching.
    #[default]
    Lowercase,
}

/// Attribute vocabulary. Multiword entries match contiguous token runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeLexicon {
    surfaces: Vec<String>,
    patterns: Vec<Vec<String>>,
    mode: MatchMode,
}

impl AttributeLexicon {
    pub fn new<I, S>(entries: I, mode: MatchMode) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut surfaces = Vec::new();
        let mut patterns: Vec<Vec<String>> = Vec::new();
        for entry in entries {
            let words: Vec<String> = entry
                .as_ref()
                .split_whitespace()
                .map(|w| match mode {
                    MatchMode::Exact => w.to_string(),
                    MatchMode::Lowercase => w.to_lowercase(),
                })
                .collect();
            if words.is_empty() {
                continue;
            }
            if patterns.contains(&words) {
                log::warn!("duplicate attribute {:?} ignored", entry.as_ref());
                continue;
            }
            surfaces.push(words.join(" "));
            patterns.push(words);
        }
        AttributeLexicon {
            surfaces,
            patterns,
            mode,
        }
    }

    pub fn load(path: &Path, mode: MatchMode) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines(), mode))
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn surface(&self, id: AttributeId) -> &str {
        &self.surfaces[id.index()]
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn id_of(&self, surface: &str) -> Option<AttributeId> {
        self.surfaces
            .iter()
            .position(|s| s == surface)
            .map(|i| AttributeId(i as u32))
    }

    /// Every attribute whose surface form occurs in `tokens`.
    pub fn tag<S: AsRef<str>>(&self, tokens: &[S]) -> BTreeSet<AttributeId> {
        let mut found = BTreeSet::new();
        for (id, pattern) in self.patterns.iter().enumerate() {
            let n = pattern.len();
            if n > tokens.len() {
                continue;
            }
            let hit = tokens
                .windows(n)
                .any(|w| w.iter().zip(pattern).all(|(t, p)| t.as_ref() == p));
            if hit {
                found.insert(AttributeId(id as u32));
            }
        }
        found
    }
}

/// Free-function form of [`AttributeLexicon::tag`].
pub fn tag_attributes<S: AsRef<str>>(
    sentence: &[S],
    lexicon: &AttributeLexicon,
) -> BTreeSet<AttributeId> {
    lexicon.tag(sentence)
}
