use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: u32 = 0;

/// Token vocabulary. Id 0 is reserved for the unknown token; the remaining
/// ids follow descending training frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Counts tokens from `sentences` (training split only) and keeps the
    /// `max_size` most frequent.
    pub fn build<'a, I, S>(sentences: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for sentence in sentences {
            for tok in sentence {
                let tok = tok.as_ref();
                if tok != UNK_TOKEN {
                    *freq.entry(tok).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);

        let mut tokens = vec![UNK_TOKEN.to_string()];
        let mut counts = vec![0];
        for (tok, count) in ranked {
            tokens.push(tok.to_string());
            counts.push(count);
        }
        Self::from_parts(tokens, counts)
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            counts,
            index,
        }
    }

    /// Size including the unknown token.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// `token<TAB>id<TAB>count` per line, in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (i, (tok, count)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{tok}\t{i}\t{count}").expect("write to vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: message.to_string(),
            };
            let mut fields = line.split('\t');
            let tok = fields.next().ok_or_else(|| bad("missing token"))?;
            let id: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("missing or invalid id"))?;
            if id != i {
                return Err(bad("ids must be dense and in order"));
            }
            let count = fields.next().and_then(|s| s.parse().ok()).unwrap_or(0);
            tokens.push(tok.to_string());
            counts.push(count);
        }
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("id 0 must be {UNK_TOKEN}"),
            });
        }
        Ok(Self::from_parts(tokens, counts))
    }
}
