use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// One review record as read from the input file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReview {
    /// `r<line>`, 1-based line number in the input file.
    pub key: String,
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ReviewSet {
    pub reviews: Vec<RawReview>,
    pub errors: Vec<RecordError>,
    /// Well-formed records at or below the rating threshold.
    pub below_threshold: usize,
}

#[derive(Deserialize)]
struct Record {
    user_id: Value,
    item_id: Value,
    rating: f64,
    text: String,
}

fn id_string(v: &Value, field: &str) -> std::result::Result<String, String> {
    match v {
        Value::String(s) if !s.is_empty() => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(format!(
            "field `{field}` must be a non-empty string or a number"
        )),
    }
}

/// Parses JSON-lines review records, keeping those rated strictly above
/// `rating_threshold`. Malformed lines are reported, not fatal.
pub fn ingest_reviews(path: &Path, rating_threshold: f64) -> Result<ReviewSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_reviews(&text, rating_threshold))
}

pub fn parse_reviews(text: &str, rating_threshold: f64) -> ReviewSet {
    let mut set = ReviewSet::default();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Record>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                if !r.rating.is_finite() {
                    return Err("rating is not finite".to_string());
                }
                Ok(RawReview {
                    key: format!("r{lineno}"),
                    user: id_string(&r.user_id, "user_id")?,
                    item: id_string(&r.item_id, "item_id")?,
                    rating: r.rating,
                    text: r.text,
                })
            });
        match parsed {
            Ok(review) if review.rating > rating_threshold => set.reviews.push(review),
            Ok(_) => set.below_threshold += 1,
            Err(message) => {
                log::warn!("line {lineno}: skipping malformed record: {message}");
                set.errors.push(RecordError {
                    line: lineno,
                    message,
                });
            }
        }
    }
    set
}
