//! Sentence segmentation and tokenization.
//!
//! Sentences end at a run of `.`, `!` or `?` that is followed by whitespace
//! (or the end of the text). Tokens are lowercased; punctuation characters
//! become tokens of their own, except apostrophes and hyphens sitting between
//! two alphanumeric characters ("don't", "well-balanced").

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits `text` into sentences and each sentence into lowercase tokens.
pub fn segment_and_tokenize(text: &str) -> Vec<Vec<String>> {
    segment(text)
        .into_iter()
        .map(tokenize)
        .filter(|tokens| !tokens.is_empty())
        .collect()
}

/// Raw sentence spans, boundary punctuation included.
pub fn segment(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_terminal(c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = chars.peek() {
            if is_terminal(d) {
                end = j + d.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        let at_boundary = match chars.peek() {
            None => true,
            Some(&(_, d)) => d.is_whitespace(),
        };
        if at_boundary {
            let span = text[start..end].trim();
            if !span.is_empty() {
                out.push(span);
            }
            start = end;
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Lowercases and splits one sentence into word and punctuation tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        let joiner = matches!(c, '\'' | '-')
            && !word.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if joiner {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() && !c.is_control() {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|s| s.iter().map(|t| t.to_string()).collect())
            .collect()
    }

    #[test]
    fn two_terminal_marks() {
        assert_eq!(
            segment_and_tokenize("Great view. Nice staff!"),
            toks(&[&["great", "view", "."], &["nice", "staff", "!"]])
        );
    }

    #[test]
    fn empty_text() {
        assert!(segment_and_tokenize("").is_empty());
        assert!(segment_and_tokenize("   \n").is_empty());
    }

    #[test]
    fn abbreviation_is_split_literally() {
        assert_eq!(
            segment_and_tokenize("Mr. Smith stayed."),
            toks(&[&["mr", "."], &["smith", "stayed", "."]])
        );
    }

    #[test]
    fn decimal_point_does_not_split() {
        assert_eq!(
            segment_and_tokenize("It was 4.5 stars... Really?! Yes"),
            toks(&[
                &["it", "was", "4", ".", "5", "stars", ".", ".", "."],
                &["really", "?", "!"],
                &["yes"]
            ])
        );
    }

    #[test]
    fn inner_apostrophes_and_hyphens_stay() {
        assert_eq!(
            tokenize("Don't miss the well-balanced, 'hoppy' taste"),
            vec![
                "don't",
                "miss",
                "the",
                "well-balanced",
                ",",
                "'",
                "hoppy",
                "'",
                "taste"
            ]
        );
    }
}
