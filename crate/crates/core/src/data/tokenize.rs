use crate::error::{Error, Result};
use crate::model::DELIMITERS;

/// Lowercases, isolates the four delimiter marks, and splits on whitespace.
pub fn tokenize(text: &str) -> Result<Vec<String>> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for ch in text.chars().flat_map(char::to_lowercase) {
        if DELIMITERS.iter().any(|d| d.starts_with(ch)) {
            spaced.push(' ');
            spaced.push(ch);
            spaced.push(' ');
        } else {
            spaced.push(ch);
        }
    }
    let tokens: Vec<String> = spaced.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::domain("text has no tokens"));
    }
    Ok(tokens)
}
