//! Structured blocks inside free-text agent replies.

use serde::de::DeserializeOwned;

use crate::error::{AgentError, Result};

/// Contents of the first fenced block tagged `tag` (or `json` as fallback).
pub fn fenced_block<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    for wanted in [tag, "json"] {
        let open = format!("```{wanted}");
        let mut rest = text;
        while let Some(start) = rest.find(&open) {
            let after = &rest[start + open.len()..];
            // the tag must end the fence line
            let Some(nl) = after.find('\n') else { break };
            if !after[..nl].trim().is_empty() {
                rest = after;
                continue;
            }
            let body = &after[nl + 1..];
            return body.find("```").map(|end| body[..end].trim());
        }
    }
    None
}

/// Parses the tagged block of a reply, or the whole reply when it has none.
pub fn parse_block<T: DeserializeOwned>(text: &str, tag: &str) -> Result<T> {
    let body = fenced_block(text, tag).unwrap_or(text.trim());
    serde_json::from_str(body).map_err(|e| AgentError::Parse {
        message: format!("`{tag}` block: {e}"),
        raw: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_tagged_block() {
        let text = "intro\n```objectives\n[1, 2]\n```\n```json\n[3]\n```";
        assert_eq!(fenced_block(text, "objectives"), Some("[1, 2]"));
        let v: Vec<i32> = parse_block(text, "objectives").unwrap();
        assert_eq!(v, vec![1, 2]);
    }

    #[test]
    fn falls_back_to_json_then_raw() {
        assert_eq!(fenced_block("x\n```json\n{}\n```", "report"), Some("{}"));
        let v: Vec<i32> = parse_block(" [7] ", "report").unwrap();
        assert_eq!(v, vec![7]);
        assert!(parse_block::<Vec<i32>>("nope", "report").is_err());
    }
}
