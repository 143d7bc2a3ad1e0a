//! JSON that tolerates redaction marks.
//!
//! Documents handed over for review are often abridged: members elided as
//! `[...]`, values masked as `[REDACTED]`, a bare `"key": {...}` fragment
//! without its enclosing braces, trailing commas left behind. Strict parsing
//! is always tried first; the rewrite below only runs when it fails.

use serde_json::Value;

use super::ArtifactError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Punct(char),
    Str(String),
    Bare(String),
    Mark,
}

/// Parses `bytes` as JSON; the flag reports whether redaction handling was needed.
pub fn parse_json_document(bytes: &[u8]) -> Result<(Value, bool), ArtifactError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ArtifactError::Json(e.to_string()))?;
    let text = text.trim_start_matches('\u{feff}');
    match serde_json::from_str(text) {
        Ok(v) => Ok((v, false)),
        Err(strict) => match normalize(text).and_then(|t| serde_json::from_str(&t).ok()) {
            Some(v) => Ok((v, true)),
            None => Err(ArtifactError::Json(strict.to_string())),
        },
    }
}

fn is_literal(word: &str) -> bool {
    matches!(word, "true" | "false" | "null") || serde_json::from_str::<serde_json::Number>(word).is_ok()
}

fn tokenize(text: &str) -> Option<Vec<Tok>> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '{' | '}' | '[' | ']' | ':' | ',' => {
                toks.push(Tok::Punct(c));
                chars.next();
            }
            '"' => {
                chars.next();
                let mut escaped = false;
                let mut end = None;
                for (j, d) in chars.by_ref() {
                    if escaped {
                        escaped = false;
                    } else if d == '\\' {
                        escaped = true;
                    } else if d == '"' {
                        end = Some(j);
                        break;
                    }
                }
                toks.push(Tok::Str(text[i..=end?].to_string()));
            }
            _ => {
                let mut end = text.len();
                while let Some(&(j, d)) = chars.peek() {
                    if d.is_whitespace() || "{}[]:,\"".contains(d) {
                        end = j;
                        break;
                    }
                    chars.next();
                }
                toks.push(Tok::Bare(text[i..end].to_string()));
            }
        }
    }
    Some(toks)
}

/// Collapses `[WORD ...]` groups and stray non-literal words into marks.
fn mark_redactions(toks: Vec<Tok>) -> Vec<Tok> {
    let mut out = Vec::with_capacity(toks.len());
    let mut i = 0;
    while i < toks.len() {
        if toks[i] == Tok::Punct('[') {
            let mut j = i + 1;
            while matches!(&toks.get(j), Some(Tok::Bare(w)) if !is_literal(w)) {
                j += 1;
            }
            if j > i + 1 && toks.get(j) == Some(&Tok::Punct(']')) {
                out.push(Tok::Mark);
                i = j + 1;
                continue;
            }
        }
        match &toks[i] {
            Tok::Bare(w) if !is_literal(w) => out.push(Tok::Mark),
            t => out.push(t.clone()),
        }
        i += 1;
    }
    out
}

fn normalize(text: &str) -> Option<String> {
    let toks = mark_redactions(tokenize(text)?);
    let wrap = matches!((toks.first(), toks.get(1)), (Some(Tok::Str(_)), Some(Tok::Punct(':'))));
    if !wrap && !matches!(toks.first(), Some(Tok::Punct('{' | '['))) {
        return None;
    }

    #[derive(PartialEq)]
    enum Frame {
        Object,
        Array,
    }
    let mut stack = Vec::new();
    if wrap {
        stack.push(Frame::Object);
    }
    let mut expect_key = wrap;
    let mut skip_comma = false;
    let mut out: Vec<String> = Vec::new();

    for tok in toks {
        let in_object = stack.last() == Some(&Frame::Object);
        match tok {
            Tok::Mark if in_object && expect_key => skip_comma = true,
            Tok::Mark => out.push("null".into()),
            Tok::Punct(',') if skip_comma => skip_comma = false,
            Tok::Punct(',') => {
                expect_key = in_object;
                out.push(",".into());
            }
            Tok::Punct(c @ ('{' | '[')) => {
                skip_comma = false;
                stack.push(if c == '{' { Frame::Object } else { Frame::Array });
                expect_key = c == '{';
                out.push(c.to_string());
            }
            Tok::Punct(c @ ('}' | ']')) => {
                skip_comma = false;
                if out.last().map(String::as_str) == Some(",") {
                    out.pop();
                }
                stack.pop();
                expect_key = false;
                out.push(c.to_string());
            }
            Tok::Punct(c) => {
                skip_comma = false;
                out.push(c.to_string());
            }
            Tok::Str(s) => {
                skip_comma = false;
                if in_object && expect_key {
                    expect_key = false;
                }
                out.push(s);
            }
            Tok::Bare(w) => {
                skip_comma = false;
                out.push(w);
            }
        }
    }
    if wrap {
        if out.last().map(String::as_str) == Some(",") {
            out.pop();
        }
        out.insert(0, "{".into());
        out.push("}".into());
    }
    Some(out.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(text: &str) -> Value {
        parse_json_document(text.as_bytes()).unwrap().0
    }

    #[test]
    fn strict_documents_untouched() {
        let (v, redacted) = parse_json_document(br#"{"a": [1, 2.5, "x"]}"#).unwrap();
        assert_eq!(v, json!({"a": [1, 2.5, "x"]}));
        assert!(!redacted);
    }

    #[test]
    fn elided_members_dropped() {
        let v = parse(r#"{"a": 1, [...] }"#);
        assert_eq!(v, json!({"a": 1}));
        let v = parse(r#"{"home": { [...] }, "b": null, [...]}"#);
        assert_eq!(v, json!({"home": {}, "b": null}));
    }

    #[test]
    fn masked_values_become_null() {
        let v = parse(r#"{"latitude": [REDACTED], "longitude": [REDACTED], "speed": 0}"#);
        assert_eq!(v, json!({"latitude": null, "longitude": null, "speed": 0}));
    }

    #[test]
    fn bare_fragment_wrapped() {
        let v = parse("\"lastPosition\": {\n \"altitude\": 1.5,\n [...]}");
        assert_eq!(v, json!({"lastPosition": {"altitude": 1.5}}));
    }

    #[test]
    fn array_elisions() {
        let v = parse(r#"[{"id": 1}, [...], ]"#);
        assert_eq!(v, json!([{"id": 1}, null]));
    }

    #[test]
    fn strings_with_brackets_preserved() {
        let v = parse(r#"{"note": "[not a mark], really", [...]}"#);
        assert_eq!(v, json!({"note": "[not a mark], really"}));
    }

    #[test]
    fn garbage_still_rejected() {
        assert!(matches!(parse_json_document(b"{\"a\": "), Err(ArtifactError::Json(_))));
        assert!(matches!(parse_json_document(b"\"unterminated"), Err(ArtifactError::Json(_))));
        assert!(matches!(parse_json_document(&[0xff, 0xfe, 0x00]), Err(ArtifactError::Json(_))));
    }

    proptest::proptest! {
        #[test]
        fn never_panics(text in "[\\[\\]{}:,\"a-z0-9. \\n]{0,80}") {
            let _ = parse_json_document(text.as_bytes());
        }
    }
}
