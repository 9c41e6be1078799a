//! Suggestion-line grammar.
//!
//! One suggestion per line, in either form:
//!
//! ```text
//! name - color, shape - location
//! Name: name, Color: color, Shape: shape, Location: location
//! ```
//!
//! In the dash form the first comma separates the two halves; the name/color
//! split is the last `-` of the left half and the shape/location split the
//! first `-` of the right half, so hyphenated names ("Wall-mounted Shelf")
//! and hyphenated locations both survive. Bullets (`-`, `*`, `•`, `+`),
//! numbering (`1.`, `2)`, `(3)`), markdown bold and surrounding whitespace are
//! ignored, as is a trailing period. Blank lines are skipped; any other line
//! that does not fit becomes a [`ParseIssue`].

use serde::{Deserialize, Serialize};

use super::ObjectSuggestion;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    EmptyInput,
    MissingComma,
    MissingColor,
    MissingLocation,
    EmptyName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    /// 1-based; 0 for whole-input issues.
    pub line: usize,
    pub text: String,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSuggestions {
    pub suggestions: Vec<ObjectSuggestion>,
    pub issues: Vec<ParseIssue>,
}

pub fn parse_suggestions(raw: &str) -> ParsedSuggestions {
    let mut out = ParsedSuggestions::default();
    if raw.trim().is_empty() {
        out.issues.push(ParseIssue {
            line: 0,
            text: String::new(),
            kind: IssueKind::EmptyInput,
        });
        return out;
    }
    for (i, line) in raw.lines().enumerate() {
        let cleaned = strip_decorations(line);
        if cleaned.is_empty() {
            continue;
        }
        match parse_line(&cleaned) {
            Ok(s) => out.suggestions.push(s),
            Err(kind) => out.issues.push(ParseIssue {
                line: i + 1,
                text: line.trim().to_string(),
                kind,
            }),
        }
    }
    out
}

/// Parses one line, decorations included.
pub fn parse_suggestion_line(line: &str) -> Result<ObjectSuggestion, IssueKind> {
    parse_line(&strip_decorations(line))
}

fn strip_decorations(line: &str) -> String {
    let mut s = line.replace("**", "").replace("__", "");
    loop {
        let t = s.trim();
        let next = strip_bullet(t).or_else(|| strip_number(t)).unwrap_or(t).trim().to_string();
        if next == s {
            return next;
        }
        s = next;
    }
}

fn strip_bullet(s: &str) -> Option<&str> {
    let mut chars = s.chars();
    let c = chars.next()?;
    if !matches!(c, '-' | '*' | '•' | '+' | '–') {
        return None;
    }
    let rest = chars.as_str();
    rest.starts_with(char::is_whitespace).then_some(rest)
}

fn strip_number(s: &str) -> Option<&str> {
    let (open, body) = match s.strip_prefix('(') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let digits = body.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return None;
    }
    let rest = &body[digits..];
    let rest = if open {
        rest.strip_prefix(')')?
    } else {
        rest.strip_prefix(['.', ')', ':'])?
    };
    (rest.is_empty() || rest.starts_with(char::is_whitespace)).then_some(rest)
}

fn clean_field(s: &str) -> String {
    s.trim().trim_end_matches('.').trim().to_string()
}

fn parse_line(line: &str) -> Result<ObjectSuggestion, IssueKind> {
    if line.get(..5).is_some_and(|p| p.eq_ignore_ascii_case("name:")) {
        return parse_labeled(line);
    }
    let (left, right) = line.split_once(',').ok_or(IssueKind::MissingComma)?;
    let (name, color) = left.rsplit_once('-').ok_or(IssueKind::MissingColor)?;
    let (shape, location) = right.split_once('-').ok_or(IssueKind::MissingLocation)?;
    let name = clean_field(name);
    if name.is_empty() {
        return Err(IssueKind::EmptyName);
    }
    Ok(ObjectSuggestion {
        name,
        color: clean_field(color),
        shape: clean_field(shape),
        location: clean_field(location),
    })
}

fn parse_labeled(line: &str) -> Result<ObjectSuggestion, IssueKind> {
    const KEYS: [(&str, usize); 5] = [("name:", 0), ("color:", 1), ("colour:", 1), ("shape:", 2), ("location:", 3)];
    let lower = line.to_ascii_lowercase();
    let mut marks: Vec<(usize, usize, usize)> = Vec::new(); // (start, end, field)
    for (key, field) in KEYS {
        let mut from = 0;
        while let Some(p) = lower[from..].find(key) {
            let start = from + p;
            let at_boundary = start == 0
                || lower[..start]
                    .chars()
                    .next_back()
                    .is_some_and(|c| c == ',' || c == ';' || c.is_whitespace());
            if at_boundary && !marks.iter().any(|m| m.2 == field) {
                marks.push((start, start + key.len(), field));
                break;
            }
            from = start + key.len();
        }
    }
    marks.sort_unstable();
    let mut fields = [String::new(), String::new(), String::new(), String::new()];
    for (i, &(_, end, field)) in marks.iter().enumerate() {
        let stop = marks.get(i + 1).map_or(line.len(), |m| m.0);
        let value = line[end..stop].trim().trim_end_matches([',', ';']);
        fields[field] = clean_field(value);
    }
    let [name, color, shape, location] = fields;
    if name.is_empty() {
        return Err(IssueKind::EmptyName);
    }
    Ok(ObjectSuggestion {
        name,
        color,
        shape,
        location,
    })
}
