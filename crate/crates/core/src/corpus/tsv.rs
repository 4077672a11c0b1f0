//! Tab-separated parallel corpus ingestion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsvCorpus {
    pub pairs: Vec<(String, String)>,
    pub malformed: Vec<MalformedLine>,
}

fn is_header(line: &str) -> bool {
    let mut cols = line.split('\t');
    matches!(
        (cols.next(), cols.next(), cols.next()),
        (Some(a), Some(b), None) if a.eq_ignore_ascii_case("source") && b.eq_ignore_ascii_case("target")
    )
}

/// Parses `source<TAB>target` lines. A first line `source<TAB>target` is
/// treated as a header; CR before LF is ignored. Other lines without
/// exactly two non-empty columns are reported by 1-based line number.
pub fn parse_tsv(text: &str) -> TsvCorpus {
    let mut pairs = Vec::new();
    let mut malformed = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        if i == 0 && is_header(line) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let reason = match cols.as_slice() {
            [s, t] if !s.is_empty() && !t.is_empty() => {
                pairs.push((s.to_string(), t.to_string()));
                continue;
            }
            [_, _] => "empty column".to_string(),
            c => format!("expected 2 tab-separated columns, found {}", c.len()),
        };
        malformed.push(MalformedLine { line: i + 1, reason });
    }
    TsvCorpus { pairs, malformed }
}

pub fn load_tsv(path: &Path) -> Result<TsvCorpus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    })?;
    let c = parse_tsv(&text);
    if c.pairs.is_empty() {
        let report = if c.malformed.is_empty() {
            "file is empty".to_string()
        } else {
            c.malformed
                .iter()
                .map(|m| format!("line {}: {}", m.line, m.reason))
                .collect::<Vec<_>>()
                .join("; ")
        };
        return Err(Error::EmptyCorpus {
            path: path.to_path_buf(),
            report,
        });
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_crlf_and_malformed() {
        let lf = parse_tsv("source\ttarget\na b\tx y\nonly\nc\td\n");
        let crlf = parse_tsv("source\ttarget\r\na b\tx y\r\nonly\r\nc\td\r\n");
        assert_eq!(lf, crlf);
        assert_eq!(lf.pairs, vec![("a b".into(), "x y".into()), ("c".into(), "d".into())]);
        assert_eq!(lf.malformed.len(), 1);
        assert_eq!(lf.malformed[0].line, 3);
    }
}
