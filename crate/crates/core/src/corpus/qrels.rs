use std::collections::HashSet;
use std::io::BufRead;

use super::{ParseError, QrelEntry};

/// Parses `topic_id iter docno relevance` lines. The iteration column is discarded.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Vec<QrelEntry>, ParseError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |message: String| ParseError::Qrels { line: lineno, message };
        let [topic, _iter, docno, relevance] = fields[..] else {
            return Err(err(format!("expected 4 columns, found {}", fields.len())));
        };
        let topic_id: u32 = topic
            .parse()
            .map_err(|_| err(format!("topic id is not an integer: {topic:?}")))?;
        let relevance: i64 = relevance
            .parse()
            .map_err(|_| err(format!("relevance is not an integer: {relevance:?}")))?;
        let relevance = u32::try_from(relevance)
            .map_err(|_| err(format!("relevance must be non-negative: {relevance}")))?;
        if !seen.insert((topic_id, docno.to_string())) {
            return Err(err(format!("duplicate judgment for ({topic_id}, {docno})")));
        }
        entries.push(QrelEntry {
            topic_id,
            docno: docno.to_string(),
            relevance,
        });
    }
    Ok(entries)
}

/// Docnos judged relevant (grade > 0) for `topic_id`, in qrels order.
pub fn relevant_docnos(qrels: &[QrelEntry], topic_id: u32) -> Vec<&str> {
    qrels
        .iter()
        .filter(|q| q.topic_id == topic_id && q.is_relevant())
        .map(|q| q.docno.as_str())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_relevant_and_non_relevant() {
        let q = parse_qrels("301 0 FBIS3-1 1\n\n301 0 FBIS3-2 0\n302 0 FT911-3 2\n".as_bytes()).unwrap();
        assert_eq!(
            q[0],
            QrelEntry {
                topic_id: 301,
                docno: "FBIS3-1".into(),
                relevance: 1
            }
        );
        assert_eq!(q[1].relevance, 0);
        assert!(!q[1].is_relevant());
        assert_eq!(relevant_docnos(&q, 301), ["FBIS3-1"]);
        assert_eq!(relevant_docnos(&q, 302), ["FT911-3"]);
    }

    #[test]
    fn bad_relevance_names_line() {
        let err = parse_qrels("301 0 FBIS3-3 x".as_bytes()).unwrap_err();
        assert!(matches!(err, ParseError::Qrels { line: 1, .. }), "{err}");
        let err = parse_qrels("301 0 A 1\nabc 0 B 1".as_bytes()).unwrap_err();
        assert!(matches!(err, ParseError::Qrels { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_duplicates_negative_and_short_lines() {
        assert!(parse_qrels("301 0 A 1\n301 0 A 0".as_bytes()).is_err());
        assert!(parse_qrels("301 0 A -1".as_bytes()).is_err());
        assert!(parse_qrels("301 0 A".as_bytes()).is_err());
    }
}
