use std::io::Read;

use super::{ParseError, Topic};

/// Parses TREC topic files (`<top>`, `<num>`, `<title>`, ...). Only the title
/// is kept; `<desc>` and `<narr>` are ignored. Fields run until the next tag,
/// so both the classic unclosed style and closed `</title>` tags work.
pub fn parse_topics<R: Read>(mut reader: R) -> Result<Vec<Topic>, ParseError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let input = String::from_utf8_lossy(&bytes);

    let mut topics = Vec::new();
    let mut rest = input.as_ref();
    let mut index = 0;
    while let Some(start) = find_tag(rest, "top", false) {
        let body_start = start + rest[start..].find('>').map_or(0, |i| i + 1);
        let body_end = find_tag(&rest[body_start..], "top", true)
            .map_or(rest.len(), |i| body_start + i);
        topics.push(parse_topic(&rest[body_start..body_end], index)?);
        index += 1;
        rest = &rest[body_end..];
        if let Some(close) = rest.find('>') {
            rest = &rest[close + 1..];
        }
    }
    Ok(topics)
}

fn parse_topic(body: &str, index: usize) -> Result<Topic, ParseError> {
    let num = field(body, "num").ok_or(ParseError::TopicMissingNum { index })?;
    let digits: String = num
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect();
    if digits.is_empty() {
        return Err(ParseError::TopicMissingNum { index });
    }
    let id = digits.parse().map_err(|_| ParseError::Topic {
        index,
        message: format!("topic number out of range: {digits}"),
    })?;

    let title = field(body, "title").ok_or(ParseError::TopicMissingTitle { index })?;
    let mut title = title.split_whitespace().collect::<Vec<_>>().join(" ");
    // some topic sets prefix the title with a label
    if let Some(stripped) = title.strip_prefix("Topic:") {
        title = stripped.trim().to_string();
    }
    if title.is_empty() {
        return Err(ParseError::TopicMissingTitle { index });
    }
    Ok(Topic { id, title })
}

/// Text between `<name>` and the next tag.
fn field<'a>(body: &'a str, name: &str) -> Option<&'a str> {
    let start = find_tag(body, name, false)?;
    let after = &body[start..];
    let content = &after[after.find('>')? + 1..];
    Some(content.find('<').map_or(content, |end| &content[..end]))
}

/// Byte index of `<name>` (or `</name>`), case-insensitive.
fn find_tag(haystack: &str, name: &str, closing: bool) -> Option<usize> {
    let needle = if closing {
        format!("</{name}")
    } else {
        format!("<{name}")
    };
    let lower = haystack.to_ascii_lowercase();
    let mut from = 0;
    while let Some(i) = lower[from..].find(&needle) {
        let at = from + i;
        let next = lower.as_bytes().get(at + needle.len());
        if matches!(next, Some(b'>') | Some(b' ') | Some(b'\t') | Some(b'\n') | Some(b'\r')) {
            return Some(at);
        }
        from = at + needle.len();
    }
    None
}
