use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use super::{Document, ParseError};
use crate::windowing::EOF_CHAR;

/// Elements whose bodies make up a document's text across the TREC 4/5
/// sub-collections (FT, FBIS, FR94, LA Times).
pub const DEFAULT_CONTENT_TAGS: &[&str] = &["TEXT", "HEADLINE", "HEAD", "HL", "TI", "LP"];

/// Opens a collection file, transparently decompressing `.gz` files.
pub fn open_maybe_gzip(path: &Path) -> io::Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    Ok(match ext.as_deref() {
        Some("gz") => Box::new(BufReader::new(MultiGzDecoder::new(file))),
        _ => Box::new(BufReader::new(file)),
    })
}

/// Streams the `<DOC>` elements of a TREC SGML file.
///
/// Only the current document is buffered. Unknown tags are skipped; a
/// document missing its `<DOCNO>` or left unclosed at end of stream is an
/// error carrying the byte offset.
pub fn parse_trec_documents<R: BufRead>(reader: R, source_tag: &str) -> TrecDocuments<R> {
    TrecDocuments::new(reader, source_tag)
}

pub struct TrecDocuments<R> {
    reader: R,
    source: String,
    content_tags: Vec<String>,
    offset: u64,
    buf: Vec<u8>,
    finished: bool,
}

#[derive(Default)]
struct DocState {
    start: u64,
    docno: Option<Vec<u8>>,
    in_docno: bool,
    content_depth: usize,
    parts: Vec<String>,
    current: Vec<u8>,
}

impl<R: BufRead> TrecDocuments<R> {
    pub fn new(reader: R, source_tag: &str) -> Self {
        Self {
            reader,
            source: source_tag.to_string(),
            content_tags: DEFAULT_CONTENT_TAGS.iter().map(|t| t.to_string()).collect(),
            offset: 0,
            buf: Vec::new(),
            finished: false,
        }
    }

    pub fn with_content_tags<S: AsRef<str>>(mut self, tags: impl IntoIterator<Item = S>) -> Self {
        self.content_tags = tags
            .into_iter()
            .map(|t| t.as_ref().to_ascii_uppercase())
            .collect();
        self
    }

    fn fail(&mut self, err: ParseError) -> Option<Result<Document, ParseError>> {
        self.finished = true;
        Some(Err(err))
    }

    fn next_doc(&mut self) -> Option<Result<Document, ParseError>> {
        let mut doc: Option<DocState> = None;
        loop {
            self.buf.clear();
            let n = match self.reader.read_until(b'<', &mut self.buf) {
                Ok(n) => n,
                Err(e) => return self.fail(e.into()),
            };
            if n == 0 {
                self.finished = true;
                return match doc {
                    Some(_) => Some(Err(ParseError::UnclosedDoc { offset: self.offset })),
                    None => None,
                };
            }
            let tag_start = self.offset + n as u64 - 1;
            self.offset += n as u64;
            let saw_tag = self.buf.last() == Some(&b'<');
            let text_len = if saw_tag { n - 1 } else { n };
            if let Some(state) = doc.as_mut() {
                let text = &self.buf[..text_len];
                if state.in_docno {
                    state.docno.get_or_insert_with(Vec::new).extend_from_slice(text);
                } else if state.content_depth > 0 {
                    state.current.extend_from_slice(text);
                }
            }
            if !saw_tag {
                continue;
            }

            self.buf.clear();
            let n = match self.reader.read_until(b'>', &mut self.buf) {
                Ok(n) => n,
                Err(e) => return self.fail(e.into()),
            };
            self.offset += n as u64;
            if self.buf.last() != Some(&b'>') {
                // stream ended inside a tag
                self.finished = true;
                return match doc {
                    Some(_) => Some(Err(ParseError::UnclosedDoc { offset: self.offset })),
                    None => None,
                };
            }
            let Some((closing, name)) = tag_name(&self.buf[..n - 1]) else {
                // a bare `<` in running text
                if let Some(state) = doc.as_mut() {
                    if state.content_depth > 0 {
                        state.current.push(b'<');
                        state.current.extend_from_slice(&self.buf[..n]);
                    }
                }
                continue;
            };

            match (name.as_str(), closing) {
                ("DOC", false) => {
                    if doc.is_some() {
                        return self.fail(ParseError::NestedDoc { offset: tag_start });
                    }
                    doc = Some(DocState {
                        start: tag_start,
                        ..DocState::default()
                    });
                }
                ("DOC", true) => {
                    let Some(mut state) = doc.take() else {
                        return self.fail(ParseError::UnexpectedDocClose { offset: tag_start });
                    };
                    state.flush_part();
                    let docno = state
                        .docno
                        .as_deref()
                        .map(|d| decode_text(d).trim().to_string())
                        .filter(|d| !d.is_empty());
                    let Some(docno) = docno else {
                        return self.fail(ParseError::MissingDocno {
                            offset: state.start,
                        });
                    };
                    let text = state.parts.join("\n");
                    if text.is_empty() {
                        log::debug!("document {docno} has no text");
                    }
                    return Some(Ok(Document {
                        docno,
                        source: self.source.clone(),
                        text,
                    }));
                }
                (_, _) if doc.is_none() => {}
                ("DOCNO", closing) => {
                    if let Some(state) = doc.as_mut() {
                        state.in_docno = !closing;
                    }
                }
                (tag, closing) => {
                    let state = doc.as_mut().expect("checked above");
                    if self.content_tags.iter().any(|t| t == tag) {
                        if closing {
                            state.content_depth = state.content_depth.saturating_sub(1);
                            if state.content_depth == 0 {
                                state.flush_part();
                            }
                        } else {
                            state.content_depth += 1;
                        }
                    } else if state.content_depth > 0 {
                        // markup inside content separates words
                        state.current.push(b' ');
                    }
                }
            }
        }
    }
}

impl DocState {
    fn flush_part(&mut self) {
        if self.current.is_empty() {
            return;
        }
        let part = decode_text(&self.current);
        self.current.clear();
        let part = part.trim();
        if !part.is_empty() {
            self.parts.push(part.to_string());
        }
    }
}

impl<R: BufRead> Iterator for TrecDocuments<R> {
    type Item = Result<Document, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        self.next_doc()
    }
}

/// `(is_closing, UPPERCASE_NAME)` for a tag body such as `/TEXT` or `F P=100`.
fn tag_name(body: &[u8]) -> Option<(bool, String)> {
    let (closing, rest) = match body.first() {
        Some(b'/') => (true, &body[1..]),
        _ => (false, body),
    };
    if !rest.first()?.is_ascii_alphabetic() {
        return None;
    }
    let name: String = rest
        .iter()
        .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_' || **b == b'-')
        .map(|&b| b.to_ascii_uppercase() as char)
        .collect();
    Some((closing, name))
}

/// UTF-8 when valid, Latin-1 otherwise. Entities are decoded and the reserved
/// EOF symbol (along with other control characters) is scrubbed.
fn decode_text(bytes: &[u8]) -> String {
    let raw = match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    };
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw.as_str();
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let after = &rest[amp + 1..];
        match after.find(';').filter(|&end| end <= 16) {
            Some(end) if after[..end].chars().all(|c| c.is_ascii_alphanumeric() || c == '#') => {
                out.push_str(entity(&after[..end]));
                rest = &after[end + 1..];
            }
            _ => {
                out.push('&');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out.chars()
        .map(|c| {
            if c == EOF_CHAR || (c.is_control() && !matches!(c, '\n' | '\t' | '\r')) {
                ' '
            } else {
                c
            }
        })
        .collect()
}

fn entity(name: &str) -> &'static str {
    match name {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" => "'",
        // FR94 uses many typographic entities (&hyph;, &sect;, ...)
        _ => " ",
    }
}

#[cfg(test)]
fn read_documents<R: std::io::Read>(reader: R, source_tag: &str) -> Result<Vec<Document>, ParseError> {
    parse_trec_documents(BufReader::new(reader), source_tag).collect()
}
