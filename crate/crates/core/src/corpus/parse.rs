//! Readers for the UCI bag-of-words `docword` and `vocab` files.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use super::{Corpus, Vocabulary};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: missing header field {field}")]
    MissingHeader { line: usize, field: &'static str },
    #[error("line {line}: malformed integer {token:?}")]
    MalformedInteger { line: usize, token: String },
    #[error("line {line}: expected \"docID wordID count\"")]
    MalformedLine { line: usize },
    #[error("line {line}: docID out of range ({id} not in 1..={max})")]
    DocIdOutOfRange { line: usize, id: u64, max: usize },
    #[error("line {line}: wordID out of range ({id} not in 1..={max})")]
    WordIdOutOfRange { line: usize, id: u64, max: usize },
    #[error("line {line}: count must be at least 1")]
    ZeroCount { line: usize },
    #[error("line {line}: count overflow")]
    CountOverflow { line: usize },
    #[error("line {line}: header declares NNZ={declared} but {found} entries were found")]
    NnzMismatch { line: usize, declared: usize, found: usize },
    #[error("line {line}: empty word")]
    EmptyWord { line: usize },
}

impl ParseError {
    /// 1-based line the error refers to, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Io(_) => None,
            ParseError::MissingHeader { line, .. }
            | ParseError::MalformedInteger { line, .. }
            | ParseError::MalformedLine { line }
            | ParseError::DocIdOutOfRange { line, .. }
            | ParseError::WordIdOutOfRange { line, .. }
            | ParseError::ZeroCount { line }
            | ParseError::CountOverflow { line }
            | ParseError::NnzMismatch { line, .. }
            | ParseError::EmptyWord { line } => Some(*line),
        }
    }
}

struct Lines<R> {
    reader: R,
    buf: String,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Self {
            reader,
            buf: String::new(),
            line: 0,
        }
    }

    /// Next line without its LF / CRLF terminator.
    /// Returns the 1-based line number alongside the text.
    fn next_line(&mut self) -> io::Result<Option<(usize, &str)>> {
        self.buf.clear();
        if self.reader.read_line(&mut self.buf)? == 0 {
            return Ok(None);
        }
        self.line += 1;
        let s = self.buf.strip_suffix('\n').unwrap_or(&self.buf);
        Ok(Some((self.line, s.strip_suffix('\r').unwrap_or(s))))
    }
}

fn parse_int(token: &str, line: usize) -> Result<u64, ParseError> {
    token.parse::<u64>().map_err(|_| ParseError::MalformedInteger {
        line,
        token: token.to_string(),
    })
}

fn header_field<R: BufRead>(lines: &mut Lines<R>, field: &'static str) -> Result<usize, ParseError> {
    let expected_line = lines.line + 1;
    let (line, text) = lines
        .next_line()?
        .ok_or(ParseError::MissingHeader { line: expected_line, field })?;
    let value = parse_int(text.trim(), line)?;
    usize::try_from(value).map_err(|_| ParseError::MalformedInteger {
        line,
        token: text.trim().to_string(),
    })
}

/// Parses a docword stream: three header lines `D`, `W`, `NNZ`, then `NNZ`
/// lines of 1-indexed `docID wordID count`. Duplicate pairs are summed and
/// blank lines are ignored.
pub fn parse_docword<R: BufRead>(reader: R) -> Result<Corpus, ParseError> {
    let mut lines = Lines::new(reader);
    let num_docs = header_field(&mut lines, "D")?;
    let num_words = header_field(&mut lines, "W")?;
    let declared = header_field(&mut lines, "NNZ")?;

    let mut triples: Vec<(u32, u32, u32, usize)> = Vec::with_capacity(declared.min(1 << 24));
    while let Some((line, text)) = lines.next_line()? {
        if text.trim().is_empty() {
            continue;
        }
        let mut fields = text.split_ascii_whitespace();
        let (Some(d), Some(w), Some(c), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(ParseError::MalformedLine { line });
        };
        let (d, w, c) = (parse_int(d, line)?, parse_int(w, line)?, parse_int(c, line)?);
        if d < 1 || d > num_docs as u64 {
            return Err(ParseError::DocIdOutOfRange { line, id: d, max: num_docs });
        }
        if w < 1 || w > num_words as u64 {
            return Err(ParseError::WordIdOutOfRange { line, id: w, max: num_words });
        }
        if c < 1 {
            return Err(ParseError::ZeroCount { line });
        }
        let c = u32::try_from(c).map_err(|_| ParseError::CountOverflow { line })?;
        if triples.len() == declared {
            return Err(ParseError::NnzMismatch {
                line,
                declared,
                found: declared + 1,
            });
        }
        triples.push(((d - 1) as u32, (w - 1) as u32, c, line));
    }
    if triples.len() != declared {
        return Err(ParseError::NnzMismatch {
            line: lines.line + 1,
            declared,
            found: triples.len(),
        });
    }

    triples.sort_unstable_by_key(|&(d, w, _, line)| (d, w, line));
    let mut docs: Vec<Vec<(usize, u32)>> = vec![Vec::new(); num_docs];
    for (d, w, c, line) in triples {
        let doc = &mut docs[d as usize];
        match doc.last_mut() {
            Some((last, total)) if *last == w as usize => {
                *total = total.checked_add(c).ok_or(ParseError::CountOverflow { line })?;
            }
            _ => doc.push((w as usize, c)),
        }
    }
    Ok(Corpus::from_documents(num_words, docs).expect("validated triples form a canonical corpus"))
}

/// One UTF-8 word per line; blank lines are errors.
pub fn parse_vocab<R: BufRead>(reader: R) -> Result<Vocabulary, ParseError> {
    let mut lines = Lines::new(reader);
    let mut words = Vec::new();
    while let Some((line, text)) = lines.next_line()? {
        if text.is_empty() {
            return Err(ParseError::EmptyWord { line });
        }
        words.push(text.to_string());
    }
    Ok(Vocabulary::new(words))
}

pub fn read_docword_file(path: &Path) -> Result<Corpus, ParseError> {
    parse_docword(BufReader::with_capacity(1 << 20, File::open(path)?))
}

pub fn read_vocab_file(path: &Path) -> Result<Vocabulary, ParseError> {
    parse_vocab(BufReader::new(File::open(path)?))
}
