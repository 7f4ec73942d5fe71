//! Brace-depth scanner that finds Java method bodies without a grammar.
//!
//! The source is first *masked*: comment bytes and the interior of string,
//! text-block and char literals become spaces (newlines are kept), so every
//! later step can work on byte offsets that still line up with the original
//! text. Braces in the masked text are then classified by looking at the
//! code between the previous `;`, `{` or `}` and the brace itself.

use std::ops::Range;

use super::{CodeUnit, Language, Origin, UnitId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    /// A `}` without an opener (depth 0 at `offset`) or end of input while
    /// `depth` braces were still open.
    #[error("unbalanced braces in {path}: depth {depth} at byte {offset}")]
    UnbalancedBraces { path: String, depth: usize, offset: usize },
}

struct Masked {
    bytes: Vec<u8>,
    docs: Vec<Range<usize>>,
}

fn blank(out: &mut [u8], range: Range<usize>) {
    for b in &mut out[range] {
        if *b != b'\n' {
            *b = b' ';
        }
    }
}

fn find(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from >= hay.len() {
        return None;
    }
    hay[from..].windows(needle.len()).position(|w| w == needle).map(|p| p + from)
}

/// End (exclusive) of a quoted literal starting at `start`, honouring escapes.
/// Plain string and char literals stop at a newline if unterminated.
fn quoted_end(src: &[u8], start: usize, quote: u8) -> usize {
    let mut j = start + 1;
    while j < src.len() {
        match src[j] {
            b'\\' => j += 2,
            b'\n' => return j,
            b if b == quote => return j + 1,
            _ => j += 1,
        }
    }
    src.len()
}

fn text_block_end(src: &[u8], start: usize) -> usize {
    let mut j = start + 3;
    while j < src.len() {
        if src[j] == b'\\' {
            j += 2;
        } else if src[j..].starts_with(b"\"\"\"") {
            return j + 3;
        } else {
            j += 1;
        }
    }
    src.len()
}

fn mask(src: &[u8]) -> Masked {
    let mut bytes = src.to_vec();
    let mut docs = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let rest = &src[i..];
        if rest.starts_with(b"//") {
            let end = find(src, b"\n", i).unwrap_or(src.len());
            blank(&mut bytes, i..end);
            i = end;
        } else if rest.starts_with(b"/*") {
            let end = find(src, b"*/", i + 2).map_or(src.len(), |p| p + 2);
            if rest.starts_with(b"/**") && !rest.starts_with(b"/**/") {
                docs.push(i..end);
            }
            blank(&mut bytes, i..end);
            i = end;
        } else if rest.starts_with(b"\"\"\"") {
            let end = text_block_end(src, i);
            blank(&mut bytes, i + 3..end.saturating_sub(3).max(i + 3));
            i = end;
        } else if rest[0] == b'"' || rest[0] == b'\'' {
            let end = quoted_end(src, i, rest[0]);
            let inner_end = if end > i + 1 && src[end - 1] == rest[0] { end - 1 } else { end };
            blank(&mut bytes, i + 1..inner_end);
            i = end;
        } else {
            i += 1;
        }
    }
    Masked { bytes, docs }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Punct(u8),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b == b'$' || b >= 0x80
}

fn is_ident_continue(b: u8) -> bool {
    is_ident_start(b) || b.is_ascii_digit()
}

fn tokenize(masked: &[u8], range: Range<usize>) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = range.start;
    while i < range.end {
        let b = masked[i];
        if b.is_ascii_whitespace() {
            i += 1;
        } else if is_ident_start(b) || b.is_ascii_digit() {
            let start = i;
            while i < range.end && is_ident_continue(masked[i]) {
                i += 1;
            }
            let word = String::from_utf8_lossy(&masked[start..i]).into_owned();
            out.push(Token { tok: Tok::Ident(word), start });
        } else {
            out.push(Token { tok: Tok::Punct(b), start: i });
            i += 1;
        }
    }
    out
}

const CONTROL_WORDS: &[&str] = &[
    "if",
    "for",
    "while",
    "switch",
    "catch",
    "synchronized",
    "try",
    "do",
    "else",
    "return",
    "new",
    "throw",
    "case",
    "assert",
    "super",
    "this",
    "finally",
    "yield",
];

fn is_word(t: &Token, w: &str) -> bool {
    matches!(&t.tok, Tok::Ident(s) if s == w)
}

fn is_punct(t: &Token, p: u8) -> bool {
    t.tok == Tok::Punct(p)
}

fn is_ident(t: &Token) -> bool {
    matches!(&t.tok, Tok::Ident(s) if s.as_bytes().first().is_some_and(|&b| is_ident_start(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    /// Class, interface, enum, record or anonymous class body.
    Type {
        enum_constants: bool,
    },
    Method {
        start: usize,
        header_start: usize,
    },
    Other,
}

fn declares_type(toks: &[Token]) -> Option<bool> {
    for (k, t) in toks.iter().enumerate() {
        let after_dot = k > 0 && is_punct(&toks[k - 1], b'.');
        if after_dot {
            continue;
        }
        if is_word(t, "enum") {
            return Some(true);
        }
        if is_word(t, "class") || is_word(t, "interface") {
            return Some(false);
        }
        if is_word(t, "record") && toks.get(k + 1).is_some_and(is_ident) {
            return Some(false);
        }
    }
    None
}

/// Index of the `(` matching the `)` at `close`.
fn matching_open(toks: &[Token], close: usize) -> Option<usize> {
    let mut depth = 0usize;
    for k in (0..=close).rev() {
        match toks[k].tok {
            Tok::Punct(b')') => depth += 1,
            Tok::Punct(b'(') => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

/// Walks back over `a.b.C` or `C<T>` before position `k` and reports whether
/// the chain is preceded by `new`.
fn preceded_by_new(toks: &[Token], mut k: usize) -> bool {
    // k is the index of the token right before '('.
    loop {
        if is_punct(&toks[k], b'>') {
            let mut depth = 0i32;
            loop {
                match toks[k].tok {
                    Tok::Punct(b'>') => depth += 1,
                    Tok::Punct(b'<') => depth -= 1,
                    _ => {}
                }
                if depth == 0 {
                    break;
                }
                if k == 0 {
                    return false;
                }
                k -= 1;
            }
            if k == 0 {
                return false;
            }
            k -= 1;
            continue;
        }
        if !is_ident(&toks[k]) || k == 0 {
            return false;
        }
        if is_word(&toks[k - 1], "new") {
            return true;
        }
        if is_punct(&toks[k - 1], b'.') && k >= 2 {
            k -= 2;
            continue;
        }
        return false;
    }
}

/// Offset of the first token after leading annotations.
fn skip_annotations(toks: &[Token]) -> usize {
    let mut k = 0;
    while k + 1 < toks.len()
        && is_punct(&toks[k], b'@')
        && is_ident(&toks[k + 1])
        && !is_word(&toks[k + 1], "interface")
    {
        k += 2;
        while k + 1 < toks.len() && is_punct(&toks[k], b'.') && is_ident(&toks[k + 1]) {
            k += 2;
        }
        if k < toks.len() && is_punct(&toks[k], b'(') {
            let mut depth = 0usize;
            while k < toks.len() {
                match toks[k].tok {
                    Tok::Punct(b'(') => depth += 1,
                    Tok::Punct(b')') => depth -= 1,
                    _ => {}
                }
                k += 1;
                if depth == 0 {
                    break;
                }
            }
        }
    }
    k
}

fn classify(masked: &[u8], header: Range<usize>, parent: Option<BlockKind>) -> BlockKind {
    let toks = tokenize(masked, header);
    if toks.is_empty() {
        return BlockKind::Other;
    }
    let in_type = matches!(parent, Some(BlockKind::Type { .. }));
    if matches!(parent, Some(BlockKind::Type { enum_constants: true })) && !declares_type(&toks).is_some() {
        // Body of an enum constant such as `RED(1) { ... }`.
        return BlockKind::Type { enum_constants: false };
    }
    if let Some(is_enum) = declares_type(&toks) {
        return BlockKind::Type { enum_constants: is_enum };
    }

    let Some(close) = toks.iter().rposition(|t| is_punct(t, b')')) else {
        return BlockKind::Other;
    };
    let tail = &toks[close + 1..];
    if !tail.is_empty() {
        let throws_clause = is_word(&tail[0], "throws")
            && tail[1..].iter().all(|t| is_ident(t) || matches!(t.tok, Tok::Punct(b'.' | b',' | b'<' | b'>' | b'?')));
        if !throws_clause {
            return BlockKind::Other;
        }
    }
    let Some(open) = matching_open(&toks, close) else {
        return BlockKind::Other;
    };
    if open == 0 {
        return BlockKind::Other;
    }
    let name_idx = open - 1;
    if preceded_by_new(&toks, name_idx) {
        return BlockKind::Type { enum_constants: false };
    }
    let name = &toks[name_idx];
    let is_keyword = matches!(&name.tok, Tok::Ident(s) if CONTROL_WORDS.contains(&s.as_str()));
    if !in_type || !is_ident(name) || is_keyword {
        return BlockKind::Other;
    }
    if name_idx > 0 && is_punct(&toks[name_idx - 1], b'.') {
        return BlockKind::Other;
    }
    let first = skip_annotations(&toks[..name_idx]);
    BlockKind::Method { start: toks[first].start, header_start: toks[0].start }
}

/// Finds every method body in a Java compilation unit.
///
/// Units are returned in order of their start offset; nested methods (inside
/// anonymous or local classes) are reported alongside their enclosing method.
pub fn extract_methods(source: &str, file_path: &str) -> Result<Vec<CodeUnit>, ExtractError> {
    let src = source.as_bytes();
    let Masked { bytes: masked, docs } = mask(src);
    let mut stack: Vec<BlockKind> = Vec::new();
    let mut last_delim = 0usize;
    let mut found: Vec<(Range<usize>, Option<Range<usize>>)> = Vec::new();

    for (i, &b) in masked.iter().enumerate() {
        match b {
            b'{' => {
                let kind = classify(&masked, last_delim..i, stack.last().copied());
                stack.push(kind);
                last_delim = i + 1;
            }
            b'}' => {
                let Some(kind) = stack.pop() else {
                    return Err(ExtractError::UnbalancedBraces { path: file_path.to_string(), depth: 0, offset: i });
                };
                if let BlockKind::Method { start, header_start } = kind {
                    let doc = docs
                        .iter()
                        .rev()
                        .find(|d| d.end <= header_start)
                        .filter(|d| src[d.end..header_start].iter().all(u8::is_ascii_whitespace))
                        .cloned();
                    found.push((start..i + 1, doc));
                }
                last_delim = i + 1;
            }
            b';' => {
                if let Some(BlockKind::Type { enum_constants }) = stack.last_mut() {
                    *enum_constants = false;
                }
                last_delim = i + 1;
            }
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(ExtractError::UnbalancedBraces {
            path: file_path.to_string(),
            depth: stack.len(),
            offset: src.len(),
        });
    }

    found.sort_by_key(|(span, _)| span.start);
    Ok(found
        .into_iter()
        .map(|(span, doc)| {
            let code = source[span.clone()].to_string();
            CodeUnit {
                id: UnitId::for_code(&code),
                existing_comment: doc.map(|d| source[d].to_string()),
                code,
                language: Language::Java,
                origin: Origin { path: file_path.to_string(), start: span.start, end: span.end },
                project: None,
            }
        })
        .collect())
}
