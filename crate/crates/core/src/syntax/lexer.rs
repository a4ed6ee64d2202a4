//! Indentation-aware tokenizer.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(StrLit),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrLit {
    /// Decoded value. For f-strings this is the raw body.
    pub value: String,
    pub raw: bool,
    pub bytes: bool,
    pub fstring: bool,
    /// Line on which the string body starts.
    pub body_line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "**", "//",
    "<<", ">>", "<=", ">=", "==", "!=", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(", ")", "[", "]",
    "{", "}", ",", ":", ".", ";", "=", "!",
];

pub struct Lexer<'a> {
    path: &'a str,
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    indents: Vec<u32>,
    depth: usize,
    at_line_start: bool,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    pub fn new(path: &'a str, src: &str, first_line: u32) -> Self {
        Self {
            path,
            chars: src.chars().collect(),
            pos: 0,
            line: first_line,
            col: 1,
            indents: vec![0],
            depth: 0,
            at_line_start: true,
            tokens: Vec::new(),
        }
    }

    /// Tokenizes a bare expression (used for f-string fields): no indentation
    /// tracking, no trailing NEWLINE.
    pub fn tokenize_expression(mut self) -> Result<Vec<Token>, ParseError> {
        self.depth = 1;
        self.at_line_start = false;
        while self.pos < self.chars.len() {
            self.lex_one()?;
        }
        let line = self.line;
        self.push(Tok::Eof, line, line);
        Ok(self.tokens)
    }

    pub fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        while self.pos < self.chars.len() {
            if self.at_line_start && self.depth == 0 {
                self.handle_indentation()?;
                continue;
            }
            self.lex_one()?;
        }
        let line = self.line;
        if !matches!(
            self.tokens.last().map(|t| &t.tok),
            None | Some(Tok::Newline) | Some(Tok::Dedent)
        ) {
            self.push(Tok::Newline, line, line);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, line, line);
        }
        self.push(Tok::Eof, line, line);
        Ok(self.tokens)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            path: self.path.to_string(),
            line: self.line,
            column: self.col,
            message: msg.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, line: u32, end_line: u32) {
        self.tokens.push(Token {
            tok,
            line,
            col: self.col,
            end_line,
        });
    }

    fn handle_indentation(&mut self) -> Result<(), ParseError> {
        let mut width = 0u32;
        loop {
            match self.peek() {
                Some(' ') => {
                    width += 1;
                    self.bump();
                }
                Some('\t') => {
                    width = (width / 8 + 1) * 8;
                    self.bump();
                }
                Some('\x0c') => {
                    width = 0;
                    self.bump();
                }
                _ => break,
            }
        }
        match self.peek() {
            // blank or comment-only lines do not affect indentation
            None => return Ok(()),
            Some('\n') | Some('\r') => {
                self.bump();
                return Ok(());
            }
            Some('#') => {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                return Ok(());
            }
            _ => {}
        }
        self.at_line_start = false;
        let line = self.line;
        let current = *self.indents.last().unwrap_or(&0);
        if width > current {
            self.indents.push(width);
            self.push(Tok::Indent, line, line);
        } else if width < current {
            while width < *self.indents.last().unwrap_or(&0) {
                self.indents.pop();
                self.push(Tok::Dedent, line, line);
            }
            if width != *self.indents.last().unwrap_or(&0) {
                return Err(self.err("unindent does not match any outer indentation level"));
            }
        }
        Ok(())
    }

    fn lex_one(&mut self) -> Result<(), ParseError> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Ok(()),
        };
        let line = self.line;
        match c {
            ' ' | '\t' | '\x0c' | '\r' => {
                self.bump();
            }
            '#' => {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            }
            '\n' => {
                self.bump();
                if self.depth == 0 {
                    self.push(Tok::Newline, line, line);
                    self.at_line_start = true;
                }
            }
            '\\' if matches!(self.peek_at(1), Some('\n')) => {
                self.bump();
                self.bump();
            }
            '\\' if matches!(self.peek_at(1), Some('\r')) && matches!(self.peek_at(2), Some('\n')) => {
                self.bump();
                self.bump();
                self.bump();
            }
            c if c.is_ascii_digit() || (c == '.' && matches!(self.peek_at(1), Some(d) if d.is_ascii_digit())) => {
                self.lex_number()?;
            }
            c if is_ident_start(c) => {
                if let Some(prefix_len) = self.string_prefix_len() {
                    self.lex_string(prefix_len)?;
                } else {
                    let mut name = String::new();
                    while let Some(c) = self.peek() {
                        if is_ident_continue(c) {
                            name.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.push(Tok::Name(name), line, line);
                }
            }
            '"' | '\'' => self.lex_string(0)?,
            _ => {
                for op in OPERATORS {
                    if self.matches_str(op) {
                        for _ in 0..op.chars().count() {
                            self.bump();
                        }
                        match *op {
                            "(" | "[" | "{" => self.depth += 1,
                            ")" | "]" | "}" => self.depth = self.depth.saturating_sub(1),
                            _ => {}
                        }
                        self.push(Tok::Op(op), line, line);
                        return Ok(());
                    }
                }
                return Err(self.err(format!("unexpected character {c:?}")));
            }
        }
        Ok(())
    }

    fn matches_str(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, ch)| self.peek_at(i) == Some(ch))
    }

    fn string_prefix_len(&self) -> Option<usize> {
        let mut n = 0;
        while n < 3 {
            match self.peek_at(n) {
                Some(c) if "rRbBfFuU".contains(c) => n += 1,
                Some('"') | Some('\'') if n > 0 => return Some(n),
                _ => return None,
            }
        }
        None
    }

    fn lex_number(&mut self) -> Result<(), ParseError> {
        let line = self.line;
        let mut text = String::new();
        if self.peek() == Some('0') && matches!(self.peek_at(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B')) {
            self.bump();
            let radix = match self.bump().map(|c| c.to_ascii_lowercase()) {
                Some('x') => 16,
                Some('o') => 8,
                _ => 2,
            };
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    if c != '_' {
                        text.push(c);
                    }
                    self.bump();
                } else {
                    break;
                }
            }
            let v =
                i64::from_str_radix(&text, radix).map_err(|_| self.err(format!("invalid integer literal {text:?}")))?;
            self.push(Tok::Int(v), line, line);
            return Ok(());
        }
        let mut is_float = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == '_' {
                if c != '_' {
                    text.push(c);
                }
                self.bump();
            } else if c == '.' && !is_float && !text.contains(['e', 'E']) {
                is_float = true;
                text.push(c);
                self.bump();
            } else if (c == 'e' || c == 'E') && !text.contains(['e', 'E']) {
                let next = self.peek_at(1);
                let next2 = self.peek_at(2);
                let ok = matches!(next, Some(d) if d.is_ascii_digit())
                    || (matches!(next, Some('+' | '-')) && matches!(next2, Some(d) if d.is_ascii_digit()));
                if !ok {
                    break;
                }
                is_float = true;
                text.push(c);
                self.bump();
                if matches!(self.peek(), Some('+' | '-')) {
                    text.push(self.bump().unwrap_or('+'));
                }
            } else {
                break;
            }
        }
        if matches!(self.peek(), Some('j' | 'J')) {
            return Err(self.err("complex literals are not supported"));
        }
        if is_float {
            let v: f64 = text
                .parse()
                .map_err(|_| self.err(format!("invalid float literal {text:?}")))?;
            self.push(Tok::Float(v), line, line);
        } else {
            match text.parse::<i64>() {
                Ok(v) => self.push(Tok::Int(v), line, line),
                Err(_) => {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| self.err(format!("invalid integer literal {text:?}")))?;
                    self.push(Tok::Float(v), line, line);
                }
            }
        }
        Ok(())
    }

    fn lex_string(&mut self, prefix_len: usize) -> Result<(), ParseError> {
        let line = self.line;
        let mut raw = false;
        let mut bytes = false;
        let mut fstring = false;
        for _ in 0..prefix_len {
            match self.bump().map(|c| c.to_ascii_lowercase()) {
                Some('r') => raw = true,
                Some('b') => bytes = true,
                Some('f') => fstring = true,
                _ => {}
            }
        }
        let quote = self.bump().ok_or_else(|| self.err("unterminated string"))?;
        let triple = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        let body_line = self.line;
        let mut body = String::new();
        loop {
            let c = match self.peek() {
                Some(c) => c,
                None => return Err(self.err("unterminated string literal")),
            };
            if c == quote {
                if !triple {
                    self.bump();
                    break;
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    self.bump();
                    self.bump();
                    self.bump();
                    break;
                }
            }
            if c == '\n' && !triple {
                return Err(self.err("end of line while scanning string literal"));
            }
            if c == '\\' {
                body.push(c);
                self.bump();
                if let Some(n) = self.bump() {
                    body.push(n);
                }
                continue;
            }
            body.push(c);
            self.bump();
        }
        let value = if raw || fstring {
            body
        } else {
            decode_escapes(&body).map_err(|m| self.err(m))?
        };
        let end_line = self.line;
        self.push(
            Tok::Str(StrLit {
                value,
                raw,
                bytes,
                fstring,
                body_line,
            }),
            line,
            end_line,
        );
        Ok(())
    }
}

pub fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

pub fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Decodes backslash escapes of a non-raw string body.
pub fn decode_escapes(body: &str) -> Result<String, String> {
    let mut out = String::with_capacity(body.len());
    let mut it = body.chars().peekable();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        let Some(e) = it.next() else {
            out.push('\\');
            break;
        };
        match e {
            '\n' => {}
            '\\' => out.push('\\'),
            '\'' => out.push('\''),
            '"' => out.push('"'),
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            'a' => out.push('\x07'),
            'b' => out.push('\x08'),
            'f' => out.push('\x0c'),
            'v' => out.push('\x0b'),
            'x' | 'u' | 'U' => {
                let n = match e {
                    'x' => 2,
                    'u' => 4,
                    _ => 8,
                };
                let hex: String = (0..n).filter_map(|_| it.next()).collect();
                let code = u32::from_str_radix(&hex, 16)
                    .ok()
                    .filter(|_| hex.len() == n)
                    .ok_or_else(|| format!("truncated \\{e} escape"))?;
                out.push(char::from_u32(code).ok_or("invalid code point in escape")?);
            }
            '0'..='7' => {
                let mut code = e.to_digit(8).unwrap_or(0);
                for _ in 0..2 {
                    match it.peek() {
                        Some(d @ '0'..='7') => {
                            code = code * 8 + d.to_digit(8).unwrap_or(0);
                            it.next();
                        }
                        _ => break,
                    }
                }
                out.push(char::from_u32(code).unwrap_or('\u{fffd}'));
            }
            other => {
                out.push('\\');
                out.push(other);
            }
        }
    }
    Ok(out)
}
