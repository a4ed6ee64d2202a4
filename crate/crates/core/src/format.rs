//! Grammar of the three format-string families recognised in log statements:
//! printf-style (`"%s %.2f"`), brace-style (`"{} {name:>4}"`), and the
//! replacement-field spec mini-language shared by brace and interpolated
//! literals.

use serde::{Deserialize, Serialize};

/// Shape constraint on the rendered text of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Text,
    Number,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("format string error at byte {offset}: {message}")]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

fn ferr(offset: usize, message: &str) -> FormatError {
    FormatError {
        offset,
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrintfSpec {
    pub mapping_key: Option<String>,
    /// Number of `*` width/precision arguments consumed before the value.
    pub star_args: usize,
    pub conversion: char,
    pub kind: SlotKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrintfPiece {
    Literal(String),
    Spec(PrintfSpec),
}

/// Parses a printf-style format. `%%` becomes a literal `%`.
pub fn parse_printf(fmt: &str) -> Result<Vec<PrintfPiece>, FormatError> {
    let bytes = fmt.as_bytes();
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    let mut lit_start = 0;
    while i < bytes.len() {
        if bytes[i] != b'%' {
            i += 1;
            continue;
        }
        lit.push_str(&fmt[lit_start..i]);
        let start = i;
        i += 1;
        if i >= bytes.len() {
            return Err(ferr(start, "incomplete format"));
        }
        if bytes[i] == b'%' {
            lit.push('%');
            i += 1;
            lit_start = i;
            continue;
        }
        let mut mapping_key = None;
        if bytes[i] == b'(' {
            let close = fmt[i..].find(')').ok_or_else(|| ferr(i, "unterminated mapping key"))?;
            mapping_key = Some(fmt[i + 1..i + close].to_string());
            i += close + 1;
        }
        while i < bytes.len() && b"-+ #0".contains(&bytes[i]) {
            i += 1;
        }
        let mut star_args = 0;
        if i < bytes.len() && bytes[i] == b'*' {
            star_args += 1;
            i += 1;
        } else {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            if i < bytes.len() && bytes[i] == b'*' {
                star_args += 1;
                i += 1;
            } else {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        while i < bytes.len() && b"hlL".contains(&bytes[i]) {
            i += 1;
        }
        let Some(&conv) = bytes.get(i) else {
            return Err(ferr(start, "incomplete format"));
        };
        let kind = match conv {
            b'd' | b'i' | b'u' | b'e' | b'E' | b'f' | b'F' | b'g' | b'G' => SlotKind::Number,
            b's' | b'r' | b'a' | b'c' | b'x' | b'X' | b'o' => SlotKind::Text,
            _ => return Err(ferr(i, "unsupported format character")),
        };
        i += 1;
        lit_start = i;
        if !lit.is_empty() {
            pieces.push(PrintfPiece::Literal(std::mem::take(&mut lit)));
        }
        pieces.push(PrintfPiece::Spec(PrintfSpec {
            mapping_key,
            star_args,
            conversion: conv as char,
            kind,
        }));
    }
    lit.push_str(&fmt[lit_start..]);
    if !lit.is_empty() {
        pieces.push(PrintfPiece::Literal(lit));
    }
    Ok(pieces)
}

/// Which argument a brace field draws from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BraceField {
    pub arg: FieldRef,
    /// `{0.attr}` / `{name[key]}` style accessors follow the argument.
    pub has_accessors: bool,
    pub conversion: Option<char>,
    pub spec: Option<String>,
    pub kind: SlotKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BracePiece {
    Literal(String),
    Field(BraceField),
}

/// Parses a `str.format` template, resolving automatic numbering.
pub fn parse_brace(fmt: &str) -> Result<Vec<BracePiece>, FormatError> {
    let chars: Vec<(usize, char)> = fmt.char_indices().collect();
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut auto = 0usize;
    let mut used_auto = false;
    let mut used_manual = false;
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        match c {
            '{' if chars.get(i + 1).map(|x| x.1) == Some('{') => {
                lit.push('{');
                i += 2;
            }
            '}' if chars.get(i + 1).map(|x| x.1) == Some('}') => {
                lit.push('}');
                i += 2;
            }
            '}' => return Err(ferr(off, "single '}' encountered")),
            '{' => {
                let mut j = i + 1;
                let mut depth = 0usize;
                while j < chars.len() {
                    match chars[j].1 {
                        '{' => depth += 1,
                        '}' if depth == 0 => break,
                        '}' => depth -= 1,
                        _ => {}
                    }
                    j += 1;
                }
                if j >= chars.len() {
                    return Err(ferr(off, "unterminated replacement field"));
                }
                let body: String = chars[i + 1..j].iter().map(|x| x.1).collect();
                if body.contains('{') {
                    return Err(ferr(off, "nested replacement fields are not supported"));
                }
                let (head, spec) = match body.split_once(':') {
                    Some((h, s)) => (h.to_string(), Some(s.to_string())),
                    None => (body.clone(), None),
                };
                let (name, conversion) = match head.split_once('!') {
                    Some((n, c)) => {
                        let mut cs = c.chars();
                        let conv = cs.next();
                        if cs.next().is_some() || !matches!(conv, Some('r' | 's' | 'a')) {
                            return Err(ferr(off, "invalid conversion"));
                        }
                        (n.to_string(), conv)
                    }
                    None => (head.clone(), None),
                };
                let split = name.find(['.', '[']).unwrap_or(name.len());
                let (first, rest) = name.split_at(split);
                let arg = if first.is_empty() {
                    if used_manual {
                        return Err(ferr(off, "cannot switch from manual to automatic numbering"));
                    }
                    used_auto = true;
                    auto += 1;
                    FieldRef::Index(auto - 1)
                } else if let Ok(n) = first.parse::<usize>() {
                    if used_auto {
                        return Err(ferr(off, "cannot switch from automatic to manual numbering"));
                    }
                    used_manual = true;
                    FieldRef::Index(n)
                } else {
                    FieldRef::Name(first.to_string())
                };
                if !lit.is_empty() {
                    pieces.push(BracePiece::Literal(std::mem::take(&mut lit)));
                }
                let kind = spec_kind(spec.as_deref(), conversion);
                pieces.push(BracePiece::Field(BraceField {
                    arg,
                    has_accessors: !rest.is_empty(),
                    conversion,
                    spec,
                    kind,
                }));
                i = j + 1;
            }
            _ => {
                lit.push(c);
                i += 1;
            }
        }
    }
    if !lit.is_empty() {
        pieces.push(BracePiece::Literal(lit));
    }
    Ok(pieces)
}

/// Slot kind implied by a replacement-field spec and conversion.
pub fn spec_kind(spec: Option<&str>, conversion: Option<char>) -> SlotKind {
    if conversion.is_some() {
        return SlotKind::Text;
    }
    match spec.and_then(|s| s.chars().last()) {
        Some('d' | 'n' | 'e' | 'E' | 'f' | 'F' | 'g' | 'G' | '%') => SlotKind::Number,
        _ => SlotKind::Text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs(p: &[PrintfPiece]) -> Vec<char> {
        p.iter()
            .filter_map(|x| match x {
                PrintfPiece::Spec(s) => Some(s.conversion),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn printf_pieces() {
        let p = parse_printf("customer %s scored %.2f (100%%)").unwrap();
        assert_eq!(specs(&p), vec!['s', 'f']);
        assert_eq!(p[0], PrintfPiece::Literal("customer ".into()));
        assert_eq!(p.last(), Some(&PrintfPiece::Literal(" (100%)".into())));
        assert!(parse_printf("50%").is_err());
        assert!(parse_printf("%q").is_err());
    }

    #[test]
    fn printf_flags_width_and_keys() {
        let p = parse_printf("%-5d|%+08.3f|%(k)s|%*d").unwrap();
        let s: Vec<&PrintfSpec> = p
            .iter()
            .filter_map(|x| match x {
                PrintfPiece::Spec(s) => Some(s),
                _ => None,
            })
            .collect();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].kind, SlotKind::Number);
        assert_eq!(s[2].mapping_key.as_deref(), Some("k"));
        assert_eq!(s[3].star_args, 1);
    }

    #[test]
    fn brace_numbering() {
        let p = parse_brace("{} and {} {{x}}").unwrap();
        let args: Vec<FieldRef> = p
            .iter()
            .filter_map(|x| match x {
                BracePiece::Field(f) => Some(f.arg.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(args, vec![FieldRef::Index(0), FieldRef::Index(1)]);
        assert_eq!(p.last(), Some(&BracePiece::Literal(" {x}".into())));
        assert!(parse_brace("{} {0}").is_err());
        assert!(parse_brace("{:{w}}").is_err());
        assert!(parse_brace("a } b").is_err());
    }

    #[test]
    fn brace_named_and_kinds() {
        let p = parse_brace("{name!r} {score:.2f} {0[x]}").unwrap();
        let fields: Vec<&BraceField> = p
            .iter()
            .filter_map(|x| match x {
                BracePiece::Field(f) => Some(f),
                _ => None,
            })
            .collect();
        assert_eq!(fields[0].arg, FieldRef::Name("name".into()));
        assert_eq!(fields[0].kind, SlotKind::Text);
        assert_eq!(fields[1].kind, SlotKind::Number);
        assert!(fields[2].has_accessors);
    }
}
