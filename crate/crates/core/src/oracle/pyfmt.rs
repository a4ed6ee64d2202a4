//! Python's `%` formatting, `str.format` and the format-spec mini-language,
//! over interpreter values.

use super::value::{float_repr, repr, to_str, TV, V};

pub type FmtResult = Result<String, String>;

fn as_int(v: &TV) -> Result<i64, String> {
    match &v.v {
        V::Bool(b) => Ok(i64::from(*b)),
        V::Int(i) => Ok(*i),
        V::Float(f) if f.is_finite() => Ok(f.trunc() as i64),
        _ => Err(format!("a number is required, not {}", v.type_name())),
    }
}

fn as_float(v: &TV) -> Result<f64, String> {
    match &v.v {
        V::Bool(b) => Ok(f64::from(u8::from(*b))),
        V::Int(i) => Ok(*i as f64),
        V::Float(f) => Ok(*f),
        _ => Err(format!("must be real number, not {}", v.type_name())),
    }
}

/// `d.ddde+XX` with Python's two-digit minimum exponent.
fn sci(x: f64, prec: usize, upper: bool) -> String {
    let s = format!("{:.*e}", prec, x.abs());
    let (m, e) = s.split_once('e').expect("exponent");
    let e: i32 = e.parse().expect("exponent digits");
    let out = format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs());
    if upper {
        out.to_uppercase()
    } else {
        out
    }
}

fn non_finite(x: f64, upper: bool) -> Option<String> {
    let s = if x.is_nan() {
        "nan"
    } else if x.is_infinite() {
        "inf"
    } else {
        return None;
    };
    Some(if upper { s.to_uppercase() } else { s.to_string() })
}

fn strip_zeros(s: &str) -> String {
    if let Some((m, e)) = s.split_once(['e', 'E']) {
        let sep = &s[m.len()..m.len() + 1];
        return format!("{}{sep}{e}", strip_zeros(m));
    }
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// `%g` of a non-negative magnitude.
fn general(x: f64, prec: usize, upper: bool, alt: bool) -> String {
    if let Some(s) = non_finite(x, upper) {
        return s;
    }
    let p = prec.max(1);
    if x == 0.0 {
        return if alt { format!("{:.*}", p - 1, 0.0) } else { "0".into() };
    }
    let probe = format!("{:.*e}", p - 1, x);
    let exp: i32 = probe.split_once('e').expect("exponent").1.parse().expect("digits");
    let s = if exp >= -4 && exp < p as i32 {
        format!("{:.*}", (p as i32 - 1 - exp) as usize, x)
    } else {
        sci(x, p - 1, upper)
    };
    if alt {
        s
    } else {
        strip_zeros(&s)
    }
}

/// Unsigned body, sign, and whether the value is numeric.
struct Rendered {
    body: String,
    negative: bool,
    numeric: bool,
}

fn group(digits: &str, sep: char) -> String {
    let (int, rest) = match digits.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => digits.split_at(i),
        None => (digits, ""),
    };
    let mut out = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            out.push(sep);
        }
        out.push(c);
    }
    out + rest
}

fn pad(r: Rendered, fill: char, align: char, sign: char, width: usize, zero: bool) -> String {
    let sign_str = if r.negative {
        "-"
    } else if r.numeric && sign == '+' {
        "+"
    } else if r.numeric && sign == ' ' {
        " "
    } else {
        ""
    };
    let len = sign_str.chars().count() + r.body.chars().count();
    if len >= width {
        return format!("{sign_str}{}", r.body);
    }
    let n = width - len;
    let (fill, align) = if zero && r.numeric { ('0', '=') } else { (fill, align) };
    let fills = |k: usize| fill.to_string().repeat(k);
    match align {
        '<' => format!("{sign_str}{}{}", r.body, fills(n)),
        '^' => format!("{}{sign_str}{}{}", fills(n / 2), r.body, fills(n - n / 2)),
        '=' => format!("{sign_str}{}{}", fills(n), r.body),
        _ => format!("{}{sign_str}{}", fills(n), r.body),
    }
}

/// Renders `v` per a format-spec mini-language string.
pub fn format_spec(v: &TV, spec: &str) -> FmtResult {
    let chars: Vec<char> = spec.chars().collect();
    let mut i = 0;
    let (mut fill, mut align) = (' ', '\0');
    if chars.len() >= 2 && "<>=^".contains(chars[1]) {
        fill = chars[0];
        align = chars[1];
        i = 2;
    } else if !chars.is_empty() && "<>=^".contains(chars[0]) {
        align = chars[0];
        i = 1;
    }
    let mut sign = '-';
    if i < chars.len() && "+- ".contains(chars[i]) {
        sign = chars[i];
        i += 1;
    }
    let mut alt = false;
    if i < chars.len() && chars[i] == '#' {
        alt = true;
        i += 1;
    }
    let mut zero = false;
    if i < chars.len() && chars[i] == '0' {
        zero = true;
        i += 1;
    }
    let mut width = 0usize;
    while i < chars.len() && chars[i].is_ascii_digit() {
        width = width * 10 + chars[i].to_digit(10).expect("digit") as usize;
        i += 1;
    }
    let mut grouping = None;
    if i < chars.len() && (chars[i] == ',' || chars[i] == '_') {
        grouping = Some(chars[i]);
        i += 1;
    }
    let mut prec = None;
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        let mut p = 0usize;
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            p = p * 10 + chars[i].to_digit(10).expect("digit") as usize;
            i += 1;
        }
        if i == start {
            return Err("format specifier missing precision".into());
        }
        prec = Some(p);
    }
    let ty = chars.get(i).copied();
    if i + usize::from(ty.is_some()) != chars.len() {
        return Err(format!("invalid format specifier {spec:?}"));
    }
    if align == '\0' {
        align = match (&v.v, ty) {
            (V::Int(_) | V::Float(_) | V::Bool(_), _) if ty != Some('s') => '>',
            _ => '<',
        };
    }
    let r = render(v, ty, prec, alt)?;
    let r = match grouping {
        Some(sep) if r.numeric => Rendered {
            body: group(&r.body, sep),
            ..r
        },
        _ => r,
    };
    Ok(pad(r, fill, align, sign, width, zero))
}

fn render(v: &TV, ty: Option<char>, prec: Option<usize>, alt: bool) -> Result<Rendered, String> {
    let numeric = |x: f64, body: String| Rendered {
        body,
        negative: x.is_sign_negative() && !x.is_nan(),
        numeric: true,
    };
    match (ty, &v.v) {
        (None | Some('s'), V::Str(_)) | (Some('s'), _) => {
            let s = to_str(v);
            let s = match prec {
                Some(p) => s.chars().take(p).collect(),
                None => s,
            };
            Ok(Rendered {
                body: s,
                negative: false,
                numeric: false,
            })
        }
        (None, V::Bool(_)) => Ok(Rendered {
            body: to_str(v),
            negative: false,
            numeric: false,
        }),
        (None | Some('d') | Some('n'), V::Int(_)) | (Some('d') | Some('n'), V::Bool(_)) if prec.is_none() => {
            let n = as_int(v)?;
            Ok(Rendered {
                body: n.unsigned_abs().to_string(),
                negative: n < 0,
                numeric: true,
            })
        }
        (Some(c @ ('x' | 'X' | 'o' | 'b')), V::Int(_) | V::Bool(_)) => {
            let n = as_int(v)?;
            let m = n.unsigned_abs();
            let (digits, prefix) = match c {
                'x' => (format!("{m:x}"), "0x"),
                'X' => (format!("{m:X}"), "0X"),
                'o' => (format!("{m:o}"), "0o"),
                _ => (format!("{m:b}"), "0b"),
            };
            Ok(Rendered {
                body: if alt { format!("{prefix}{digits}") } else { digits },
                negative: n < 0,
                numeric: true,
            })
        }
        (Some('c'), V::Int(i)) => Ok(Rendered {
            body: char::from_u32(*i as u32).ok_or("%c arg not in range")?.to_string(),
            negative: false,
            numeric: false,
        }),
        (Some(c @ ('f' | 'F' | 'e' | 'E' | 'g' | 'G' | '%')), V::Int(_) | V::Float(_) | V::Bool(_)) => {
            let x = as_float(v)?;
            let upper = c.is_ascii_uppercase();
            let p = prec.unwrap_or(6);
            let a = x.abs();
            let body = match c {
                'f' | 'F' => non_finite(x, upper).unwrap_or_else(|| format!("{a:.p$}")),
                'e' | 'E' => non_finite(x, upper).unwrap_or_else(|| sci(a, p, upper)),
                '%' => non_finite(x, false).map_or_else(|| format!("{:.p$}%", a * 100.0), |s| format!("{s}%")),
                _ => general(a, p, upper, alt),
            };
            Ok(numeric(x, body))
        }
        (None, V::Float(x)) => {
            let a = x.abs();
            let body = match prec {
                None => float_repr(a),
                Some(p) => {
                    let s = general(a, p, false, false);
                    if s.contains(['.', 'e', 'n', 'i']) {
                        s
                    } else {
                        format!("{s}.0")
                    }
                }
            };
            Ok(numeric(*x, body))
        }
        (None, _) => Ok(Rendered {
            body: to_str(v),
            negative: false,
            numeric: false,
        }),
        (Some(c), _) => Err(format!(
            "unknown format code '{c}' for object of type '{}'",
            v.type_name()
        )),
    }
}

/// Applies a `!r`/`!s`/`!a` conversion.
pub fn convert(v: &TV, conversion: Option<char>) -> TV {
    match conversion {
        Some('r') | Some('a') => TV::str(&repr(v)),
        Some('s') => TV::str(&to_str(v)),
        _ => v.clone(),
    }
}

/// Number of value-consuming conversions in a printf format, or `None` when
/// it uses mapping keys or `*` widths.
pub fn printf_arity(fmt: &str) -> Option<usize> {
    let specs = printf_specs(fmt).ok()?;
    if specs.iter().any(|s| s.star || s.keyed) {
        return None;
    }
    Some(specs.len())
}

struct PSpec {
    start: usize,
    end: usize,
    flags: String,
    width: Option<usize>,
    prec: Option<usize>,
    conv: char,
    star: bool,
    keyed: bool,
}

fn printf_specs(fmt: &str) -> Result<Vec<PSpec>, String> {
    let b: Vec<char> = fmt.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i] != '%' {
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        let mut keyed = false;
        if i < b.len() && b[i] == '(' {
            keyed = true;
            while i < b.len() && b[i] != ')' {
                i += 1;
            }
            i += 1;
        }
        let mut flags = String::new();
        while i < b.len() && "-+ #0".contains(b[i]) {
            flags.push(b[i]);
            i += 1;
        }
        let mut star = false;
        let mut width = None;
        if i < b.len() && b[i] == '*' {
            star = true;
            i += 1;
        } else {
            let mut w = 0;
            let s = i;
            while i < b.len() && b[i].is_ascii_digit() {
                w = w * 10 + b[i].to_digit(10).expect("digit") as usize;
                i += 1;
            }
            if i > s {
                width = Some(w);
            }
        }
        let mut prec = None;
        if i < b.len() && b[i] == '.' {
            i += 1;
            if i < b.len() && b[i] == '*' {
                star = true;
                i += 1;
            } else {
                let mut p = 0;
                while i < b.len() && b[i].is_ascii_digit() {
                    p = p * 10 + b[i].to_digit(10).expect("digit") as usize;
                    i += 1;
                }
                prec = Some(p);
            }
        }
        while i < b.len() && "hlL".contains(b[i]) {
            i += 1;
        }
        let Some(&conv) = b.get(i) else {
            return Err("incomplete format".into());
        };
        i += 1;
        if conv == '%' {
            continue;
        }
        if !"diouxXeEfFgGcrsa".contains(conv) {
            return Err(format!("unsupported format character '{conv}'"));
        }
        out.push(PSpec {
            start,
            end: i,
            flags,
            width,
            prec,
            conv,
            star,
            keyed,
        });
    }
    Ok(out)
}

/// `fmt % args`.
pub fn percent_format(fmt: &str, args: &[TV]) -> FmtResult {
    let specs = printf_specs(fmt)?;
    if specs.iter().any(|s| s.star || s.keyed) {
        return Err("mapping keys and * widths are not supported".into());
    }
    if specs.len() != args.len() {
        return Err(format!("format expects {} arguments, got {}", specs.len(), args.len()));
    }
    let chars: Vec<char> = fmt.chars().collect();
    let mut out = String::new();
    let mut pos = 0;
    let literal = |from: usize, to: usize| -> String { chars[from..to].iter().collect::<String>().replace("%%", "%") };
    for (s, v) in specs.iter().zip(args) {
        out.push_str(&literal(pos, s.start));
        out.push_str(&printf_one(s, v)?);
        pos = s.end;
    }
    out.push_str(&literal(pos, chars.len()));
    Ok(out)
}

fn printf_one(s: &PSpec, v: &TV) -> FmtResult {
    let left = s.flags.contains('-');
    let sign = if s.flags.contains('+') {
        '+'
    } else if s.flags.contains(' ') {
        ' '
    } else {
        '-'
    };
    let zero = s.flags.contains('0') && !left;
    let alt = s.flags.contains('#');
    let width = s.width.unwrap_or(0);
    let align = if left { '<' } else { '>' };
    let r = match s.conv {
        's' | 'r' | 'a' => {
            let text = if s.conv == 's' { to_str(v) } else { repr(v) };
            let text = match s.prec {
                Some(p) => text.chars().take(p).collect(),
                None => text,
            };
            return Ok(pad(
                Rendered {
                    body: text,
                    negative: false,
                    numeric: false,
                },
                ' ',
                align,
                '-',
                width,
                false,
            ));
        }
        'c' => {
            let c = match &v.v {
                V::Str(t) if t.chars().count() == 1 => t.to_string(),
                _ => char::from_u32(as_int(v)? as u32)
                    .ok_or("%c arg not in range")?
                    .to_string(),
            };
            return Ok(pad(
                Rendered {
                    body: c,
                    negative: false,
                    numeric: false,
                },
                ' ',
                align,
                '-',
                width,
                false,
            ));
        }
        'd' | 'i' | 'u' => {
            let n = as_int(v)?;
            let mut digits = n.unsigned_abs().to_string();
            if let Some(p) = s.prec {
                while digits.len() < p {
                    digits.insert(0, '0');
                }
            }
            Rendered {
                body: digits,
                negative: n < 0,
                numeric: true,
            }
        }
        'x' | 'X' | 'o' => {
            let n = as_int(v)?;
            let m = n.unsigned_abs();
            let digits = match s.conv {
                'x' => format!("{m:x}"),
                'X' => format!("{m:X}"),
                _ => format!("{m:o}"),
            };
            let prefix = match (alt, s.conv) {
                (false, _) => "",
                (true, 'x') => "0x",
                (true, 'X') => "0X",
                _ => "0o",
            };
            Rendered {
                body: format!("{prefix}{digits}"),
                negative: n < 0,
                numeric: true,
            }
        }
        c => {
            let x = as_float(v)?;
            let upper = c.is_ascii_uppercase();
            let p = s.prec.unwrap_or(6);
            let a = x.abs();
            let body = match c {
                'f' | 'F' => non_finite(x, upper).unwrap_or_else(|| format!("{a:.p$}")),
                'e' | 'E' => non_finite(x, upper).unwrap_or_else(|| sci(a, p, upper)),
                _ => general(a, p, upper, alt),
            };
            Rendered {
                body,
                negative: x.is_sign_negative() && !x.is_nan(),
                numeric: true,
            }
        }
    };
    Ok(pad(r, ' ', align, sign, width, zero))
}

/// A replacement field of a brace format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldArg {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BracePart {
    Text(String),
    Field {
        arg: FieldArg,
        /// `.attr` and `[key]` accessors after the argument.
        accessors: Vec<Accessor>,
        conversion: Option<char>,
        spec: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Accessor {
    Attr(String),
    Item(String),
}

/// Splits a `str.format` string. Auto and manual numbering cannot mix.
pub fn parse_brace_format(fmt: &str) -> Result<Vec<BracePart>, String> {
    let c: Vec<char> = fmt.chars().collect();
    let mut parts = Vec::new();
    let mut text = String::new();
    let mut auto = 0usize;
    let (mut used_auto, mut used_manual) = (false, false);
    let mut i = 0;
    while i < c.len() {
        match c[i] {
            '{' if c.get(i + 1) == Some(&'{') => {
                text.push('{');
                i += 2;
            }
            '}' if c.get(i + 1) == Some(&'}') => {
                text.push('}');
                i += 2;
            }
            '}' => return Err("single '}' encountered in format string".into()),
            '{' => {
                let mut depth = 1;
                let mut j = i + 1;
                while j < c.len() {
                    match c[j] {
                        '{' => depth += 1,
                        '}' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    j += 1;
                }
                if j >= c.len() {
                    return Err("expected '}' before end of string".into());
                }
                let inner: String = c[i + 1..j].iter().collect();
                if !text.is_empty() {
                    parts.push(BracePart::Text(std::mem::take(&mut text)));
                }
                let (head, spec) = match inner.find(':') {
                    Some(k) => (&inner[..k], inner[k + 1..].to_string()),
                    None => (&inner[..], String::new()),
                };
                let (head, conversion) = match head.find('!') {
                    Some(k) => (&head[..k], head[k + 1..].chars().next()),
                    None => (head, None),
                };
                let name_end = head.find(['.', '[']).unwrap_or(head.len());
                let name = &head[..name_end];
                let arg = if name.is_empty() {
                    used_auto = true;
                    auto += 1;
                    FieldArg::Index(auto - 1)
                } else if let Ok(n) = name.parse::<usize>() {
                    used_manual = true;
                    FieldArg::Index(n)
                } else {
                    FieldArg::Name(name.to_string())
                };
                if used_auto && used_manual {
                    return Err("cannot switch between automatic and manual field numbering".into());
                }
                let mut accessors = Vec::new();
                let rest: Vec<char> = head[name_end..].chars().collect();
                let mut k = 0;
                while k < rest.len() {
                    if rest[k] == '.' {
                        let s = k + 1;
                        k = s;
                        while k < rest.len() && rest[k] != '.' && rest[k] != '[' {
                            k += 1;
                        }
                        accessors.push(Accessor::Attr(rest[s..k].iter().collect()));
                    } else {
                        let s = k + 1;
                        while k < rest.len() && rest[k] != ']' {
                            k += 1;
                        }
                        accessors.push(Accessor::Item(rest[s..k].iter().collect()));
                        k += 1;
                    }
                }
                parts.push(BracePart::Field {
                    arg,
                    accessors,
                    conversion,
                    spec,
                });
                i = j + 1;
            }
            ch => {
                text.push(ch);
                i += 1;
            }
        }
    }
    if !text.is_empty() {
        parts.push(BracePart::Text(text));
    }
    Ok(parts)
}
