//! Language front end: tokenizer, parser and syntax tree for the supported
//! subset of a dynamically typed scripting language (Python-flavoured).
//!
//! Parsing is reached through [`LanguageAdapter`] so another grammar can be
//! plugged in without touching the analysis passes. Only [`PythonSubset`]
//! ships today.

pub mod ast;
mod lexer;
mod parser;
mod unparse;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{is_keyword, parse_expression, parse_fstring_body};
pub use unparse::unparse;

/// Syntax error with the offending location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub struct ParseError {
    pub path: String,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.path, self.line, self.column, self.message)
    }
}

/// A pluggable grammar.
pub trait LanguageAdapter: Send + Sync {
    /// Language tag stored on each scanned file.
    fn language(&self) -> &'static str;

    /// File extensions (without the dot) handled by default.
    fn default_extensions(&self) -> &'static [&'static str];

    fn parse_module(&self, path: &str, source: &str) -> Result<ast::Module, ParseError>;
}

/// The bundled adapter.
#[derive(Debug, Default, Clone, Copy)]
pub struct PythonSubset;

impl LanguageAdapter for PythonSubset {
    fn language(&self) -> &'static str {
        "python"
    }

    fn default_extensions(&self) -> &'static [&'static str] {
        &["py"]
    }

    fn parse_module(&self, path: &str, source: &str) -> Result<ast::Module, ParseError> {
        parser::parse_module(path, source)
    }
}

#[cfg(test)]
mod tests {
    use super::ast::*;
    use super::*;

    fn parse(src: &str) -> Module {
        PythonSubset.parse_module("t.py", src).unwrap()
    }

    #[test]
    fn parses_function_class_and_imports() {
        let m = parse(
            "import helpers\nfrom data import load as ld\n\nclass Model(Base):\n    def score(self, row: dict) -> float:\n        return row['x'] * 2\n",
        );
        assert_eq!(m.body.len(), 3);
        let StmtKind::ClassDef(c) = &m.body[2].kind else {
            panic!("expected class");
        };
        assert_eq!(c.name, "Model");
        let StmtKind::FunctionDef(f) = &c.body[0].kind else {
            panic!("expected def");
        };
        assert_eq!(f.params.len(), 2);
        assert_eq!(f.span, Span::new(5, 6));
        assert!(f.params[1].annotation.is_some());
    }

    #[test]
    fn parses_control_flow_and_formatting() {
        let src = r#"
def f(rows, *args, k=1, **kw):
    total = 0
    for i, row in enumerate(rows):
        if row["x"] > 1:
            total += row["x"]
        elif not row:
            continue
        else:
            break
    while total > 10:
        total //= 2
    try:
        x = int("3")
    except ValueError as e:
        x = 0
    finally:
        pass
    with open("p") as fh:
        data = fh.read()
    msg = "a %s b" % (total,)
    other = "{} {k}".format(total, k=k)
    log.info(f"total={total:.2f} {rows[0]['n']!r}")
    return [r for r in rows if r], {k: v for k, v in kw.items()}
"#;
        let m = parse(src);
        assert_eq!(m.body.len(), 1);
    }

    #[test]
    fn multi_line_call_span() {
        let m = parse("log.info(\n    'a %s',\n    x,\n)\n");
        assert_eq!(m.body[0].span, Span::new(1, 4));
    }

    #[test]
    fn syntax_error_reports_location() {
        let err = PythonSubset.parse_module("bad.py", "def f(:\n    pass\n").unwrap_err();
        assert_eq!(err.path, "bad.py");
        assert_eq!(err.line, 1);
    }

    #[test]
    fn fstring_fields_carry_expressions() {
        let m = parse("s = f'{a} and {b[\"k\"]:>4} {{lit}}'\n");
        let StmtKind::Assign { value, .. } = &m.body[0].kind else {
            panic!()
        };
        let ExprKind::FString(parts) = &value.kind else {
            panic!()
        };
        let fields = parts.iter().filter(|p| matches!(p, FStringPart::Field { .. })).count();
        assert_eq!(fields, 2);
        assert!(matches!(parts.last(), Some(FStringPart::Literal(s)) if s == " {lit}"));
    }

    #[test]
    fn semicolons_and_chained_assignment() {
        let m = parse("a = b = 1; c = a\n");
        assert_eq!(m.body.len(), 2);
        let StmtKind::Assign { targets, .. } = &m.body[0].kind else {
            panic!()
        };
        assert_eq!(targets.len(), 2);
    }
}
