//! Recursive-descent parser producing [`ast::Module`](super::ast::Module).

use std::sync::Arc;

use super::ast::*;
use super::lexer::{decode_escapes, Lexer, StrLit, Tok, Token};
use super::ParseError;

pub fn parse_module(path: &str, src: &str) -> Result<Module, ParseError> {
    let tokens = Lexer::new(path, src, 1).tokenize()?;
    let last_line = (src.lines().count() as u32).max(1);
    let mut p = Parser::new(path, tokens);
    let mut body = Vec::new();
    while !p.at_eof() {
        if p.eat_tok(&Tok::Newline) {
            continue;
        }
        body.extend(p.statement()?);
    }
    Ok(Module { body, last_line })
}

/// Parses a standalone expression whose text starts on `line`.
pub fn parse_expression(path: &str, src: &str, line: u32) -> Result<Expr, ParseError> {
    let tokens = Lexer::new(path, src, line).tokenize_expression()?;
    let mut p = Parser::new(path, tokens);
    let e = p.test_or_star_list()?;
    if !p.at_eof() {
        return Err(p.err("unexpected trailing tokens in expression"));
    }
    Ok(e)
}

struct Parser<'a> {
    path: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(path: &'a str, tokens: Vec<Token>) -> Self {
        Self { path, tokens, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos.min(self.tokens.len() - 1)].tok
    }

    fn peek_nth(&self, n: usize) -> &Tok {
        &self.tokens[(self.pos + n).min(self.tokens.len() - 1)].tok
    }

    fn line(&self) -> u32 {
        self.tokens[self.pos.min(self.tokens.len() - 1)].line
    }

    fn prev_end_line(&self) -> u32 {
        let mut i = self.pos;
        while i > 0 {
            i -= 1;
            let t = &self.tokens[i];
            if !matches!(t.tok, Tok::Newline | Tok::Indent | Tok::Dedent | Tok::Eof) {
                return t.end_line;
            }
        }
        self.line()
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let t = &self.tokens[self.pos.min(self.tokens.len() - 1)];
        ParseError {
            path: self.path.to_string(),
            line: t.line,
            column: t.col,
            message: msg.into(),
        }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_tok(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), ParseError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{op}', found {}", describe(self.peek()))))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{kw}', found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Name(n) if !is_keyword(&n) => {
                self.advance();
                Ok(n)
            }
            other => Err(self.err(format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn end_simple(&mut self) -> Result<(), ParseError> {
        if self.eat_tok(&Tok::Newline) || self.at_eof() {
            Ok(())
        } else {
            Err(self.err(format!("expected end of statement, found {}", describe(self.peek()))))
        }
    }

    // ---- statements -------------------------------------------------------

    fn statement(&mut self) -> Result<Vec<Stmt>, ParseError> {
        match self.peek().clone() {
            Tok::Op("@") => Ok(vec![self.decorated()?]),
            Tok::Name(n) => match n.as_str() {
                "def" => Ok(vec![self.funcdef(Vec::new(), false)?]),
                "async" if matches!(self.peek_nth(1), Tok::Name(k) if k == "def") => {
                    self.advance();
                    Ok(vec![self.funcdef(Vec::new(), true)?])
                }
                "async" => {
                    self.advance();
                    self.statement()
                }
                "class" => Ok(vec![self.classdef(Vec::new())?]),
                "if" => Ok(vec![self.if_stmt()?]),
                "for" => Ok(vec![self.for_stmt()?]),
                "while" => Ok(vec![self.while_stmt()?]),
                "with" => Ok(vec![self.with_stmt()?]),
                "try" => Ok(vec![self.try_stmt()?]),
                "match" if self.looks_like_match() => Err(self.err("match statements are not supported")),
                _ => self.simple_line(),
            },
            Tok::Indent => Err(self.err("unexpected indent")),
            _ => self.simple_line(),
        }
    }

    fn looks_like_match(&self) -> bool {
        // `match x:` at statement start; `match = 1` / `match(x)` are ordinary.
        !matches!(self.peek_nth(1), Tok::Op(_) | Tok::Newline | Tok::Eof)
    }

    fn simple_line(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut out = vec![self.small_stmt()?];
        while self.eat_op(";") {
            if matches!(self.peek(), Tok::Newline | Tok::Eof) {
                break;
            }
            out.push(self.small_stmt()?);
        }
        self.end_simple()?;
        Ok(out)
    }

    fn small_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.line();
        let kind = match self.peek().clone() {
            Tok::Name(n) => match n.as_str() {
                "pass" => {
                    self.advance();
                    StmtKind::Pass
                }
                "break" => {
                    self.advance();
                    StmtKind::Break
                }
                "continue" => {
                    self.advance();
                    StmtKind::Continue
                }
                "return" => {
                    self.advance();
                    if self.at_stmt_end() {
                        StmtKind::Return(None)
                    } else {
                        StmtKind::Return(Some(self.test_or_star_list()?))
                    }
                }
                "import" => self.import_stmt()?,
                "from" => self.import_from_stmt()?,
                "global" | "nonlocal" => {
                    self.advance();
                    let mut names = vec![self.ident()?];
                    while self.eat_op(",") {
                        names.push(self.ident()?);
                    }
                    if n == "global" {
                        StmtKind::Global(names)
                    } else {
                        StmtKind::Nonlocal(names)
                    }
                }
                "del" => {
                    self.advance();
                    let mut targets = vec![self.bitor()?];
                    while self.eat_op(",") {
                        if self.at_stmt_end() {
                            break;
                        }
                        targets.push(self.bitor()?);
                    }
                    StmtKind::Delete(targets)
                }
                "raise" => {
                    self.advance();
                    if self.at_stmt_end() {
                        StmtKind::Raise { exc: None, cause: None }
                    } else {
                        let exc = self.test()?;
                        let cause = if self.eat_kw("from") { Some(self.test()?) } else { None };
                        StmtKind::Raise { exc: Some(exc), cause }
                    }
                }
                "assert" => {
                    self.advance();
                    let test = self.test()?;
                    let msg = if self.eat_op(",") { Some(self.test()?) } else { None };
                    StmtKind::Assert { test, msg }
                }
                _ => self.expr_stmt()?,
            },
            _ => self.expr_stmt()?,
        };
        Ok(Stmt {
            kind,
            span: Span::new(start, self.prev_end_line()),
        })
    }

    fn at_stmt_end(&self) -> bool {
        matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Op(";"))
    }

    fn expr_stmt(&mut self) -> Result<StmtKind, ParseError> {
        let first = self.test_or_star_list()?;
        if self.is_op(":") {
            self.advance();
            check_target(&first).map_err(|m| self.err(m))?;
            let annotation = self.test()?;
            let value = if self.eat_op("=") {
                Some(self.assign_value()?)
            } else {
                None
            };
            return Ok(StmtKind::AnnAssign {
                target: first,
                annotation,
                value,
            });
        }
        if let Tok::Op(op) = self.peek().clone() {
            if let Some(bin) = aug_op(op) {
                self.advance();
                check_target(&first).map_err(|m| self.err(m))?;
                let value = self.assign_value()?;
                return Ok(StmtKind::AugAssign {
                    target: first,
                    op: bin,
                    value,
                });
            }
        }
        if self.is_op("=") {
            let mut targets = vec![first];
            let mut value;
            loop {
                self.expect_op("=")?;
                value = self.assign_value()?;
                if self.is_op("=") {
                    targets.push(value);
                } else {
                    break;
                }
            }
            for t in &targets {
                check_target(t).map_err(|m| self.err(m))?;
            }
            return Ok(StmtKind::Assign { targets, value });
        }
        Ok(StmtKind::Expr(first))
    }

    fn assign_value(&mut self) -> Result<Expr, ParseError> {
        if self.is_kw("yield") {
            return self.yield_expr();
        }
        self.test_or_star_list()
    }

    fn import_stmt(&mut self) -> Result<StmtKind, ParseError> {
        self.expect_kw("import")?;
        let mut names = vec![self.dotted_alias()?];
        while self.eat_op(",") {
            names.push(self.dotted_alias()?);
        }
        Ok(StmtKind::Import(names))
    }

    fn dotted(&mut self) -> Result<String, ParseError> {
        let mut name = self.ident()?;
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.ident()?);
        }
        Ok(name)
    }

    fn dotted_alias(&mut self) -> Result<Alias, ParseError> {
        let name = self.dotted()?;
        let asname = if self.eat_kw("as") { Some(self.ident()?) } else { None };
        Ok(Alias { name, asname })
    }

    fn import_from_stmt(&mut self) -> Result<StmtKind, ParseError> {
        self.expect_kw("from")?;
        let mut level = 0;
        loop {
            if self.eat_op(".") {
                level += 1;
            } else if self.eat_op("...") {
                level += 3;
            } else {
                break;
            }
        }
        let module = if self.is_kw("import") {
            None
        } else {
            Some(self.dotted()?)
        };
        self.expect_kw("import")?;
        let mut names = Vec::new();
        if self.eat_op("*") {
            names.push(Alias {
                name: "*".into(),
                asname: None,
            });
        } else {
            let paren = self.eat_op("(");
            loop {
                let name = self.ident()?;
                let asname = if self.eat_kw("as") { Some(self.ident()?) } else { None };
                names.push(Alias { name, asname });
                if !self.eat_op(",") {
                    break;
                }
                if paren && self.is_op(")") {
                    break;
                }
            }
            if paren {
                self.expect_op(")")?;
            }
        }
        Ok(StmtKind::ImportFrom { module, names, level })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_op(":")?;
        if self.eat_tok(&Tok::Newline) {
            if !self.eat_tok(&Tok::Indent) {
                return Err(self.err("expected an indented block"));
            }
            let mut body = Vec::new();
            while !self.eat_tok(&Tok::Dedent) {
                if self.at_eof() {
                    break;
                }
                if self.eat_tok(&Tok::Newline) {
                    continue;
                }
                body.extend(self.statement()?);
            }
            Ok(body)
        } else {
            self.simple_line()
        }
    }

    fn decorated(&mut self) -> Result<Stmt, ParseError> {
        let mut decorators = Vec::new();
        while self.eat_op("@") {
            decorators.push(self.test()?);
            if !self.eat_tok(&Tok::Newline) {
                return Err(self.err("expected newline after decorator"));
            }
        }
        if self.is_kw("def") {
            self.funcdef(decorators, false)
        } else if self.is_kw("async") {
            self.advance();
            self.funcdef(decorators, true)
        } else if self.is_kw("class") {
            self.classdef(decorators)
        } else {
            Err(self.err("decorator must precede a def or class"))
        }
    }

    fn funcdef(&mut self, decorators: Vec<Expr>, is_async: bool) -> Result<Stmt, ParseError> {
        let start = self.line();
        self.expect_kw("def")?;
        let name = self.ident()?;
        self.expect_op("(")?;
        let params = self.params(")", true)?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->") { Some(self.test()?) } else { None };
        let body = self.block()?;
        let span = Span::new(start, self.prev_end_line());
        let def = FunctionDef {
            name,
            params,
            returns,
            body,
            decorators,
            is_async,
            span,
        };
        Ok(Stmt {
            kind: StmtKind::FunctionDef(Arc::new(def)),
            span,
        })
    }

    fn params(&mut self, close: &str, annotations: bool) -> Result<Vec<Param>, ParseError> {
        let mut params = Vec::new();
        let mut keyword_only = false;
        while !self.is_op(close) {
            if self.eat_op("/") {
                // positional-only marker
            } else if self.eat_op("**") {
                let name = self.ident()?;
                let annotation = self.param_annotation(annotations)?;
                params.push(Param {
                    name,
                    annotation,
                    default: None,
                    kind: ParamKind::KwArgs,
                });
            } else if self.eat_op("*") {
                keyword_only = true;
                if !self.is_op(",") && !self.is_op(close) {
                    let name = self.ident()?;
                    let annotation = self.param_annotation(annotations)?;
                    params.push(Param {
                        name,
                        annotation,
                        default: None,
                        kind: ParamKind::VarArgs,
                    });
                }
            } else {
                let name = self.ident()?;
                let annotation = self.param_annotation(annotations)?;
                let default = if self.eat_op("=") { Some(self.test()?) } else { None };
                params.push(Param {
                    name,
                    annotation,
                    default,
                    kind: if keyword_only {
                        ParamKind::KeywordOnly
                    } else {
                        ParamKind::Normal
                    },
                });
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    fn param_annotation(&mut self, allowed: bool) -> Result<Option<Expr>, ParseError> {
        if allowed && self.eat_op(":") {
            Ok(Some(self.test()?))
        } else {
            Ok(None)
        }
    }

    fn classdef(&mut self, decorators: Vec<Expr>) -> Result<Stmt, ParseError> {
        let start = self.line();
        self.expect_kw("class")?;
        let name = self.ident()?;
        let mut bases = Vec::new();
        if self.eat_op("(") {
            for arg in self.call_args()? {
                bases.push(arg.value);
            }
            self.expect_op(")")?;
        }
        let body = self.block()?;
        let span = Span::new(start, self.prev_end_line());
        Ok(Stmt {
            kind: StmtKind::ClassDef(Arc::new(ClassDef {
                name,
                bases,
                body,
                decorators,
                span,
            })),
            span,
        })
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.line();
        self.advance(); // `if` or `elif`
        let test = self.named_test()?;
        let body = self.block()?;
        let orelse = if self.is_kw("elif") {
            vec![self.if_stmt()?]
        } else if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(Stmt {
            kind: StmtKind::If { test, body, orelse },
            span: Span::new(start, self.prev_end_line()),
        })
    }

    fn for_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.line();
        self.expect_kw("for")?;
        let target = self.target_list()?;
        self.expect_kw("in")?;
        let iter = self.test_or_star_list()?;
        let body = self.block()?;
        let orelse = if self.eat_kw("else") { self.block()? } else { Vec::new() };
        Ok(Stmt {
            kind: StmtKind::For {
                target,
                iter,
                body,
                orelse,
            },
            span: Span::new(start, self.prev_end_line()),
        })
    }

    fn while_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.line();
        self.expect_kw("while")?;
        let test = self.named_test()?;
        let body = self.block()?;
        let orelse = if self.eat_kw("else") { self.block()? } else { Vec::new() };
        Ok(Stmt {
            kind: StmtKind::While { test, body, orelse },
            span: Span::new(start, self.prev_end_line()),
        })
    }

    fn with_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.line();
        self.expect_kw("with")?;
        let paren = self.is_op("(") && self.paren_with_items();
        if paren {
            self.advance();
        }
        let mut items = Vec::new();
        loop {
            let context = self.test()?;
            let target = if self.eat_kw("as") { Some(self.target()?) } else { None };
            items.push(WithItem { context, target });
            if !self.eat_op(",") {
                break;
            }
            if paren && self.is_op(")") {
                break;
            }
        }
        if paren {
            self.expect_op(")")?;
        }
        let body = self.block()?;
        Ok(Stmt {
            kind: StmtKind::With { items, body },
            span: Span::new(start, self.prev_end_line()),
        })
    }

    /// Distinguishes `with (a as b, c):` from `with (a) as b:`.
    fn paren_with_items(&self) -> bool {
        let mut depth = 0usize;
        let mut i = self.pos;
        while i < self.tokens.len() {
            match &self.tokens[i].tok {
                Tok::Op("(") | Tok::Op("[") | Tok::Op("{") => depth += 1,
                Tok::Op(")") | Tok::Op("]") | Tok::Op("}") => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return matches!(self.tokens.get(i + 1).map(|t| &t.tok), Some(Tok::Op(":")));
                    }
                }
                Tok::Newline | Tok::Eof => return false,
                _ => {}
            }
            i += 1;
        }
        false
    }

    fn try_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.line();
        self.expect_kw("try")?;
        let body = self.block()?;
        let mut handlers = Vec::new();
        while self.is_kw("except") {
            let hstart = self.line();
            self.advance();
            self.eat_op("*");
            let (typ, name) = if self.is_op(":") {
                (None, None)
            } else {
                let t = self.test()?;
                let n = if self.eat_kw("as") || self.eat_op(",") {
                    Some(self.ident()?)
                } else {
                    None
                };
                (Some(t), n)
            };
            let hbody = self.block()?;
            handlers.push(ExceptHandler {
                typ,
                name,
                body: hbody,
                span: Span::new(hstart, self.prev_end_line()),
            });
        }
        let orelse = if self.eat_kw("else") { self.block()? } else { Vec::new() };
        let finalbody = if self.eat_kw("finally") {
            self.block()?
        } else {
            Vec::new()
        };
        if handlers.is_empty() && finalbody.is_empty() {
            return Err(self.err("try statement needs an except or finally clause"));
        }
        Ok(Stmt {
            kind: StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            },
            span: Span::new(start, self.prev_end_line()),
        })
    }

    // ---- expressions ------------------------------------------------------

    /// Comma-separated expressions with optional starring; a trailing comma or
    /// more than one element yields a tuple.
    fn test_or_star_list(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let first = self.test_or_star()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",") {
            if self.expr_cannot_start() {
                break;
            }
            elts.push(self.test_or_star()?);
        }
        Ok(Expr::new(ExprKind::Tuple(elts), Span::new(start, self.prev_end_line())))
    }

    fn expr_cannot_start(&self) -> bool {
        match self.peek() {
            Tok::Newline | Tok::Eof | Tok::Indent | Tok::Dedent => true,
            Tok::Op(o) => matches!(*o, ")" | "]" | "}" | "=" | ":" | ";") || aug_op(o).is_some(),
            Tok::Name(n) => matches!(n.as_str(), "in" | "for" | "if" | "else"),
            _ => false,
        }
    }

    fn test_or_star(&mut self) -> Result<Expr, ParseError> {
        if self.is_op("*") {
            let start = self.line();
            self.advance();
            let v = self.bitor()?;
            return Ok(Expr::new(
                ExprKind::Starred(Box::new(v)),
                Span::new(start, self.prev_end_line()),
            ));
        }
        self.named_test()
    }

    fn target(&mut self) -> Result<Expr, ParseError> {
        let e = if self.is_op("*") {
            let start = self.line();
            self.advance();
            let v = self.bitor()?;
            Expr::new(ExprKind::Starred(Box::new(v)), Span::new(start, self.prev_end_line()))
        } else {
            self.bitor()?
        };
        check_target(&e).map_err(|m| self.err(m))?;
        Ok(e)
    }

    fn target_list(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let first = self.target()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",") {
            if self.is_kw("in") || self.is_op("=") {
                break;
            }
            elts.push(self.target()?);
        }
        Ok(Expr::new(ExprKind::Tuple(elts), Span::new(start, self.prev_end_line())))
    }

    fn named_test(&mut self) -> Result<Expr, ParseError> {
        if let (Tok::Name(n), Tok::Op(":=")) = (self.peek().clone(), self.peek_nth(1).clone()) {
            if !is_keyword(&n) {
                let start = self.line();
                self.advance();
                self.advance();
                let value = self.test()?;
                return Ok(Expr::new(
                    ExprKind::NamedExpr {
                        target: n,
                        value: Box::new(value),
                    },
                    Span::new(start, self.prev_end_line()),
                ));
            }
        }
        self.test()
    }

    fn test(&mut self) -> Result<Expr, ParseError> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        let start = self.line();
        let body = self.or_test()?;
        if self.is_kw("if") {
            // A trailing `if` inside a comprehension belongs to the comprehension;
            // a conditional expression always has a matching `else`.
            let save = self.pos;
            self.advance();
            let test = self.or_test()?;
            if self.eat_kw("else") {
                let orelse = self.test()?;
                return Ok(Expr::new(
                    ExprKind::IfExp {
                        test: Box::new(test),
                        body: Box::new(body),
                        orelse: Box::new(orelse),
                    },
                    Span::new(start, self.prev_end_line()),
                ));
            }
            self.pos = save;
        }
        Ok(body)
    }

    fn test_nocond(&mut self) -> Result<Expr, ParseError> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        self.or_test()
    }

    fn lambda(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        self.expect_kw("lambda")?;
        let params = self.params(":", false)?;
        self.expect_op(":")?;
        let body = self.test()?;
        Ok(Expr::new(
            ExprKind::Lambda {
                params,
                body: Box::new(body),
            },
            Span::new(start, self.prev_end_line()),
        ))
    }

    fn yield_expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        self.expect_kw("yield")?;
        self.eat_kw("from");
        let value = if self.expr_cannot_start() {
            None
        } else {
            Some(Box::new(self.test_or_star_list()?))
        };
        Ok(Expr::new(
            ExprKind::Yield(value),
            Span::new(start, self.prev_end_line()),
        ))
    }

    fn or_test(&mut self) -> Result<Expr, ParseError> {
        self.bool_chain("or", BoolOp::Or, Self::and_test)
    }

    fn and_test(&mut self) -> Result<Expr, ParseError> {
        self.bool_chain("and", BoolOp::And, Self::not_test)
    }

    fn bool_chain(
        &mut self,
        kw: &str,
        op: BoolOp,
        next: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let start = self.line();
        let first = next(self)?;
        if !self.is_kw(kw) {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw(kw) {
            values.push(next(self)?);
        }
        Ok(Expr::new(
            ExprKind::BoolOp { op, values },
            Span::new(start, self.prev_end_line()),
        ))
    }

    fn not_test(&mut self) -> Result<Expr, ParseError> {
        if self.is_kw("not") {
            let start = self.line();
            self.advance();
            let operand = self.not_test()?;
            return Ok(Expr::new(
                ExprKind::UnaryOp {
                    op: UnaryOp::Not,
                    operand: Box::new(operand),
                },
                Span::new(start, self.prev_end_line()),
            ));
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> Option<CmpOp> {
        let op = match self.peek() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::NotEq,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::LtE,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::GtE,
            Tok::Name(n) if n == "in" => CmpOp::In,
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_nth(1), Tok::Name(m) if m == "not") {
                    self.advance();
                    self.advance();
                    return Some(CmpOp::IsNot);
                }
                CmpOp::Is
            }
            Tok::Name(n) if n == "not" => {
                if matches!(self.peek_nth(1), Tok::Name(m) if m == "in") {
                    self.advance();
                    self.advance();
                    return Some(CmpOp::NotIn);
                }
                return None;
            }
            _ => return None,
        };
        self.advance();
        Some(op)
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let left = self.bitor()?;
        let mut ops = Vec::new();
        let mut comparators = Vec::new();
        while let Some(op) = self.comp_op() {
            ops.push(op);
            comparators.push(self.bitor()?);
        }
        if ops.is_empty() {
            return Ok(left);
        }
        Ok(Expr::new(
            ExprKind::Compare {
                left: Box::new(left),
                ops,
                comparators,
            },
            Span::new(start, self.prev_end_line()),
        ))
    }

    fn binary_level(
        &mut self,
        ops: &[(&str, BinOp)],
        next: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let start = self.line();
        let mut left = next(self)?;
        'outer: loop {
            for (sym, op) in ops {
                if self.is_op(sym) {
                    self.advance();
                    let right = next(self)?;
                    left = Expr::new(
                        ExprKind::BinOp {
                            op: *op,
                            left: Box::new(left),
                            right: Box::new(right),
                        },
                        Span::new(start, self.prev_end_line()),
                    );
                    continue 'outer;
                }
            }
            return Ok(left);
        }
    }

    fn bitor(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[("|", BinOp::BitOr)], Self::bitxor)
    }

    fn bitxor(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[("^", BinOp::BitXor)], Self::bitand)
    }

    fn bitand(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[("&", BinOp::BitAnd)], Self::shift)
    }

    fn shift(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[("<<", BinOp::LShift), (">>", BinOp::RShift)], Self::arith)
    }

    fn arith(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(&[("+", BinOp::Add), ("-", BinOp::Sub)], Self::term)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        self.binary_level(
            &[
                ("*", BinOp::Mult),
                ("@", BinOp::MatMult),
                ("//", BinOp::FloorDiv),
                ("/", BinOp::Div),
                ("%", BinOp::Mod),
            ],
            Self::factor,
        )
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let op = match self.peek() {
            Tok::Op("-") => UnaryOp::Neg,
            Tok::Op("+") => UnaryOp::Pos,
            Tok::Op("~") => UnaryOp::Invert,
            _ => return self.power(),
        };
        let start = self.line();
        self.advance();
        let operand = self.factor()?;
        // fold negative numeric literals
        if op == UnaryOp::Neg {
            match operand.kind {
                ExprKind::Const(Constant::Int(v)) => {
                    return Ok(Expr::new(
                        ExprKind::Const(Constant::Int(-v)),
                        Span::new(start, self.prev_end_line()),
                    ))
                }
                ExprKind::Const(Constant::Float(v)) => {
                    return Ok(Expr::new(
                        ExprKind::Const(Constant::Float(-v)),
                        Span::new(start, self.prev_end_line()),
                    ))
                }
                _ => {}
            }
        }
        Ok(Expr::new(
            ExprKind::UnaryOp {
                op,
                operand: Box::new(operand),
            },
            Span::new(start, self.prev_end_line()),
        ))
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let base = if self.is_kw("await") {
            self.advance();
            let inner = self.primary()?;
            Expr::new(ExprKind::Await(Box::new(inner)), Span::new(start, self.prev_end_line()))
        } else {
            self.primary()?
        };
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::new(
                ExprKind::BinOp {
                    op: BinOp::Pow,
                    left: Box::new(base),
                    right: Box::new(exp),
                },
                Span::new(start, self.prev_end_line()),
            ));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let mut e = self.atom()?;
        loop {
            if self.eat_op(".") {
                let attr = self.ident()?;
                e = Expr::new(
                    ExprKind::Attribute {
                        value: Box::new(e),
                        attr,
                    },
                    Span::new(start, self.prev_end_line()),
                );
            } else if self.eat_op("(") {
                let args = self.call_args()?;
                self.expect_op(")")?;
                e = Expr::new(
                    ExprKind::Call {
                        func: Box::new(e),
                        args,
                    },
                    Span::new(start, self.prev_end_line()),
                );
            } else if self.eat_op("[") {
                let index = self.subscript_list()?;
                self.expect_op("]")?;
                e = Expr::new(
                    ExprKind::Subscript {
                        value: Box::new(e),
                        index: Box::new(index),
                    },
                    Span::new(start, self.prev_end_line()),
                );
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> Result<Vec<Arg>, ParseError> {
        let mut args = Vec::new();
        while !self.is_op(")") {
            let arg = if self.eat_op("**") {
                Arg {
                    kind: ArgKind::DoubleStar,
                    value: self.test()?,
                }
            } else if self.eat_op("*") {
                Arg {
                    kind: ArgKind::Star,
                    value: self.test()?,
                }
            } else if let (Tok::Name(n), Tok::Op("=")) = (self.peek().clone(), self.peek_nth(1).clone()) {
                self.advance();
                self.advance();
                Arg {
                    kind: ArgKind::Keyword(n),
                    value: self.test()?,
                }
            } else {
                let start = self.line();
                let v = self.named_test()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let generators = self.comp_for()?;
                    Arg {
                        kind: ArgKind::Positional,
                        value: Expr::new(
                            ExprKind::Comp {
                                kind: CompKind::Generator,
                                elt: Box::new(v),
                                value: None,
                                generators,
                            },
                            Span::new(start, self.prev_end_line()),
                        ),
                    }
                } else {
                    Arg {
                        kind: ArgKind::Positional,
                        value: v,
                    }
                }
            };
            args.push(arg);
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(args)
    }

    fn subscript_list(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let first = self.subscript()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            elts.push(self.subscript()?);
        }
        Ok(Expr::new(ExprKind::Tuple(elts), Span::new(start, self.prev_end_line())))
    }

    fn subscript(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let lower = if self.is_op(":") {
            None
        } else {
            let e = self.test_or_star()?;
            if !self.is_op(":") {
                return Ok(e);
            }
            Some(Box::new(e))
        };
        self.expect_op(":")?;
        let upper = if self.is_op(":") || self.is_op("]") || self.is_op(",") {
            None
        } else {
            Some(Box::new(self.test()?))
        };
        let step = if self.eat_op(":") {
            if self.is_op("]") || self.is_op(",") {
                None
            } else {
                Some(Box::new(self.test()?))
            }
        } else {
            None
        };
        Ok(Expr::new(
            ExprKind::Slice { lower, upper, step },
            Span::new(start, self.prev_end_line()),
        ))
    }

    fn comp_for(&mut self) -> Result<Vec<Comprehension>, ParseError> {
        let mut gens = Vec::new();
        while self.is_kw("for") || self.is_kw("async") {
            self.eat_kw("async");
            self.expect_kw("for")?;
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let mut ifs = Vec::new();
            while self.eat_kw("if") {
                ifs.push(self.test_nocond()?);
            }
            gens.push(Comprehension { target, iter, ifs });
        }
        Ok(gens)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let tok = self.peek().clone();
        match tok {
            Tok::Name(n) => {
                let kind = match n.as_str() {
                    "None" => ExprKind::Const(Constant::None),
                    "True" => ExprKind::Const(Constant::Bool(true)),
                    "False" => ExprKind::Const(Constant::Bool(false)),
                    "yield" => return Err(self.err("yield expression must be parenthesized here")),
                    kw if is_keyword(kw) => return Err(self.err(format!("unexpected keyword '{kw}'"))),
                    _ => ExprKind::Name(n.clone()),
                };
                self.advance();
                Ok(Expr::new(kind, Span::line(start)))
            }
            Tok::Int(v) => {
                self.advance();
                Ok(Expr::new(ExprKind::Const(Constant::Int(v)), Span::line(start)))
            }
            Tok::Float(v) => {
                self.advance();
                Ok(Expr::new(ExprKind::Const(Constant::Float(v)), Span::line(start)))
            }
            Tok::Str(_) => self.strings(),
            Tok::Op("...") => {
                self.advance();
                Ok(Expr::new(ExprKind::Const(Constant::Ellipsis), Span::line(start)))
            }
            Tok::Op("(") => {
                self.advance();
                if self.eat_op(")") {
                    return Ok(Expr::new(
                        ExprKind::Tuple(Vec::new()),
                        Span::new(start, self.prev_end_line()),
                    ));
                }
                if self.is_kw("yield") {
                    let y = self.yield_expr()?;
                    self.expect_op(")")?;
                    return Ok(y);
                }
                let first = self.test_or_star()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let generators = self.comp_for()?;
                    self.expect_op(")")?;
                    return Ok(Expr::new(
                        ExprKind::Comp {
                            kind: CompKind::Generator,
                            elt: Box::new(first),
                            value: None,
                            generators,
                        },
                        Span::new(start, self.prev_end_line()),
                    ));
                }
                if self.eat_op(")") {
                    let mut e = first;
                    e.span = Span::new(start, self.prev_end_line());
                    return Ok(e);
                }
                let mut elts = vec![first];
                while self.eat_op(",") {
                    if self.is_op(")") {
                        break;
                    }
                    elts.push(self.test_or_star()?);
                }
                self.expect_op(")")?;
                Ok(Expr::new(ExprKind::Tuple(elts), Span::new(start, self.prev_end_line())))
            }
            Tok::Op("[") => {
                self.advance();
                if self.eat_op("]") {
                    return Ok(Expr::new(
                        ExprKind::List(Vec::new()),
                        Span::new(start, self.prev_end_line()),
                    ));
                }
                let first = self.test_or_star()?;
                if self.is_kw("for") || self.is_kw("async") {
                    let generators = self.comp_for()?;
                    self.expect_op("]")?;
                    return Ok(Expr::new(
                        ExprKind::Comp {
                            kind: CompKind::List,
                            elt: Box::new(first),
                            value: None,
                            generators,
                        },
                        Span::new(start, self.prev_end_line()),
                    ));
                }
                let mut elts = vec![first];
                while self.eat_op(",") {
                    if self.is_op("]") {
                        break;
                    }
                    elts.push(self.test_or_star()?);
                }
                self.expect_op("]")?;
                Ok(Expr::new(ExprKind::List(elts), Span::new(start, self.prev_end_line())))
            }
            Tok::Op("{") => self.brace_display(),
            other => Err(self.err(format!("unexpected {}", describe(&other)))),
        }
    }

    fn brace_display(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        self.expect_op("{")?;
        if self.eat_op("}") {
            return Ok(Expr::new(
                ExprKind::Dict(Vec::new()),
                Span::new(start, self.prev_end_line()),
            ));
        }
        // dict display or comprehension
        if self.is_op("**") {
            return self.dict_rest(start, Vec::new());
        }
        let first = self.test_or_star()?;
        if self.eat_op(":") {
            let value = self.test()?;
            if self.is_kw("for") || self.is_kw("async") {
                let generators = self.comp_for()?;
                self.expect_op("}")?;
                return Ok(Expr::new(
                    ExprKind::Comp {
                        kind: CompKind::Dict,
                        elt: Box::new(first),
                        value: Some(Box::new(value)),
                        generators,
                    },
                    Span::new(start, self.prev_end_line()),
                ));
            }
            let entries = vec![(Some(first), value)];
            if self.eat_op(",") {
                return self.dict_rest(start, entries);
            }
            self.expect_op("}")?;
            return Ok(Expr::new(
                ExprKind::Dict(entries),
                Span::new(start, self.prev_end_line()),
            ));
        }
        if self.is_kw("for") || self.is_kw("async") {
            let generators = self.comp_for()?;
            self.expect_op("}")?;
            return Ok(Expr::new(
                ExprKind::Comp {
                    kind: CompKind::Set,
                    elt: Box::new(first),
                    value: None,
                    generators,
                },
                Span::new(start, self.prev_end_line()),
            ));
        }
        let mut elts = vec![first];
        while self.eat_op(",") {
            if self.is_op("}") {
                break;
            }
            elts.push(self.test_or_star()?);
        }
        self.expect_op("}")?;
        Ok(Expr::new(ExprKind::Set(elts), Span::new(start, self.prev_end_line())))
    }

    fn dict_rest(&mut self, start: u32, mut entries: Vec<(Option<Expr>, Expr)>) -> Result<Expr, ParseError> {
        while !self.is_op("}") {
            if self.eat_op("**") {
                entries.push((None, self.bitor()?));
            } else {
                let k = self.test()?;
                self.expect_op(":")?;
                let v = self.test()?;
                entries.push((Some(k), v));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op("}")?;
        Ok(Expr::new(
            ExprKind::Dict(entries),
            Span::new(start, self.prev_end_line()),
        ))
    }

    fn strings(&mut self) -> Result<Expr, ParseError> {
        let start = self.line();
        let mut lits: Vec<StrLit> = Vec::new();
        while let Tok::Str(s) = self.peek().clone() {
            self.advance();
            lits.push(s);
        }
        let span = Span::new(start, self.prev_end_line());
        if lits.iter().any(|l| l.fstring) {
            let mut parts: Vec<FStringPart> = Vec::new();
            for lit in &lits {
                let new_parts = if lit.fstring {
                    parse_fstring_body(self.path, &lit.value, lit.raw, lit.body_line)?
                } else {
                    vec![FStringPart::Literal(lit.value.clone())]
                };
                for part in new_parts {
                    match (parts.last_mut(), part) {
                        (Some(FStringPart::Literal(prev)), FStringPart::Literal(s)) => prev.push_str(&s),
                        (_, p) => parts.push(p),
                    }
                }
            }
            return Ok(Expr::new(ExprKind::FString(parts), span));
        }
        let bytes = lits.iter().any(|l| l.bytes);
        let value: String = lits.iter().map(|l| l.value.as_str()).collect();
        let c = if bytes {
            Constant::Bytes(value)
        } else {
            Constant::Str(value)
        };
        Ok(Expr::new(ExprKind::Const(c), span))
    }
}

/// Splits an f-string body into literal and replacement-field parts.
pub fn parse_fstring_body(path: &str, body: &str, raw: bool, body_line: u32) -> Result<Vec<FStringPart>, ParseError> {
    let chars: Vec<char> = body.chars().collect();
    let mut parts = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    let mut line = body_line;
    let err = |line: u32, msg: &str| ParseError {
        path: path.to_string(),
        line,
        column: 1,
        message: msg.to_string(),
    };
    let flush = |lit: &mut String, parts: &mut Vec<FStringPart>| -> Result<(), ParseError> {
        if !lit.is_empty() {
            let text = if raw {
                std::mem::take(lit)
            } else {
                decode_escapes(lit).map_err(|m| err(body_line, &m))?
            };
            lit.clear();
            parts.push(FStringPart::Literal(text));
        }
        Ok(())
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
        }
        if c == '{' && chars.get(i + 1) == Some(&'{') {
            lit.push('{');
            i += 2;
            continue;
        }
        if c == '}' && chars.get(i + 1) == Some(&'}') {
            lit.push('}');
            i += 2;
            continue;
        }
        if c == '}' {
            return Err(err(line, "single '}' is not allowed in f-string"));
        }
        if c != '{' {
            if c == '\\' && !raw {
                lit.push(c);
                if let Some(n) = chars.get(i + 1) {
                    lit.push(*n);
                }
                i += 2;
                continue;
            }
            lit.push(c);
            i += 1;
            continue;
        }
        flush(&mut lit, &mut parts)?;
        // scan the replacement field
        i += 1;
        let field_line = line;
        let expr_start = i;
        let mut depth = 0usize;
        let mut quote: Option<char> = None;
        while i < chars.len() {
            let ch = chars[i];
            if let Some(q) = quote {
                if ch == q {
                    quote = None;
                }
                i += 1;
                continue;
            }
            match ch {
                '\'' | '"' => quote = Some(ch),
                '(' | '[' | '{' => depth += 1,
                ')' | ']' => depth = depth.saturating_sub(1),
                '}' if depth > 0 => depth -= 1,
                '}' | ':' if depth == 0 => break,
                '!' if depth == 0 && chars.get(i + 1) != Some(&'=') => break,
                '=' if depth == 0
                    && !matches!(chars.get(i + 1), Some('='))
                    && !matches!(chars.get(i.wrapping_sub(1)), Some('=' | '!' | '<' | '>')) =>
                {
                    break
                }
                '\n' => line += 1,
                _ => {}
            }
            i += 1;
        }
        let mut text: String = chars[expr_start..i].iter().collect();
        let mut debug_eq = false;
        if chars.get(i) == Some(&'=') {
            debug_eq = true;
            i += 1;
        }
        let mut conversion = None;
        if chars.get(i) == Some(&'!') {
            conversion = chars.get(i + 1).copied();
            i += 2;
        }
        let mut spec = None;
        if chars.get(i) == Some(&':') {
            i += 1;
            let spec_start = i;
            let mut d = 0usize;
            while i < chars.len() {
                match chars[i] {
                    '{' => d += 1,
                    '}' if d > 0 => d -= 1,
                    '}' => break,
                    _ => {}
                }
                i += 1;
            }
            spec = Some(chars[spec_start..i].iter().collect::<String>());
        }
        if chars.get(i) != Some(&'}') {
            return Err(err(field_line, "unterminated replacement field in f-string"));
        }
        i += 1;
        if debug_eq {
            parts.push(FStringPart::Literal(format!("{text}=")));
            if conversion.is_none() && spec.is_none() {
                conversion = Some('r');
            }
        }
        let trimmed = text.trim().to_string();
        if trimmed.is_empty() {
            return Err(err(field_line, "empty expression in f-string"));
        }
        let expr = parse_expression(path, &trimmed, field_line)?;
        text = trimmed;
        parts.push(FStringPart::Field {
            expr: Box::new(expr),
            text,
            conversion,
            spec,
        });
    }
    flush(&mut lit, &mut parts)?;
    Ok(parts)
}

fn aug_op(op: &str) -> Option<BinOp> {
    Some(match op {
        "+=" => BinOp::Add,
        "-=" => BinOp::Sub,
        "*=" => BinOp::Mult,
        "@=" => BinOp::MatMult,
        "/=" => BinOp::Div,
        "//=" => BinOp::FloorDiv,
        "%=" => BinOp::Mod,
        "**=" => BinOp::Pow,
        "<<=" => BinOp::LShift,
        ">>=" => BinOp::RShift,
        "|=" => BinOp::BitOr,
        "^=" => BinOp::BitXor,
        "&=" => BinOp::BitAnd,
        _ => return None,
    })
}

fn check_target(e: &Expr) -> Result<(), String> {
    match &e.kind {
        ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. } => Ok(()),
        ExprKind::Tuple(elts) | ExprKind::List(elts) => elts.iter().try_for_each(check_target),
        ExprKind::Starred(inner) => check_target(inner),
        _ => Err("cannot assign to expression".to_string()),
    }
}

pub fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "False"
            | "None"
            | "True"
            | "and"
            | "as"
            | "assert"
            | "async"
            | "await"
            | "break"
            | "class"
            | "continue"
            | "def"
            | "del"
            | "elif"
            | "else"
            | "except"
            | "finally"
            | "for"
            | "from"
            | "global"
            | "if"
            | "import"
            | "in"
            | "is"
            | "lambda"
            | "nonlocal"
            | "not"
            | "or"
            | "pass"
            | "raise"
            | "return"
            | "try"
            | "while"
            | "with"
            | "yield"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Name(n) => format!("'{n}'"),
        Tok::Int(v) => format!("number {v}"),
        Tok::Float(v) => format!("number {v}"),
        Tok::Str(_) => "string literal".into(),
        Tok::Op(o) => format!("'{o}'"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indent".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of file".into(),
    }
}
