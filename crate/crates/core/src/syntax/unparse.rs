//! Renders expressions back to compact source text.

use super::ast::*;

pub fn unparse(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, 0);
    out
}

// Binding strength, loosely following the grammar levels.
fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Lambda { .. } => 1,
        ExprKind::IfExp { .. } => 2,
        ExprKind::BoolOp { op: BoolOp::Or, .. } => 3,
        ExprKind::BoolOp { op: BoolOp::And, .. } => 4,
        ExprKind::UnaryOp { op: UnaryOp::Not, .. } => 5,
        ExprKind::Compare { .. } => 6,
        ExprKind::BinOp { op, .. } => match op {
            BinOp::BitOr => 7,
            BinOp::BitXor => 8,
            BinOp::BitAnd => 9,
            BinOp::LShift | BinOp::RShift => 10,
            BinOp::Add | BinOp::Sub => 11,
            BinOp::Pow => 14,
            _ => 12,
        },
        ExprKind::UnaryOp { .. } => 13,
        ExprKind::Tuple(_) => 0,
        _ => 20,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let p = prec(e);
    let paren = p < min_prec;
    if paren {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::Const(c) => write_const(out, c),
        ExprKind::FString(parts) => {
            out.push_str("f\"");
            for part in parts {
                match part {
                    FStringPart::Literal(s) => out.push_str(&escape(s, '"').replace('{', "{{").replace('}', "}}")),
                    FStringPart::Field {
                        text, conversion, spec, ..
                    } => {
                        out.push('{');
                        out.push_str(text);
                        if let Some(c) = conversion {
                            out.push('!');
                            out.push(*c);
                        }
                        if let Some(s) = spec {
                            out.push(':');
                            out.push_str(s);
                        }
                        out.push('}');
                    }
                }
            }
            out.push('"');
        }
        ExprKind::Attribute { value, attr } => {
            write_expr(out, value, 20);
            out.push('.');
            out.push_str(attr);
        }
        ExprKind::Subscript { value, index } => {
            write_expr(out, value, 20);
            out.push('[');
            match &index.kind {
                ExprKind::Tuple(elts) if !elts.is_empty() => write_list(out, elts),
                _ => write_expr(out, index, 0),
            }
            out.push(']');
        }
        ExprKind::Slice { lower, upper, step } => {
            if let Some(l) = lower {
                write_expr(out, l, 1);
            }
            out.push(':');
            if let Some(u) = upper {
                write_expr(out, u, 1);
            }
            if let Some(s) = step {
                out.push(':');
                write_expr(out, s, 1);
            }
        }
        ExprKind::Call { func, args } => {
            write_expr(out, func, 20);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                match &a.kind {
                    ArgKind::Positional => {}
                    ArgKind::Keyword(k) => {
                        out.push_str(k);
                        out.push('=');
                    }
                    ArgKind::Star => out.push('*'),
                    ArgKind::DoubleStar => out.push_str("**"),
                }
                write_expr(out, &a.value, 1);
            }
            out.push(')');
        }
        ExprKind::BinOp { op, left, right } => {
            let right_assoc = *op == BinOp::Pow;
            write_expr(out, left, if right_assoc { p + 1 } else { p });
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, right, if right_assoc { p } else { p + 1 });
        }
        ExprKind::UnaryOp { op, operand } => {
            out.push_str(match op {
                UnaryOp::Not => "not ",
                UnaryOp::Neg => "-",
                UnaryOp::Pos => "+",
                UnaryOp::Invert => "~",
            });
            write_expr(out, operand, p);
        }
        ExprKind::BoolOp { op, values } => {
            let sep = match op {
                BoolOp::And => " and ",
                BoolOp::Or => " or ",
            };
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                write_expr(out, v, p + 1);
            }
        }
        ExprKind::Compare { left, ops, comparators } => {
            write_expr(out, left, p + 1);
            for (op, c) in ops.iter().zip(comparators) {
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                write_expr(out, c, p + 1);
            }
        }
        ExprKind::IfExp { test, body, orelse } => {
            write_expr(out, body, 3);
            out.push_str(" if ");
            write_expr(out, test, 3);
            out.push_str(" else ");
            write_expr(out, orelse, 2);
        }
        ExprKind::List(elts) => {
            out.push('[');
            write_list(out, elts);
            out.push(']');
        }
        ExprKind::Tuple(elts) => {
            if min_prec > 0 || elts.is_empty() {
                if !paren {
                    out.push('(');
                }
                write_list(out, elts);
                if elts.len() == 1 {
                    out.push(',');
                }
                if !paren {
                    out.push(')');
                }
            } else {
                write_list(out, elts);
                if elts.len() == 1 {
                    out.push(',');
                }
            }
        }
        ExprKind::Set(elts) => {
            out.push('{');
            write_list(out, elts);
            out.push('}');
        }
        ExprKind::Dict(entries) => {
            out.push('{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                match k {
                    Some(k) => {
                        write_expr(out, k, 1);
                        out.push_str(": ");
                    }
                    None => out.push_str("**"),
                }
                write_expr(out, v, 1);
            }
            out.push('}');
        }
        ExprKind::Comp {
            kind,
            elt,
            value,
            generators,
        } => {
            let (open, close) = match kind {
                CompKind::List => ('[', ']'),
                CompKind::Set | CompKind::Dict => ('{', '}'),
                CompKind::Generator => ('(', ')'),
            };
            out.push(open);
            write_expr(out, elt, 1);
            if let Some(v) = value {
                out.push_str(": ");
                write_expr(out, v, 1);
            }
            for g in generators {
                out.push_str(" for ");
                write_expr(out, &g.target, 0);
                out.push_str(" in ");
                write_expr(out, &g.iter, 3);
                for cond in &g.ifs {
                    out.push_str(" if ");
                    write_expr(out, cond, 3);
                }
            }
            out.push(close);
        }
        ExprKind::Lambda { params, body } => {
            out.push_str("lambda");
            for (i, prm) in params.iter().enumerate() {
                out.push_str(if i == 0 { " " } else { ", " });
                match prm.kind {
                    ParamKind::VarArgs => out.push('*'),
                    ParamKind::KwArgs => out.push_str("**"),
                    _ => {}
                }
                out.push_str(&prm.name);
                if let Some(d) = &prm.default {
                    out.push('=');
                    write_expr(out, d, 1);
                }
            }
            out.push_str(": ");
            write_expr(out, body, 1);
        }
        ExprKind::Starred(inner) => {
            out.push('*');
            write_expr(out, inner, 7);
        }
        ExprKind::Yield(v) => {
            out.push_str("yield");
            if let Some(v) = v {
                out.push(' ');
                write_expr(out, v, 0);
            }
        }
        ExprKind::Await(v) => {
            out.push_str("await ");
            write_expr(out, v, 20);
        }
        ExprKind::NamedExpr { target, value } => {
            out.push_str(target);
            out.push_str(" := ");
            write_expr(out, value, 1);
        }
    }
    if paren {
        out.push(')');
    }
}

fn write_list(out: &mut String, elts: &[Expr]) {
    for (i, e) in elts.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, e, 1);
    }
}

fn write_const(out: &mut String, c: &Constant) {
    match c {
        Constant::None => out.push_str("None"),
        Constant::Bool(true) => out.push_str("True"),
        Constant::Bool(false) => out.push_str("False"),
        Constant::Int(v) => out.push_str(&v.to_string()),
        Constant::Float(v) => out.push_str(&float_literal(*v)),
        Constant::Str(s) => {
            out.push('"');
            out.push_str(&escape(s, '"'));
            out.push('"');
        }
        Constant::Bytes(s) => {
            out.push_str("b\"");
            out.push_str(&escape(s, '"'));
            out.push('"');
        }
        Constant::Ellipsis => out.push_str("..."),
    }
}

fn float_literal(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn escape(s: &str, quote: char) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}
