//! Runtime values of the reference interpreter. Every value carries the set
//! of source labels it was derived from.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::rc::Rc;
use std::sync::Arc;

use crate::syntax::ast::{Expr, FunctionDef, Param};

/// Index into the interpreter's label table.
pub type LabelId = u32;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels(Option<Rc<BTreeSet<LabelId>>>);

impl Labels {
    pub fn none() -> Self {
        Self(None)
    }

    pub fn one(id: LabelId) -> Self {
        Self(Some(Rc::new(BTreeSet::from([id]))))
    }

    pub fn is_empty(&self) -> bool {
        self.0.as_ref().map_or(true, |s| s.is_empty())
    }

    pub fn iter(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.0.iter().flat_map(|s| s.iter().copied())
    }

    pub fn union(&self, other: &Labels) -> Labels {
        match (&self.0, &other.0) {
            (None, _) => other.clone(),
            (_, None) => self.clone(),
            (Some(a), Some(b)) => {
                if b.is_subset(a) {
                    self.clone()
                } else if a.is_subset(b) {
                    other.clone()
                } else {
                    Labels(Some(Rc::new(a.union(b).copied().collect())))
                }
            }
        }
    }

    pub fn add(&mut self, other: &Labels) {
        *self = self.union(other);
    }
}

/// Hashable view of a value used as a dict key or set member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    None,
    Int(i64),
    /// Non-integral floats by bit pattern.
    Float(u64),
    Str(Rc<str>),
    Tuple(Vec<Key>),
}

#[derive(Debug, Default)]
pub struct Dict {
    pub entries: Vec<(TV, TV)>,
    index: BTreeMap<Key, usize>,
}

impl Dict {
    pub fn get(&self, k: &Key) -> Option<&TV> {
        self.index.get(k).map(|&i| &self.entries[i].1)
    }

    pub fn insert(&mut self, key: Key, k: TV, v: TV) {
        match self.index.get(&key) {
            Some(&i) => self.entries[i].1 = v,
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push((k, v));
            }
        }
    }

    pub fn remove(&mut self, key: &Key) -> Option<TV> {
        let i = self.index.remove(key)?;
        let (_, v) = self.entries.remove(i);
        for slot in self.index.values_mut() {
            if *slot > i {
                *slot -= 1;
            }
        }
        Some(v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug)]
pub struct ModuleObj {
    pub path: String,
    pub name: String,
    pub globals: RefCell<BTreeMap<String, TV>>,
}

#[derive(Debug, Default)]
pub struct Scope {
    pub vars: RefCell<BTreeMap<String, TV>>,
    pub parent: Option<Rc<Scope>>,
    pub globals: RefCell<BTreeSet<String>>,
    pub nonlocals: RefCell<BTreeSet<String>>,
}

#[derive(Debug)]
pub enum Body {
    Def(Arc<FunctionDef>),
    Lambda(Box<Expr>),
}

#[derive(Debug)]
pub struct Closure {
    pub name: String,
    pub params: Vec<Param>,
    pub defaults: Vec<Option<TV>>,
    pub body: Body,
    pub module: Rc<ModuleObj>,
    pub scope: Option<Rc<Scope>>,
}

#[derive(Debug)]
pub struct Class {
    pub name: String,
    pub base: Option<Rc<Class>>,
    pub attrs: RefCell<BTreeMap<String, TV>>,
}

impl Class {
    /// Whether this class or an ancestor is named `name`.
    pub fn is_a(&self, name: &str) -> bool {
        self.name == name || self.base.as_ref().is_some_and(|b| b.is_a(name))
    }

    pub fn is_exception(&self) -> bool {
        self.is_a("BaseException")
    }

    pub fn lookup(&self, name: &str) -> Option<TV> {
        if let Some(v) = self.attrs.borrow().get(name) {
            return Some(v.clone());
        }
        self.base.as_ref().and_then(|b| b.lookup(name))
    }
}

#[derive(Debug)]
pub struct Instance {
    pub class: Rc<Class>,
    pub attrs: RefCell<BTreeMap<String, TV>>,
}

#[derive(Debug, Clone)]
pub enum V {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Rc<str>),
    List(Rc<RefCell<Vec<TV>>>),
    Tuple(Rc<Vec<TV>>),
    Dict(Rc<RefCell<Dict>>),
    Set(Rc<RefCell<Dict>>),
    Func(Rc<Closure>),
    Class(Rc<Class>),
    Instance(Rc<Instance>),
    Bound(Rc<TV>, Rc<Closure>),
    /// Built-in function by name.
    Builtin(Rc<str>),
    /// Built-in method bound to its receiver.
    Method(Rc<TV>, Rc<str>),
    Module(Rc<ModuleObj>),
    /// A module outside the project, by name.
    External(Rc<str>),
    Logger,
}

/// A value with its labels.
#[derive(Debug, Clone)]
pub struct TV {
    pub v: V,
    pub l: Labels,
}

impl TV {
    pub fn new(v: V) -> Self {
        Self { v, l: Labels::none() }
    }

    pub fn with(v: V, l: Labels) -> Self {
        Self { v, l }
    }

    pub fn none() -> Self {
        Self::new(V::None)
    }

    pub fn str(s: &str) -> Self {
        Self::new(V::Str(s.into()))
    }

    pub fn list(items: Vec<TV>) -> Self {
        Self::new(V::List(Rc::new(RefCell::new(items))))
    }

    pub fn tuple(items: Vec<TV>) -> Self {
        Self::new(V::Tuple(Rc::new(items)))
    }

    pub fn labeled(mut self, l: &Labels) -> Self {
        self.l.add(l);
        self
    }

    pub fn type_name(&self) -> &'static str {
        match &self.v {
            V::None => "NoneType",
            V::Bool(_) => "bool",
            V::Int(_) => "int",
            V::Float(_) => "float",
            V::Str(_) => "str",
            V::List(_) => "list",
            V::Tuple(_) => "tuple",
            V::Dict(_) => "dict",
            V::Set(_) => "set",
            V::Func(_) | V::Bound(..) | V::Builtin(_) | V::Method(..) => "function",
            V::Class(_) => "type",
            V::Instance(_) => "object",
            V::Module(_) | V::External(_) => "module",
            V::Logger => "Logger",
        }
    }

    pub fn key(&self) -> Option<Key> {
        Some(match &self.v {
            V::None => Key::None,
            V::Bool(b) => Key::Int(i64::from(*b)),
            V::Int(i) => Key::Int(*i),
            V::Float(f) => {
                if f.fract() == 0.0 && f.abs() < 9.0e15 {
                    Key::Int(*f as i64)
                } else {
                    Key::Float(f.to_bits())
                }
            }
            V::Str(s) => Key::Str(s.clone()),
            V::Tuple(xs) => Key::Tuple(xs.iter().map(TV::key).collect::<Option<_>>()?),
            _ => return None,
        })
    }

    pub fn truthy(&self) -> bool {
        match &self.v {
            V::None => false,
            V::Bool(b) => *b,
            V::Int(i) => *i != 0,
            V::Float(f) => *f != 0.0,
            V::Str(s) => !s.is_empty(),
            V::List(xs) => !xs.borrow().is_empty(),
            V::Tuple(xs) => !xs.is_empty(),
            V::Dict(d) | V::Set(d) => d.borrow().len() > 0,
            _ => true,
        }
    }

    /// Labels of the value and everything reachable from it.
    pub fn deep_labels(&self) -> Labels {
        let mut seen = HashSet::new();
        let mut out = Labels::none();
        deep(self, &mut out, &mut seen);
        out
    }
}

fn deep(v: &TV, out: &mut Labels, seen: &mut HashSet<usize>) {
    out.add(&v.l);
    let mut visit = |p: usize| seen.insert(p);
    match &v.v {
        V::List(xs) => {
            if visit(Rc::as_ptr(xs) as *const u8 as usize) {
                for x in xs.borrow().iter() {
                    deep(x, out, seen);
                }
            }
        }
        V::Tuple(xs) => xs.iter().for_each(|x| deep(x, out, seen)),
        V::Dict(d) | V::Set(d) => {
            if visit(Rc::as_ptr(d) as *const u8 as usize) {
                for (k, x) in d.borrow().entries.iter() {
                    deep(k, out, seen);
                    deep(x, out, seen);
                }
            }
        }
        V::Instance(o) => {
            if visit(Rc::as_ptr(o) as *const u8 as usize) {
                for x in o.attrs.borrow().values() {
                    deep(x, out, seen);
                }
            }
        }
        V::Bound(recv, _) | V::Method(recv, _) => deep(recv, out, seen),
        _ => {}
    }
}

/// Shortest round-trip float rendering with Python's layout.
pub fn float_repr(f: f64) -> String {
    if f.is_nan() {
        return "nan".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if f == 0.0 {
        return if f.is_sign_negative() {
            "-0.0".into()
        } else {
            "0.0".into()
        };
    }
    let sci = format!("{f:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if neg { "-" } else { "" };
    if (-4..16).contains(&exp) {
        let n = digits.len() as i32;
        let body = if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else if exp + 1 >= n {
            format!("{}{}.0", digits, "0".repeat((exp + 1 - n) as usize))
        } else {
            let (a, b) = digits.split_at((exp + 1) as usize);
            format!("{a}.{b}")
        };
        format!("{sign}{body}")
    } else {
        let (a, b) = digits.split_at(1);
        let frac = if b.is_empty() { String::new() } else { format!(".{b}") };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{a}{frac}e{esign}{:02}", exp.abs())
    }
}

/// `repr()` of a string with Python's quote choice and escapes.
pub fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

pub fn to_str(v: &TV) -> String {
    match &v.v {
        V::Str(s) => s.to_string(),
        V::Instance(o) if o.class.is_exception() => match o.attrs.borrow().get("args").map(|a| &a.v) {
            Some(V::Tuple(xs)) if xs.len() == 1 => to_str(&xs[0]),
            Some(V::Tuple(xs)) if xs.is_empty() => String::new(),
            Some(_) => repr(o.attrs.borrow().get("args").expect("args")),
            None => String::new(),
        },
        _ => repr(v),
    }
}

pub fn repr(v: &TV) -> String {
    match &v.v {
        V::None => "None".into(),
        V::Bool(true) => "True".into(),
        V::Bool(false) => "False".into(),
        V::Int(i) => i.to_string(),
        V::Float(f) => float_repr(*f),
        V::Str(s) => str_repr(s),
        V::List(xs) => format!("[{}]", join_repr(xs.borrow().iter())),
        V::Tuple(xs) => {
            if xs.len() == 1 {
                format!("({},)", repr(&xs[0]))
            } else {
                format!("({})", join_repr(xs.iter()))
            }
        }
        V::Dict(d) => {
            let d = d.borrow();
            let items: Vec<String> = d
                .entries
                .iter()
                .map(|(k, x)| format!("{}: {}", repr(k), repr(x)))
                .collect();
            format!("{{{}}}", items.join(", "))
        }
        V::Set(d) => {
            let d = d.borrow();
            if d.len() == 0 {
                "set()".into()
            } else {
                format!("{{{}}}", join_repr(d.entries.iter().map(|(k, _)| k)))
            }
        }
        V::Func(c) => format!("<function {}>", c.name),
        V::Bound(_, c) => format!("<bound method {}>", c.name),
        V::Builtin(n) | V::Method(_, n) => format!("<built-in function {n}>"),
        V::Class(c) => format!("<class '{}'>", c.name),
        V::Instance(o) => format!("<{} object>", o.class.name),
        V::Module(m) => format!("<module '{}'>", m.name),
        V::External(n) => format!("<module '{n}'>"),
        V::Logger => "<Logger>".into(),
    }
}

fn join_repr<'a>(xs: impl Iterator<Item = &'a TV>) -> String {
    xs.map(repr).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_repr_matches_python_layout() {
        for (f, s) in [
            (0.1, "0.1"),
            (3.0, "3.0"),
            (-2.5, "-2.5"),
            (1e16, "1e+16"),
            (1.5e-5, "1.5e-05"),
            (0.0001, "0.0001"),
            (123456789.0, "123456789.0"),
            (1e15, "1000000000000000.0"),
            (0.83, "0.83"),
        ] {
            assert_eq!(float_repr(f), s, "{f}");
        }
    }

    #[test]
    fn string_repr_quotes() {
        assert_eq!(str_repr("abc"), "'abc'");
        assert_eq!(str_repr("it's"), "\"it's\"");
        assert_eq!(str_repr("a\nb"), "'a\\nb'");
    }
}
