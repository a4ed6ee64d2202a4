//! Random programs of the analyzed subset, with fixture data and
//! annotations, for checking the static analysis against the interpreter.
//!
//! Every generated program is well typed by construction: variables are
//! tracked as either text or integer and only combined in ways that cannot
//! raise at runtime.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotations::Annotations;
use crate::frontend::SourceFile;

pub const GENERATED_ENTRY: &str = "app/main.py";

/// A generated project held in memory.
#[derive(Debug, Clone)]
pub struct GeneratedProgram {
    pub seed: u64,
    pub files: Vec<SourceFile>,
    pub annotations: Annotations,
    pub annotations_text: String,
    /// CSV fixtures keyed by project-relative path.
    pub data: BTreeMap<String, String>,
    pub entry: String,
}

impl GeneratedProgram {
    /// Writes the project under `dir` with a config file.
    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<()> {
        let put = |rel: &str, text: &str| -> std::io::Result<()> {
            let p = dir.join(rel);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, text)
        };
        for f in &self.files {
            put(&f.path, &f.content)?;
        }
        for (k, v) in &self.data {
            put(k, v)?;
        }
        put("annotations.toml", &self.annotations_text)?;
        put(
            "flowredact.toml",
            "schema_version = 1\nannotations = \"annotations.toml\"\n\n[scan]\nexclude = [\"data/**\"]\n",
        )
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ty {
    Text,
    Int,
}

const SOURCES: [(&str, &str); 2] = [("people", "data/people.csv"), ("orders", "data/orders.csv")];
// (column, type, level, rule)
const COLUMNS: [[(&str, Ty, &str, &str); 3]; 2] = [
    [
        ("name", Ty::Text, "HIGH", "MASK"),
        ("age", Ty::Int, "LOW", "PARTIAL"),
        ("city", Ty::Text, "NONE", "KEEP"),
    ],
    [
        ("code", Ty::Text, "LOW", "HASH"),
        ("qty", Ty::Int, "NONE", "KEEP"),
        ("card", Ty::Text, "HIGH", "MASK"),
    ],
];
const ROWS: usize = 4;

struct Gen {
    rng: ChaCha8Rng,
    next_var: usize,
    text: Vec<String>,
    ints: Vec<String>,
    dicts: Vec<(String, Vec<(String, Ty)>)>,
    lists: Vec<(String, Ty, usize)>,
    helpers: Vec<(String, Ty)>,
    out: String,
    indent: usize,
}

impl Gen {
    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("v{}", self.next_var)
    }

    fn pick(&mut self, ty: Ty) -> String {
        let pool = match ty {
            Ty::Text => &self.text,
            Ty::Int => &self.ints,
        };
        pool.choose(&mut self.rng).expect("pools start non-empty").clone()
    }

    /// Target for an assignment: usually new, sometimes a reassignment.
    fn target(&mut self, ty: Ty) -> String {
        if self.rng.gen_bool(0.25) {
            return self.pick(ty);
        }
        let v = self.fresh();
        match ty {
            Ty::Text => self.text.push(v.clone()),
            Ty::Int => self.ints.push(v.clone()),
        }
        v
    }

    fn text_expr(&mut self) -> String {
        match self.rng.gen_range(0..9) {
            0 => {
                let (a, b) = (self.pick(Ty::Text), self.pick(Ty::Text));
                format!("{a} + \"-\" + {b}")
            }
            1 => format!("{}.upper()", self.pick(Ty::Text)),
            2 => format!("str({})", self.pick(Ty::Int)),
            3 => {
                let (a, b) = (self.pick(Ty::Text), self.pick(Ty::Int));
                format!("\"%s/%d\" % ({a}, {b})")
            }
            4 => {
                let (a, b) = (self.pick(Ty::Text), self.pick(Ty::Int));
                format!("\"{{}}:{{}}\".format({a}, {b})")
            }
            5 => {
                let (a, b) = (self.pick(Ty::Text), self.pick(Ty::Int));
                format!("f\"{{{a}}}#{{{b}}}\"")
            }
            6 => format!("{}.strip()", self.pick(Ty::Text)),
            7 => "\"fixed\"".to_string(),
            _ => {
                let (a, b) = (self.pick(Ty::Text), self.pick(Ty::Text));
                format!("\" \".join([{a}, {b}])")
            }
        }
    }

    fn int_expr(&mut self) -> String {
        match self.rng.gen_range(0..6) {
            0 => {
                let (a, b) = (self.pick(Ty::Int), self.pick(Ty::Int));
                format!("{a} + {b}")
            }
            1 => format!("{} * 3", self.pick(Ty::Int)),
            2 => format!("len({})", self.pick(Ty::Text)),
            3 => {
                let (a, b) = (self.pick(Ty::Int), self.pick(Ty::Int));
                format!("max({a}, {b})")
            }
            4 => format!("{}", self.rng.gen_range(0..50)),
            _ => format!("abs({} - 7)", self.pick(Ty::Int)),
        }
    }

    fn expr(&mut self, ty: Ty) -> String {
        match ty {
            Ty::Text => self.text_expr(),
            Ty::Int => self.int_expr(),
        }
    }

    fn any_ty(&mut self) -> Ty {
        if self.rng.gen_bool(0.6) {
            Ty::Text
        } else {
            Ty::Int
        }
    }

    fn read_cell(&mut self) {
        let s = self.rng.gen_range(0..SOURCES.len());
        let (col, ty, _, _) = COLUMNS[s][self.rng.gen_range(0..3)];
        let row = self.rng.gen_range(0..ROWS);
        let t = self.target(ty);
        self.line(&format!("{t} = rows{s}[{row}][\"{col}\"]"));
    }

    fn log_stmt(&mut self) {
        let method = ["info", "warning", "error"][self.rng.gen_range(0..3)];
        let n = self.rng.gen_range(0..4);
        let args: Vec<(String, Ty)> = (0..n)
            .map(|_| {
                let ty = self.any_ty();
                (self.pick(ty), ty)
            })
            .collect();
        let spec = |ty: Ty| if ty == Ty::Int { "%d" } else { "%s" };
        let stmt = match self.rng.gen_range(0..4) {
            0 if n > 0 => {
                let fmt: Vec<String> = args.iter().map(|(_, t)| format!("a={}", spec(*t))).collect();
                let names: Vec<&str> = args.iter().map(|(v, _)| v.as_str()).collect();
                format!("log.{method}(\"event {}\", {})", fmt.join(" "), names.join(", "))
            }
            1 => {
                let holes: Vec<String> = args.iter().map(|(v, _)| format!("<{{{v}}}>")).collect();
                format!("log.{method}(f\"note {}\")", holes.join(" "))
            }
            2 => {
                let holes = vec!["[{}]"; n].join(" ");
                let names: Vec<&str> = args.iter().map(|(v, _)| v.as_str()).collect();
                format!("log.{method}(\"fmt {holes}\".format({}))", names.join(", "))
            }
            _ => match args.first() {
                Some((v, Ty::Text)) => format!("log.{method}(\"joined \" + {v})"),
                _ => format!("log.{method}(\"checkpoint\")"),
            },
        };
        self.line(&stmt);
    }

    fn dict_stmt(&mut self) {
        let name = self.fresh();
        let fields: Vec<(String, Ty)> = (0..self.rng.gen_range(1..4))
            .map(|i| (format!("k{i}"), self.any_ty()))
            .collect();
        let items: Vec<String> = fields
            .iter()
            .map(|(k, t)| format!("\"{k}\": {}", self.pick(*t)))
            .collect();
        self.line(&format!("{name} = {{{}}}", items.join(", ")));
        self.dicts.push((name, fields));
    }

    fn dict_use(&mut self) {
        let Some((name, fields)) = self.dicts.choose(&mut self.rng).cloned() else {
            return self.dict_stmt();
        };
        let (k, ty) = fields.choose(&mut self.rng).expect("dicts have fields").clone();
        if self.rng.gen_bool(0.4) {
            let v = self.pick(ty);
            self.line(&format!("{name}[\"{k}\"] = {v}"));
        } else {
            let t = self.target(ty);
            self.line(&format!("{t} = {name}[\"{k}\"]"));
        }
    }

    fn list_stmt(&mut self) {
        let name = self.fresh();
        let ty = self.any_ty();
        let n = self.rng.gen_range(1..4);
        let items: Vec<String> = (0..n).map(|_| self.pick(ty)).collect();
        self.line(&format!("{name} = [{}]", items.join(", ")));
        self.lists.push((name, ty, n));
    }

    fn list_use(&mut self) {
        let Some((name, ty, n)) = self.lists.choose(&mut self.rng).cloned() else {
            return self.list_stmt();
        };
        if self.rng.gen_bool(0.3) {
            let v = self.pick(ty);
            self.line(&format!("{name}.append({v})"));
            if let Some(l) = self.lists.iter_mut().find(|l| l.0 == name) {
                l.2 += 1;
            }
        } else {
            let i = self.rng.gen_range(0..n);
            let t = self.target(ty);
            self.line(&format!("{t} = {name}[{i}]"));
        }
    }

    fn branch(&mut self) {
        let (a, b) = (self.pick(Ty::Int), self.pick(Ty::Int));
        let ty = self.any_ty();
        // Assign an existing variable so both arms are visible afterwards.
        let t = self.pick(ty);
        self.line(&format!("if {a} > {b}:"));
        self.indent += 1;
        let e = self.expr(ty);
        self.line(&format!("{t} = {e}"));
        self.indent -= 1;
        if self.rng.gen_bool(0.5) {
            self.line("else:");
            self.indent += 1;
            let e = self.expr(ty);
            self.line(&format!("{t} = {e}"));
            self.indent -= 1;
        }
    }

    fn loop_stmt(&mut self) {
        let s = self.rng.gen_range(0..SOURCES.len());
        let row = self.fresh();
        let (col, ty, _, _) = COLUMNS[s][self.rng.gen_range(0..3)];
        let acc = self.pick(ty);
        self.line(&format!("for {row} in rows{s}:"));
        self.indent += 1;
        self.line(&format!("{acc} = {acc} + {row}[\"{col}\"]"));
        if self.rng.gen_bool(0.5) {
            self.line(&format!("log.info(\"row %s\", {row}[\"{col}\"])"));
        }
        self.indent -= 1;
    }

    fn call_helper(&mut self) {
        let Some((name, ret)) = self.helpers.choose(&mut self.rng).cloned() else {
            return;
        };
        let (a, b) = (self.pick(Ty::Text), self.pick(Ty::Int));
        let t = self.target(ret);
        self.line(&format!("{t} = {name}({a}, {b})"));
    }

    fn box_use(&mut self) {
        let ty = self.any_ty();
        let v = self.pick(ty);
        let b = self.fresh();
        self.line(&format!("{b} = Box({v})"));
        let t = self.target(ty);
        self.line(&format!("{t} = {b}.get()"));
    }

    fn statement(&mut self) {
        match self.rng.gen_range(0..12) {
            0 | 1 => self.read_cell(),
            2 => {
                let ty = self.any_ty();
                let e = self.expr(ty);
                let t = self.target(ty);
                self.line(&format!("{t} = {e}"));
            }
            3 => self.log_stmt(),
            4 => self.dict_stmt(),
            5 => self.dict_use(),
            6 => self.list_stmt(),
            7 => self.list_use(),
            8 => self.branch(),
            9 => self.loop_stmt(),
            10 => self.call_helper(),
            _ => self.box_use(),
        }
    }

    /// A helper `(text, int) -> ret` that may log its own values.
    fn helper(&mut self, index: usize) -> (String, Ty) {
        let name = format!("helper{index}");
        let ret = self.any_ty();
        let saved = (
            std::mem::replace(&mut self.text, vec!["s".into()]),
            std::mem::replace(&mut self.ints, vec!["n".into()]),
            std::mem::take(&mut self.dicts),
            std::mem::take(&mut self.lists),
        );
        self.line(&format!("def {name}(s, n):"));
        self.indent += 1;
        for _ in 0..self.rng.gen_range(1..5) {
            match self.rng.gen_range(0..5) {
                0 => self.log_stmt(),
                1 => self.dict_use(),
                2 => self.list_use(),
                3 => self.branch(),
                _ => {
                    let ty = self.any_ty();
                    let e = self.expr(ty);
                    let t = self.target(ty);
                    self.line(&format!("{t} = {e}"));
                }
            }
        }
        let r = self.pick(ret);
        self.line(&format!("return {r}"));
        self.indent -= 1;
        self.line("");
        self.line("");
        (self.text, self.ints, self.dicts, self.lists) = saved;
        (name, ret)
    }
}

fn fixture_data(rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
    const WORDS: [&str; 8] = ["Ada", "Lin", "Omar", "Sofia", "Kemal", "Ines", "Ravi", "Yuki"];
    const CITIES: [&str; 5] = ["Oslo", "Lima", "Pune", "Graz", "Kobe"];
    let mut out = BTreeMap::new();
    for (s, (_, path)) in SOURCES.iter().enumerate() {
        let mut text = COLUMNS[s].iter().map(|c| c.0).collect::<Vec<_>>().join(",");
        text.push('\n');
        for _ in 0..ROWS {
            let cells: Vec<String> = COLUMNS[s]
                .iter()
                .map(|(col, ty, _, _)| match (*col, ty) {
                    (_, Ty::Int) => rng.gen_range(1..99).to_string(),
                    ("name", _) => format!("{} {}", WORDS[rng.gen_range(0..8)], WORDS[rng.gen_range(0..8)]),
                    ("city", _) => CITIES[rng.gen_range(0..5)].to_string(),
                    ("card", _) => format!("C-{:04}-{:04}", rng.gen_range(0..10000), rng.gen_range(0..10000)),
                    _ => format!("K-{:03}X", rng.gen_range(0..1000)),
                })
                .collect();
            let _ = writeln!(text, "{}", cells.join(","));
        }
        out.insert(path.to_string(), text);
    }
    out
}

fn annotations_text() -> String {
    let mut t = String::from("schema_version = 1\ndigest = \"sha256\"\nreaders = [\"read_csv\"]\n");
    for (s, (id, path)) in SOURCES.iter().enumerate() {
        let _ = write!(t, "\n[[source]]\nid = \"{id}\"\nmatch = \"{path}\"\n");
        for (col, _, level, rule) in COLUMNS[s] {
            let _ = write!(
                t,
                "  [[source.attribute]]\n  name = \"{col}\"\n  level = \"{level}\"\n  rule = \"{rule}\"\n"
            );
            if rule == "PARTIAL" {
                t.push_str("  keep_last = 1\n");
            }
        }
    }
    t
}

/// Generates one program from `seed`.
pub fn generate_program(seed: u64) -> GeneratedProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = fixture_data(&mut rng);
    let mut g = Gen {
        rng,
        next_var: 0,
        text: Vec::new(),
        ints: Vec::new(),
        dicts: Vec::new(),
        lists: Vec::new(),
        helpers: Vec::new(),
        out: String::new(),
        indent: 0,
    };
    g.line("import logging");
    g.line("");
    g.line("from tabular import read_csv");
    g.line("");
    g.line("log = logging.getLogger(\"generated\")");
    g.line("");
    g.line("");
    g.line("class Box:");
    g.line("    def __init__(self, value):");
    g.line("        self.value = value");
    g.line("");
    g.line("    def get(self):");
    g.line("        return self.value");
    g.line("");
    g.line("");
    for i in 0..g.rng.gen_range(0..3) {
        let h = g.helper(i);
        g.helpers.push(h);
    }
    g.line("def main():");
    g.indent = 1;
    for (s, (_, path)) in SOURCES.iter().enumerate() {
        g.line(&format!("rows{s} = read_csv(\"{path}\")"));
    }
    g.line("label = \"start\"");
    g.line("count = 1");
    g.text.push("label".into());
    g.ints.push("count".into());
    for _ in 0..g.rng.gen_range(2..4) {
        g.read_cell();
    }
    for _ in 0..g.rng.gen_range(8..20) {
        g.statement();
    }
    for _ in 0..g.rng.gen_range(2..5) {
        g.log_stmt();
    }
    g.indent = 0;
    g.line("");
    g.line("");
    g.line("main()");
    let annotations_text = annotations_text();
    let annotations = Annotations::parse(&annotations_text, "generated").expect("generated annotations are valid");
    GeneratedProgram {
        seed,
        files: vec![SourceFile {
            path: GENERATED_ENTRY.to_string(),
            content: g.out,
            language: "python".to_string(),
        }],
        annotations,
        annotations_text,
        data,
        entry: GENERATED_ENTRY.to_string(),
    }
}
