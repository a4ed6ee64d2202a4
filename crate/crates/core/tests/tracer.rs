use std::collections::BTreeSet;

use flowredact::annotations::Annotations;
use flowredact::dfg::BuildOptions;
use flowredact::frontend::{FunctionId, SourceFile};
use flowredact::linker::resolve_statement;
use flowredact::repository::Repository;
use flowredact::syntax::PythonSubset;
use flowredact::tracer::{Confidence, ProvenanceReport, TraceLimits, Tracer};

const ANNOTATIONS: &str = r#"
schema_version = 1
digest = "sha256"
readers = ["read_csv"]

[[source]]
id = "customers"
match = "customers.csv"
  [[source.attribute]]
  name = "name"
  level = "HIGH"
  rule = "MASK"
  [[source.attribute]]
  name = "email"
  level = "HIGH"
  rule = "HASH"
  [[source.attribute]]
  name = "tenure"
  level = "LOW"
  rule = "KEEP"

[[source]]
id = "cards"
match = "cards.csv"
  [[source.attribute]]
  name = "pan"
  level = "HIGH"
  rule = "DROP_LINE"
"#;

struct Project {
    repo: Repository,
    ann: Annotations,
}

fn project(files: &[(&str, &str)]) -> Project {
    let files: Vec<SourceFile> = files
        .iter()
        .map(|(p, c)| SourceFile {
            path: p.to_string(),
            content: c.to_string(),
            language: "python".into(),
        })
        .collect();
    let ann = Annotations::parse(ANNOTATIONS, "annotations.toml").unwrap();
    let opts = BuildOptions {
        readers: ann.readers.clone(),
        ..Default::default()
    };
    let (repo, report) = Repository::build(&files, &PythonSubset, &opts, None);
    assert_eq!(report.parse_failures, 0);
    Project { repo, ann }
}

type Slot = BTreeSet<(String, String, Confidence)>;

impl Project {
    fn report(&self, path: &str, line: u32) -> ProvenanceReport {
        let stmt = resolve_statement(path, line, &self.repo).unwrap();
        let tracer = Tracer::new(&self.repo, &self.ann, TraceLimits::default());
        (*tracer.trace(&stmt)).clone()
    }

    fn slots(&self, path: &str, line: u32) -> Vec<Slot> {
        self.report(path, line)
            .slots
            .iter()
            .map(|fs| {
                fs.iter()
                    .map(|f| (f.source_id.clone(), f.attribute.clone(), f.confidence))
                    .collect()
            })
            .collect()
    }
}

fn slot(items: &[(&str, &str, Confidence)]) -> Slot {
    items
        .iter()
        .map(|(s, a, c)| (s.to_string(), a.to_string(), *c))
        .collect()
}

use Confidence::*;

#[test]
fn single_function_chain_is_exact() {
    let p = project(&[(
        "app.py",
        "import tabular\n\ndef main():\n    rows = tabular.read_csv(\"customers.csv\")\n    for row in rows:\n        name = row[\"name\"]\n        log.info(\"customer %s\", name)\n",
    )]);
    assert_eq!(p.slots("app.py", 7), vec![slot(&[("customers", "name", Exact)])]);
    let r = p.report("app.py", 7);
    let path = &r.slots[0][0].path;
    assert_eq!(path.first().unwrap().function.qualified_name, "main");
    assert_eq!(path.last().unwrap().node, r.statement.node_id);
}

#[test]
fn constant_slot_has_no_findings() {
    let p = project(&[("app.py", "def f():\n    log.info(\"total %d\", 5)\n")]);
    assert_eq!(p.slots("app.py", 2), vec![Slot::new()]);
}

#[test]
fn parameter_links_to_callers_in_other_files() {
    let p = project(&[
        (
            "loader.py",
            "import tabular\n\ndef load_customers():\n    return tabular.read_csv(\"customers.csv\")\n",
        ),
        (
            "churn.py",
            "from loader import load_customers\n\ndef churn(row):\n    log.info(\"scoring %s\", row[\"name\"])\n    return row[\"tenure\"] * 2\n\ndef run():\n    for row in load_customers():\n        churn(row)\n",
        ),
    ]);
    assert_eq!(p.slots("churn.py", 4), vec![slot(&[("customers", "name", Exact)])]);
    let r = p.report("churn.py", 4);
    let fns: BTreeSet<&str> = r.slots[0][0]
        .path
        .iter()
        .map(|s| s.function.qualified_name.as_str())
        .collect();
    assert_eq!(fns, BTreeSet::from(["load_customers", "run", "churn"]));
}

#[test]
fn whole_record_reaches_slot() {
    let p = project(&[(
        "app.py",
        "def f():\n    rows = read_csv(\"customers.csv\")\n    log.info(\"first %s\", rows[0])\n",
    )]);
    assert_eq!(
        p.slots("app.py", 3),
        vec![slot(&[
            ("customers", "email", WholeSource),
            ("customers", "name", WholeSource),
            ("customers", "tenure", WholeSource),
        ])]
    );
}

#[test]
fn slots_are_independent() {
    let p = project(&[(
        "app.py",
        "def f():\n    c = read_csv(\"customers.csv\")[0]\n    k = read_csv(\"cards.csv\")[0]\n    log.info(\"%s paid with %s\", c[\"email\"], k[\"pan\"])\n",
    )]);
    assert_eq!(
        p.slots("app.py", 4),
        vec![slot(&[("customers", "email", Exact)]), slot(&[("cards", "pan", Exact)])]
    );
}

#[test]
fn return_values_are_matched_to_their_call() {
    // `ident` is called twice; the stack keeps each call's argument apart.
    let p = project(&[(
        "app.py",
        "def ident(x):\n    return x\n\ndef f():\n    r = read_csv(\"customers.csv\")[0]\n    a = ident(r[\"name\"])\n    b = ident(\"fixed\")\n    log.info(\"%s %s\", a, b)\n",
    )]);
    assert_eq!(
        p.slots("app.py", 8),
        vec![slot(&[("customers", "name", Exact)]), Slot::new()]
    );
}

#[test]
fn field_stores_and_dict_literals_keep_precision() {
    let p = project(&[(
        "app.py",
        "def f():\n    r = read_csv(\"customers.csv\")[0]\n    out = {\"who\": r[\"name\"], \"years\": r[\"tenure\"]}\n    out[\"mail\"] = r[\"email\"]\n    log.info(\"%s\", out[\"years\"])\n    log.info(\"%s\", out[\"mail\"])\n    log.info(\"%s\", out)\n",
    )]);
    assert_eq!(p.slots("app.py", 5), vec![slot(&[("customers", "tenure", Exact)])]);
    assert_eq!(p.slots("app.py", 6), vec![slot(&[("customers", "email", Exact)])]);
    assert_eq!(
        p.slots("app.py", 7),
        vec![slot(&[
            ("customers", "email", Exact),
            ("customers", "name", Exact),
            ("customers", "tenure", Exact),
        ])]
    );
}

#[test]
fn builtin_summaries_keep_confidence() {
    let p = project(&[(
        "app.py",
        "def f():\n    rows = read_csv(\"customers.csv\")\n    best = max(rows)\n    log.info(\"%s\", best[\"name\"].upper())\n    log.info(\"%d\", len(rows))\n",
    )]);
    assert_eq!(p.slots("app.py", 4), vec![slot(&[("customers", "name", Exact)])]);
    // `len` renders the whole list; every attribute contributes.
    assert_eq!(p.slots("app.py", 5)[0].len(), 3);
    assert!(p.slots("app.py", 5)[0].iter().all(|(_, _, c)| *c == WholeSource));
}

#[test]
fn unresolved_calls_are_conservative() {
    let p = project(&[(
        "app.py",
        "import numpy\n\ndef f():\n    r = read_csv(\"customers.csv\")[0]\n    z = numpy.log(r[\"tenure\"])\n    log.info(\"%s\", z)\n",
    )]);
    assert_eq!(
        p.slots("app.py", 6),
        vec![slot(&[("customers", "tenure", Conservative)])]
    );
    assert!(!p.report("app.py", 6).notes.is_empty());
}

#[test]
fn source_key_through_constant_and_parameter() {
    let p = project(&[(
        "app.py",
        "DATA = \"customers.csv\"\n\ndef load(name):\n    return read_csv(name)\n\ndef f():\n    r = load(DATA)[0]\n    log.info(\"%s\", r[\"email\"])\n",
    )]);
    assert_eq!(p.slots("app.py", 8), vec![slot(&[("customers", "email", Exact)])]);
}

#[test]
fn non_literal_source_key_matches_everything_conservatively() {
    let p = project(&[(
        "app.py",
        "def f(n):\n    r = read_csv(n + \".csv\")[0]\n    log.info(\"%s\", r[\"email\"])\n",
    )]);
    assert_eq!(
        p.slots("app.py", 3),
        vec![slot(&[("customers", "email", Conservative)])]
    );
}

#[test]
fn unannotated_source_yields_nothing() {
    let p = project(&[(
        "app.py",
        "def f():\n    r = read_csv(\"tmp/scratch.csv\")[0]\n    log.info(\"%s\", r[\"name\"])\n",
    )]);
    assert_eq!(p.slots("app.py", 3), vec![Slot::new()]);
}

#[test]
fn method_receivers_and_constructors() {
    let p = project(&[(
        "app.py",
        "class Account:\n    def __init__(self, row):\n        self.owner = row[\"name\"]\n        self.years = row[\"tenure\"]\n\n    def describe(self):\n        log.info(\"owner %s\", self.owner)\n\ndef f():\n    for row in read_csv(\"customers.csv\"):\n        a = Account(row)\n        a.describe()\n",
    )]);
    assert_eq!(p.slots("app.py", 7), vec![slot(&[("customers", "name", Exact)])]);
}

#[test]
fn mutation_by_callee_is_seen_by_caller() {
    let p = project(&[(
        "app.py",
        "def fill(acc, row):\n    acc.append(row[\"email\"])\n\ndef f():\n    acc = []\n    for row in read_csv(\"customers.csv\"):\n        fill(acc, row)\n    log.info(\"%s\", acc)\n",
    )]);
    assert_eq!(p.slots("app.py", 8), vec![slot(&[("customers", "email", Exact)])]);
}

#[test]
fn free_variables_follow_module_exports() {
    let p = project(&[(
        "app.py",
        "ROWS = read_csv(\"customers.csv\")\n\ndef f():\n    log.info(\"%s\", ROWS[0][\"name\"])\n",
    )]);
    assert_eq!(p.slots("app.py", 4), vec![slot(&[("customers", "name", Exact)])]);
}

#[test]
fn recursion_terminates() {
    let p = project(&[(
        "app.py",
        "def walk(rows, i):\n    if i == 0:\n        return rows[0][\"name\"]\n    return walk(rows, i - 1)\n\ndef f():\n    rows = read_csv(\"customers.csv\")\n    log.info(\"%s\", walk(rows, 3))\n",
    )]);
    assert_eq!(p.slots("app.py", 8), vec![slot(&[("customers", "name", Exact)])]);
}

#[test]
fn limits_hit_report_truncation_and_assume_everything() {
    let p = project(&[(
        "app.py",
        "def f():\n    r = read_csv(\"customers.csv\")[0]\n    a = r[\"name\"]\n    b = a\n    c = b\n    log.info(\"%s\", c)\n",
    )]);
    let stmt = resolve_statement("app.py", 6, &p.repo).unwrap();
    let tracer = Tracer::new(
        &p.repo,
        &p.ann,
        TraceLimits {
            max_nodes: 1,
            ..TraceLimits::default()
        },
    );
    let r = tracer.trace(&stmt);
    assert!(r.truncated);
    assert_eq!(r.slots[0].len(), 4);
}

#[test]
fn find_call_sites_honours_shadowing() {
    let p = project(&[
        ("lib.py", "def helper(x):\n    return x\n"),
        ("a.py", "from lib import helper\n\ndef g():\n    return helper(1)\n"),
        ("b.py", "from lib import helper\n\ndef h():\n    return helper(2)\n"),
        (
            "c.py",
            "from lib import helper\n\ndef k():\n    def helper(y):\n        return y\n    return helper(3)\n",
        ),
        (
            "d.py",
            "def helper(z):\n    return z\n\ndef m():\n    return helper(4)\n",
        ),
    ]);
    let ann = Annotations::parse(ANNOTATIONS, "a").unwrap();
    let tracer = Tracer::new(&p.repo, &ann, TraceLimits::default());
    let sites = tracer.find_call_sites(&FunctionId::new("lib.py", "helper", 1));
    let callers: BTreeSet<String> = sites.iter().map(|(f, _)| f.to_string()).collect();
    assert_eq!(
        callers,
        BTreeSet::from(["a.py::g@3".to_string(), "b.py::h@3".to_string()])
    );
    assert!(tracer.find_call_sites(&FunctionId::new("a.py", "g", 3)).is_empty());
}

#[test]
fn adding_a_spec_keeps_other_findings() {
    let files = [(
        "app.py",
        "def f():\n    r = read_csv(\"customers.csv\")[0]\n    k = read_csv(\"cards.csv\")[0]\n    log.info(\"%s %s\", r[\"name\"], k)\n",
    )];
    let p = project(&files);
    let full = p.slots("app.py", 4);
    let reduced_text = ANNOTATIONS.split("[[source]]\nid = \"cards\"").next().unwrap();
    let reduced = Annotations::parse(reduced_text, "r").unwrap();
    let stmt = resolve_statement("app.py", 4, &p.repo).unwrap();
    let tracer = Tracer::new(&p.repo, &reduced, TraceLimits::default());
    let r = tracer.trace(&stmt);
    for (i, fs) in r.slots.iter().enumerate() {
        for f in fs {
            assert!(full[i].contains(&(f.source_id.clone(), f.attribute.clone(), f.confidence)));
        }
    }
    assert!(full[1].iter().any(|(s, _, _)| s == "cards"));
}
