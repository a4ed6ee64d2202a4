use flowredact::dfg::*;
use flowredact::frontend::{parse_file, FunctionUnit, ModuleIndex, SourceFile};
use flowredact::syntax::PythonSubset;

fn units(src: &str) -> Vec<FunctionUnit> {
    let file = SourceFile {
        path: "app.py".into(),
        content: src.into(),
        language: "python".into(),
    };
    parse_file(&file, &PythonSubset, &ModuleIndex::default()).unwrap()
}

fn opts() -> BuildOptions {
    BuildOptions {
        readers: vec!["read_table".into(), "read_csv".into()],
        ..Default::default()
    }
}

fn graph(src: &str, qn: &str) -> FunctionDfg {
    let us = units(src);
    let u = us.iter().find(|u| u.metadata.id.qualified_name == qn).expect("unit");
    build_dfg(u, &opts()).0
}

fn find<'g>(g: &'g FunctionDfg, tag: NodeTag, name: &str) -> Vec<&'g DfgNode> {
    g.nodes
        .iter()
        .filter(|n| n.kind.tag() == tag && n.name == name)
        .collect()
}

fn var(g: &FunctionDfg, name: &str, version: u32) -> NodeId {
    find(g, NodeTag::VariableVersion, name)
        .into_iter()
        .find(|n| n.version() == Some(version))
        .unwrap_or_else(|| panic!("{name}#{version} missing in\n{g}"))
        .id
}

fn has_edge(g: &FunctionDfg, from: NodeId, to: NodeId) -> bool {
    g.edges.iter().any(|e| e.from == from && e.to == to)
}

fn edge(g: &FunctionDfg, from: NodeId, to: NodeId) -> &DfgEdge {
    g.edges
        .iter()
        .find(|e| e.from == from && e.to == to)
        .unwrap_or_else(|| panic!("edge n{from}->n{to} missing in\n{g}"))
}

fn log_node(g: &FunctionDfg) -> (&DfgNode, &LogInfo) {
    g.log_statements().next().expect("log statement")
}

#[test]
fn parameter_to_return_chain() {
    let g = graph("def f(p):\n    x = p\n    return x\n", "f");
    let p = g.parameter(0).unwrap().id;
    let x = var(&g, "x", 1);
    let ret = find(&g, NodeTag::Return, "x")[0].id;
    assert!(has_edge(&g, p, x));
    assert!(has_edge(&g, x, ret));
    assert_eq!(g.entry().count(), 1);
    assert_eq!(g.sinks().count(), 1);
}

#[test]
fn source_read_select_into_log_slot() {
    let src = "def report(path):\n    rows = read_table(path)\n    name = rows[\"name\"]\n    log.info(\"customer %s\", name)\n";
    let g = graph(src, "report");
    let read = &find(&g, NodeTag::SourceRead, "read_table")[0];
    let rows = var(&g, "rows", 1);
    let name = var(&g, "name", 1);
    let (log, info) = log_node(&g);
    assert!(has_edge(&g, read.id, rows));
    assert_eq!(edge(&g, rows, name).effect, vec![Step::Select("name".into())]);
    let e = edge(&g, name, log.id);
    assert_eq!(e.slot, Some(0));
    assert_eq!(info.slot_count, 1);
    assert_eq!(
        info.template,
        TemplateSource::Printf {
            format: "customer %s".into()
        }
    );
    // the key is the parameter, resolved later by tracing
    let NodeKind::SourceRead { source_key, .. } = &read.kind else {
        unreachable!()
    };
    assert!(source_key.is_none());
    let p = g.parameter(0).unwrap().id;
    assert_eq!(edge(&g, p, read.id).slot, Some(0));
}

#[test]
fn reassignment_creates_versions() {
    let g = graph("def f(y):\n    x = 1\n    x = x + y\n    return x\n", "f");
    let x1 = var(&g, "x", 1);
    let x2 = var(&g, "x", 2);
    let y = g.parameter(0).unwrap().id;
    assert!(has_edge(&g, x1, x2));
    assert!(has_edge(&g, y, x2));
    assert!(!has_edge(&g, y, x1));
    let c = g.nodes.iter().find(|n| n.kind.tag() == NodeTag::Constant).unwrap();
    assert!(has_edge(&g, c.id, x1));
}

#[test]
fn free_variable_gets_version_zero() {
    let g = graph("def f():\n    return limit\n", "f");
    assert_eq!(g.nodes[0].version(), Some(0));
    assert_eq!(g.nodes[0].name, "limit");
}

#[test]
fn loop_back_edge_reaches_in_loop_use() {
    let src = "def f(rows):\n    total = 0\n    for r in rows:\n        total = total + r\n    return total\n";
    let g = graph(src, "f");
    let t1 = var(&g, "total", 1);
    let t2 = var(&g, "total", 2);
    assert!(has_edge(&g, t1, t2));
    assert!(has_edge(&g, t2, t2), "loop-carried self edge\n{g}");
    // merge after the loop joins zero and many iterations
    let t3 = var(&g, "total", 3);
    assert!(has_edge(&g, t1, t3) && has_edge(&g, t2, t3));
    let ret = find(&g, NodeTag::Return, "total")[0].id;
    assert!(has_edge(&g, t3, ret));
}

#[test]
fn loop_carried_use_before_assignment() {
    let src = "def f(rows):\n    prev = None\n    for r in rows:\n        log.info(\"%s\", prev)\n        prev = r\n";
    let g = graph(src, "f");
    let (log, _) = log_node(&g);
    let prev2 = var(&g, "prev", 2);
    assert!(has_edge(&g, prev2, log.id), "{g}");
}

#[test]
fn if_branches_merge() {
    let src = "def f(a, b, c):\n    if c:\n        x = a\n    else:\n        x = b\n    return x\n";
    let g = graph(src, "f");
    let x3 = var(&g, "x", 3);
    assert!(has_edge(&g, var(&g, "x", 1), x3));
    assert!(has_edge(&g, var(&g, "x", 2), x3));
    assert!(edge(&g, var(&g, "x", 1), x3).copy);
}

#[test]
fn dict_literal_and_attribute_store_are_field_precise() {
    let src = "def f(row, obj):\n    d = {\"n\": row[\"name\"]}\n    obj.city = row[\"city\"]\n    return d\n";
    let g = graph(src, "f");
    let row = g.parameter(0).unwrap().id;
    let d = var(&g, "d", 1);
    assert_eq!(
        edge(&g, row, d).effect,
        vec![Step::Select("name".into()), Step::Put("n".into())]
    );
    let obj1 = var(&g, "obj", 1);
    assert_eq!(
        edge(&g, row, obj1).effect,
        vec![Step::Select("city".into()), Step::Put("city".into())]
    );
    // param rebinding is exported to callers
    assert!(g
        .nodes
        .iter()
        .any(|n| matches!(n.kind, NodeKind::Export { param: Some(1) })));
}

#[test]
fn field_paths_walk_backwards() {
    let s = |x: &str| x.to_string();
    // `q.items.append(a)` then `q.items[0].name`: select items, then name.
    let read = vec![Step::Select(s("items"))];
    let after_read = path_backward(&read, &[s("name")], 4).unwrap();
    assert_eq!(after_read, vec![s("items"), s("name")]);
    let put = vec![Step::Put(s("items"))];
    assert_eq!(path_backward(&put, &after_read, 4), Some(vec![s("name")]));
    assert_eq!(path_backward(&[Step::Put(s("other"))], &after_read, 4), None);
    assert_eq!(path_backward(&put, &[], 4), Some(vec![]));
    // Past the bound the deeper fields are dropped, widening the query.
    assert_eq!(
        path_backward(&read, &[s("a"), s("b")], 2),
        Some(vec![s("items"), s("a")])
    );
    assert_eq!(path_backward(&[Step::Reset], &after_read, 4), Some(vec![]));
}

#[test]
fn steps_walk_backwards() {
    let sel = vec![Step::Select("name".into()), Step::Put("n".into())];
    assert_eq!(steps_backward(&sel, Some("n")), Some(Some("name".into())));
    assert_eq!(steps_backward(&sel, Some("x")), None);
    assert_eq!(steps_backward(&sel, None), Some(Some("name".into())));
    assert_eq!(steps_backward(&[Step::Reset], Some("n")), Some(None));
    assert_eq!(steps_backward(&[], Some("n")), Some(Some("n".into())));
}

#[test]
fn append_mutates_receiver() {
    let src = "def f(rows):\n    out = []\n    for r in rows:\n        out.append(r)\n    return out\n";
    let g = graph(src, "f");
    let out2 = var(&g, "out", 2);
    let r = var(&g, "r", 1);
    assert!(has_edge(&g, r, out2));
    assert!(edge(&g, r, out2).effect.is_empty());
}

#[test]
fn method_call_statement_versions_receiver() {
    let g = graph("def f(model, row):\n    model.fit(row)\n    return model\n", "f");
    let call = find(&g, NodeTag::CallSite, "model.fit")[0].id;
    let m1 = var(&g, "model", 1);
    assert_eq!(edge(&g, call, m1).port, Port::Receiver);
}

#[test]
fn project_call_versions_bare_name_arguments() {
    let g = graph("def f(row):\n    enrich(row)\n    return row\n", "f");
    let call = find(&g, NodeTag::CallSite, "enrich")[0].id;
    let r1 = var(&g, "row", 1);
    assert_eq!(edge(&g, call, r1).port, Port::ArgOut { arg: 0 });
    // builtins do not mutate
    let g = graph("def f(row):\n    print(row)\n    return row\n", "f");
    assert!(find(&g, NodeTag::VariableVersion, "row").is_empty());
}

fn template_of(stmt: &str) -> (TemplateSource, u32) {
    let g = graph(&format!("def f(a, b):\n    {stmt}\n"), "f");
    let (n, info) = log_node(&g);
    let slots: std::collections::BTreeSet<u32> =
        g.edges.iter().filter(|e| e.to == n.id).filter_map(|e| e.slot).collect();
    assert_eq!(slots, (0..info.slot_count).collect(), "slot completeness for {stmt}");
    (info.template.clone(), info.slot_count)
}

#[test]
fn template_forms() {
    use flowredact::format::SlotKind;
    assert_eq!(
        template_of("log.info('done')"),
        (TemplateSource::Literal { text: "done".into() }, 0)
    );
    assert_eq!(
        template_of("log.info('x %s y %d', a, b)"),
        (
            TemplateSource::Printf {
                format: "x %s y %d".into()
            },
            2
        )
    );
    assert_eq!(
        template_of("log.info('x %s' % a)"),
        (TemplateSource::Printf { format: "x %s".into() }, 1)
    );
    assert_eq!(
        template_of("log.info('{} and {k}'.format(a, k=b))"),
        (
            TemplateSource::Brace {
                format: "{} and {k}".into()
            },
            2
        )
    );
    let (t, n) = template_of("log.info(f'a={a:.2f} b={b}')");
    assert_eq!(n, 2);
    assert_eq!(
        t,
        TemplateSource::Pieces {
            pieces: vec![
                TemplatePiece::Text { text: "a=".into() },
                TemplatePiece::Slot { kind: SlotKind::Number },
                TemplatePiece::Text { text: " b=".into() },
                TemplatePiece::Slot { kind: SlotKind::Text },
            ]
        }
    );
    let (t, n) = template_of("log.info('a' + a + 'b' + str(b))");
    assert_eq!(n, 2);
    assert_eq!(t.display(), "a{}b{}");
    assert_eq!(template_of("log.info(a)"), (TemplateSource::Whole, 1));
    assert_eq!(template_of("log.info('%s %s', a)"), (TemplateSource::Whole, 1));
    assert_eq!(template_of("log.info('%(k)s', a)"), (TemplateSource::Whole, 1));
    assert_eq!(
        template_of("log.info('100%')"),
        (TemplateSource::Literal { text: "100%".into() }, 0)
    );
}

#[test]
fn module_unit_exports_globals_and_logs() {
    let src =
        "import tabular\nrows = tabular.read_csv('customers.csv')\nfor r in rows:\n    log.info('%s', r['name'])\n";
    let g = graph(src, "__main__");
    let read = &find(&g, NodeTag::SourceRead, "tabular.read_csv")[0];
    let NodeKind::SourceRead { source_key, .. } = &read.kind else {
        unreachable!()
    };
    assert_eq!(source_key.as_deref(), Some("customers.csv"));
    assert_eq!(find(&g, NodeTag::Export, "rows").len(), 1);
    assert_eq!(g.count(NodeTag::LogStatement), 1);
}

#[test]
fn opaque_lambda_consumes_scope() {
    let g = graph("def f(a, b):\n    g = lambda z: z + a\n    return g\n", "f");
    let op = g.nodes.iter().find(|n| n.kind.tag() == NodeTag::Opaque).unwrap();
    assert!(has_edge(&g, 0, op.id) && has_edge(&g, 1, op.id));
}

#[test]
fn pruning_removes_dead_code() {
    let src = "def f(p):\n    tmp = noise()\n    x = p\n    log.info('%s', x)\n";
    let g = graph(src, "f");
    let pruned = prune_dfg(&g);
    assert!(find(&pruned, NodeTag::VariableVersion, "tmp").is_empty());
    assert!(find(&pruned, NodeTag::CallSite, "noise").is_empty());
    assert_eq!(pruned.count(NodeTag::VariableVersion), 1);
    let chain = graph("def f(p):\n    x = p\n    log.info('%s', x)\n", "f");
    assert_eq!(prune_dfg(&chain), chain);
}

#[test]
fn pruning_keeps_call_sites_feeding_callees() {
    let g = graph("def f(rows):\n    for r in rows:\n        report(r)\n", "f");
    let pruned = prune_dfg(&g);
    assert_eq!(find(&pruned, NodeTag::CallSite, "report").len(), 1);
    assert!(pruned.parameter(0).is_some());
}

#[test]
fn multi_line_log_records_span() {
    let g = graph("def f(a):\n    log.info(\n        '%s',\n        a,\n    )\n", "f");
    let (n, info) = log_node(&g);
    assert_eq!((n.line, info.end_line), (2, 5));
}

#[test]
fn build_is_deterministic() {
    let src = "def f(a, b):\n    x = {'k': a, 'j': b}\n    for i in a:\n        if i:\n            x = b\n    log.info('%s', x)\n";
    assert_eq!(graph(src, "f"), graph(src, "f"));
}
