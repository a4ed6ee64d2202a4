mod common;

use flowredact::dfg::BuildOptions;
use flowredact::frontend::{FunctionId, LoggerApi, SourceFile};
use flowredact::repository::{project_fingerprint, Repository, RepositoryBuilder, RepositoryError};
use flowredact::syntax::PythonSubset;
use rand::SeedableRng;

fn file(path: &str, content: &str) -> SourceFile {
    SourceFile {
        path: path.into(),
        content: content.into(),
        language: "python".into(),
    }
}

fn opts() -> BuildOptions {
    BuildOptions {
        logger: LoggerApi::default(),
        readers: vec!["read_csv".into()],
    }
}

const MAIN: &str = "import logging\nimport helpers\nlog = logging.getLogger('m')\n\n\
def run(rows):\n    for r in rows:\n        log.info('row %s', helpers.name_of(r))\n\n\
def noop():\n    return 1\n";
const HELPERS: &str = "def name_of(r):\n    return r['name']\n";

fn files() -> Vec<SourceFile> {
    vec![file("helpers.py", HELPERS), file("main.py", MAIN)]
}

#[test]
fn corpus_repository_lists_every_function() {
    let total: usize = common::corpus_apps()
        .iter()
        .map(|app| {
            let (repo, report) = app.project().build(None);
            assert_eq!(repo.len(), app.functions, "{}", app.name);
            assert_eq!(report.functions, app.functions);
            assert_eq!(report.parse_failures, 0);
            repo.len()
        })
        .sum();
    // Hand count of the corpus: 41 definitions plus 11 module units.
    assert_eq!(total, 52);
}

#[test]
fn unchanged_files_are_reused() {
    let (first, r1) = Repository::build(&files(), &PythonSubset, &opts(), None);
    assert_eq!((r1.files_built, r1.files_reused), (2, 0));
    let (second, r2) = Repository::build(&files(), &PythonSubset, &opts(), Some(&first));
    assert_eq!((r2.files_built, r2.files_reused), (0, 2));
    assert_eq!(first.index(), second.index());

    let mut edited = files();
    edited[1].content.push_str("\n\ndef extra():\n    return 2\n");
    let (third, r3) = Repository::build(&edited, &PythonSubset, &opts(), Some(&first));
    assert_eq!((r3.files_built, r3.files_reused), (1, 1));
    assert_eq!(third.len(), first.len() + 1);
    let helpers = FunctionId::new("helpers.py", "name_of", 1);
    assert_eq!(first.get(&helpers).unwrap(), third.get(&helpers).unwrap());
}

#[test]
fn other_build_options_rebuild_everything() {
    let (first, _) = Repository::build(&files(), &PythonSubset, &opts(), None);
    let other = BuildOptions {
        readers: vec!["load_table".into()],
        ..opts()
    };
    let (_, r) = Repository::build(&files(), &PythonSubset, &other, Some(&first));
    assert_eq!(r.files_reused, 0);
    assert!(!first.matches_options(&other));
    assert!(first.matches_options(&opts()));
}

#[test]
fn open_checked_rejects_other_sources() {
    let d = tempfile::tempdir().unwrap();
    let (repo, _) = Repository::build(&files(), &PythonSubset, &opts(), None);
    repo.save(d.path()).unwrap();
    assert!(Repository::open_checked(d.path(), &project_fingerprint(&files())).is_ok());
    let mut edited = files();
    edited[0].content.push(' ');
    let err = Repository::open_checked(d.path(), &project_fingerprint(&edited)).unwrap_err();
    assert!(matches!(err, RepositoryError::StaleRepository { .. }));
}

#[test]
fn parse_failures_are_listed_not_fatal() {
    let mut fs = files();
    fs.push(file("broken.py", "def f(:\n"));
    let (repo, report) = Repository::build(&fs, &PythonSubset, &opts(), None);
    assert_eq!(report.parse_failures, 1);
    assert_eq!(repo.index().parse_failures.len(), 1);
    assert_eq!(repo.index().parse_failures[0].path, "broken.py");
    assert!(!repo.contains_file("broken.py"));
    assert!(repo.contains_file("main.py"));
}

#[test]
fn locations_resolve_to_the_innermost_unit() {
    let (repo, _) = Repository::build(&files(), &PythonSubset, &opts(), None);
    assert_eq!(repo.resolve_location("main.py", 7).unwrap().qualified_name, "run");
    assert_eq!(repo.resolve_location("main.py", 10).unwrap().qualified_name, "noop");
    assert!(repo.resolve_location("main.py", 3).unwrap().is_module_unit());
    assert!(matches!(
        repo.resolve_location("gone.py", 1),
        Err(RepositoryError::NotFound(_))
    ));
}

#[test]
fn duplicate_ids_are_rejected() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let rec = common::random_record(&mut rng, 0);
    let mut b = RepositoryBuilder::new();
    b.put(&rec).unwrap();
    assert!(matches!(b.put(&rec), Err(RepositoryError::DuplicateFunction(_))));
}

#[test]
fn truncated_records_file_is_corrupt() {
    let d = tempfile::tempdir().unwrap();
    let (repo, _) = Repository::build(&files(), &PythonSubset, &opts(), None);
    repo.save(d.path()).unwrap();
    let records = d.path().join(flowredact::repository::RECORDS_FILE);
    let bytes = std::fs::read(&records).unwrap();
    std::fs::write(&records, &bytes[..bytes.len() / 2]).unwrap();
    let failed = Repository::open(d.path())
        .map(|r| r.ids().cloned().collect::<Vec<_>>().iter().any(|id| r.get(id).is_err()))
        .unwrap_or(true);
    assert!(failed);
}
