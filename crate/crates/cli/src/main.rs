use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use flowredact::config::ProjectConfig;
use flowredact::eval::{evaluate, parse_gold, predicted_labels, write_gold};
use flowredact::pipeline::{config_path, Project, Redactor, RunOptions};
use flowredact::repository::Repository;

#[derive(Parser)]
#[command(
    name = "flowredact",
    version,
    about = "Redact sensitive values from logs using the program's data flow"
)]
struct Cli {
    /// Project config file, or a directory containing flowredact.toml.
    #[arg(long, global = true, default_value = ".")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List scanned files and the functions found in them.
    Scan {
        #[arg(long)]
        json: bool,
    },
    /// Build the graph repository, reusing records of unchanged files.
    Build {
        /// Ignore the stored repository and rebuild everything.
        #[arg(long)]
        full: bool,
    },
    /// Redact a log file (or stdin) and write the result to a file (or stdout).
    Redact {
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the JSON run report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Include source-to-statement paths in the report.
        #[arg(long)]
        explain: bool,
        /// Build graphs in memory instead of opening the stored repository.
        #[arg(long)]
        rebuild: bool,
    },
    /// Show where the values of a log statement come from.
    Explain {
        /// Source location as `path:line`.
        location: String,
        #[arg(long)]
        json: bool,
    },
    /// Score redaction of a log against gold labels.
    Eval {
        log: PathBuf,
        gold: PathBuf,
        #[arg(long)]
        rebuild: bool,
    },
    /// Run the project under the taint-tracking interpreter and emit its log and gold labels.
    Oracle {
        /// Entry script, relative to the project root.
        #[arg(long)]
        entry: String,
        /// Where to write the log (default: stdout).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_project(config: &Path) -> Result<Project> {
    let path = config_path(config);
    let cfg = ProjectConfig::load(&path)?;
    Ok(Project::load(cfg)?)
}

fn repository(project: &Project, rebuild: bool) -> Result<Repository> {
    if rebuild {
        return Ok(project.build(None).0);
    }
    Ok(project.repository()?)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let project = load_project(&cli.config)?;
    for d in &project.scan_diagnostics {
        eprintln!("warning: {d}");
    }
    match cli.command {
        Command::Scan { json } => scan(&project, json),
        Command::Build { full } => build(&project, full),
        Command::Redact {
            input,
            output,
            report,
            explain,
            rebuild,
        } => {
            let repo = repository(&project, rebuild)?;
            let text = match &input {
                Some(p) => fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
                None => {
                    let mut s = String::new();
                    io::stdin().read_to_string(&mut s)?;
                    s
                }
            };
            let redactor = Redactor::new(&repo, &project.annotations, &project.config)?;
            let out = redactor.run(&text, RunOptions { explain })?;
            write_out(output.as_deref(), &out.text)?;
            if let Some(p) = report {
                let json = serde_json::to_string_pretty(&out.report)?;
                fs::write(&p, json + "\n").with_context(|| format!("cannot write {}", p.display()))?;
            }
            let s = &out.report.summary;
            eprintln!(
                "{} records: {} redacted, {} unchanged, {} dropped by rule, {} dropped by policy, {} passed by policy, {} ambiguous, {} flagged",
                s.records, s.redacted, s.unchanged, s.dropped_by_rule, s.dropped_by_policy, s.passed_by_policy, s.ambiguous, s.flagged
            );
            Ok(if out.report.has_flagged() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Explain { location, json } => explain(&project, &location, json),
        Command::Eval { log, gold, rebuild } => {
            let repo = repository(&project, rebuild)?;
            let text = fs::read_to_string(&log).with_context(|| format!("cannot read {}", log.display()))?;
            let gold_text = fs::read_to_string(&gold).with_context(|| format!("cannot read {}", gold.display()))?;
            let gold = parse_gold(&gold_text)?;
            let redactor = Redactor::new(&repo, &project.annotations, &project.config)?;
            let out = redactor.run(&text, RunOptions::default())?;
            let lines: BTreeSet<usize> = out.report.records.iter().map(|r| r.line_no).collect();
            let result = evaluate(&predicted_labels(&out.report), &gold, &lines)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { entry, log, gold } => {
            let run = flowredact::oracle::run_project(&project, &entry)?;
            write_out(log.as_deref(), &run.log_text())?;
            if let Some(g) = gold {
                fs::write(&g, write_gold(&run.gold(&project.annotations)))
                    .with_context(|| format!("cannot write {}", g.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn scan(project: &Project, json: bool) -> Result<ExitCode> {
    let (repo, _) = project.build(None);
    let mut out = String::new();
    if json {
        let files: Vec<serde_json::Value> = project
            .files
            .iter()
            .map(|f| {
                let functions: Vec<String> = repo.functions_in(&f.path).iter().map(|id| id.to_string()).collect();
                serde_json::json!({ "path": f.path, "functions": functions })
            })
            .collect();
        let diagnostics: Vec<_> = repo.diagnostics().collect();
        out = serde_json::to_string_pretty(&serde_json::json!({ "files": files, "diagnostics": diagnostics }))?;
        out.push('\n');
    } else {
        for f in &project.files {
            writeln!(out, "{}", f.path)?;
            for id in repo.functions_in(&f.path) {
                writeln!(out, "  {id}")?;
            }
        }
        for d in repo.diagnostics() {
            eprintln!("warning: {d}");
        }
    }
    write_out(None, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn build(project: &Project, full: bool) -> Result<ExitCode> {
    let dir = &project.config.repository_path;
    let previous = if full || !dir.join(flowredact::repository::INDEX_FILE).exists() {
        None
    } else {
        // A stale or unreadable repository is only a cache here.
        Repository::open(dir).ok()
    };
    let (repo, report) = project.build(previous.as_ref());
    repo.save(dir)?;
    for d in repo.diagnostics() {
        eprintln!("warning: {d}");
    }
    println!(
        "{} functions; {} files built, {} reused, {} parse failures -> {}",
        report.functions,
        report.files_built,
        report.files_reused,
        report.parse_failures,
        dir.display()
    );
    Ok(if report.parse_failures > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn explain(project: &Project, location: &str, json: bool) -> Result<ExitCode> {
    let Some((path, line)) = location.rsplit_once(':') else {
        bail!("expected path:line, got {location:?}");
    };
    let line: u32 = line
        .parse()
        .with_context(|| format!("bad line number in {location:?}"))?;
    let repo = project.repository()?;
    let redactor = Redactor::new(&repo, &project.annotations, &project.config)?;
    let (stmt, report) = redactor.explain_location(path, line)?;
    let mut out = String::new();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&*report)?)?;
        write_out(None, &out)?;
        return Ok(ExitCode::SUCCESS);
    }
    writeln!(out, "{} in {}", stmt.format_string, stmt.function)?;
    for (slot, findings) in report.slots.iter().enumerate() {
        if findings.is_empty() {
            writeln!(out, "slot {slot}: no sensitive sources")?;
            continue;
        }
        for f in findings {
            let rule = project
                .annotations
                .spec(&f.source_id)
                .and_then(|s| s.attribute(&f.attribute))
                .map(|a| a.rule.kind.name().to_string())
                .unwrap_or_else(|| "?".into());
            writeln!(
                out,
                "slot {slot}: {}.{} ({:?}, rule {rule})",
                f.source_id, f.attribute, f.confidence
            )?;
            for step in &f.path {
                let at = repo.get(&step.function).ok().and_then(|r| {
                    r.graph
                        .node(step.node)
                        .map(|n| format!("{}:{}", step.function.path, n.line))
                });
                writeln!(out, "    {} {}", at.unwrap_or_default(), step.function.qualified_name)?;
            }
        }
    }
    if report.truncated {
        writeln!(out, "search truncated at configured limits")?;
    }
    for n in &report.notes {
        writeln!(out, "note: {n}")?;
    }
    write_out(None, &out)?;
    Ok(ExitCode::SUCCESS)
}
