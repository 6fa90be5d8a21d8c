use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nls_gibbs::gibbs::{read_jsonl, GibbsEnsemble};
use nls_gibbs::{Error, PeriodicField};
use serde::Serialize;
use serde_json::Value;

use crate::{Cli, FieldInput, OutputArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad options or unreadable inputs (exit 2).
    Config(String),
    /// The computation itself failed (exit 1).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::GridTooSmall { .. }
            | Error::NotRealValued(_)
            | Error::OddModes(_)
            | Error::Format(_)
            | Error::Json(_)
            | Error::Io(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn open(path: &str) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| config(format!("cannot open {path}: {e}")))
}

fn create(path: &str) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| config(format!("cannot create {path}: {e}")))
}

pub fn read_ensemble(path: &str) -> CliResult<GibbsEnsemble> {
    read_jsonl(open(path)?).map_err(|e| config(format!("{path}: {e}")))
}

pub fn read_field_file(path: &str) -> CliResult<PeriodicField> {
    let mut text = String::new();
    for line in open(path)?.lines() {
        text.push_str(&line.map_err(|e| config(format!("{path}: {e}")))?);
        text.push('\n');
    }
    serde_json::from_str(&text).map_err(|e| config(format!("{path}: {e}")))
}

pub fn read_field(input: &FieldInput) -> CliResult<PeriodicField> {
    match (&input.field, &input.ensemble, input.member) {
        (Some(path), None, _) => read_field_file(path),
        (None, Some(path), Some(i)) => {
            let ens = read_ensemble(path)?;
            ens.samples
                .get(i)
                .cloned()
                .ok_or_else(|| config(format!("member {i} out of range (ensemble has {})", ens.len())))
        }
        _ => Err(config("give --field, or --ensemble with --member")),
    }
}

pub fn write_bytes(path: &str, bytes: &[u8]) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| config(format!("cannot write {path}: {e}")))
}

pub fn write_json(path: &str, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Writes a CSV with the given header and rows.
pub fn write_csv(path: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let err = |e: csv::Error| config(format!("cannot write {path}: {e}"));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.flush().map_err(|e| config(format!("cannot write {path}: {e}")))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    workers: usize,
    timestamp_unix: u64,
    config: &'a Cli,
    outputs: &'a [String],
}

pub fn write_manifest(cli: &Cli, command: &str, path: Option<&str>, outputs: &[String]) -> CliResult<()> {
    let manifest = Manifest {
        tool: "nls-gibbs",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cli.seed,
        workers: rayon::current_num_threads(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config: cli,
        outputs,
    };
    match path {
        Some(p) => write_json(p, &manifest),
        None => {
            let line = serde_json::to_string(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
            eprintln!("{line}");
            Ok(())
        }
    }
}

pub fn manifest_path(out: &str) -> String {
    let p = Path::new(out);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    p.with_file_name(format!("{stem}.manifest.json")).to_string_lossy().into_owned()
}

/// Writes `{"command": name, ...result}` and the manifest.
pub fn emit(cli: &Cli, name: &str, output: &OutputArgs, result: &impl Serialize, mut extra: Vec<String>) -> CliResult<()> {
    let mut value = serde_json::to_value(result).map_err(|e| CliError::Numerical(e.to_string()))?;
    if let Value::Object(map) = &mut value {
        map.insert("command".into(), Value::String(name.into()));
    }
    match &output.out {
        Some(path) => {
            write_json(path, &value)?;
            let mut outputs = vec![path.clone()];
            outputs.append(&mut extra);
            let manifest = output.manifest.clone().unwrap_or_else(|| manifest_path(path));
            write_manifest(cli, name, Some(&manifest), &outputs)
        }
        None => {
            let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Numerical(e.to_string()))?;
            // A closed pipe (e.g. `| head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            write_manifest(cli, name, output.manifest.as_deref(), &extra)
        }
    }
}
