//! `run` and `replay`: output directories, manifests and error records.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::commands::{execute, Context};
use crate::config::{parse, Command, ConfigError, ExperimentConfig, Violation};
use crate::control_file::read_control;
use crate::exec::PoolExecutor;
use crate::output::sha256_hex;

pub const MANIFEST: &str = "manifest.txt";
pub const MANIFEST_VERSION: u32 = 1;
pub const CONFIG_COPY: &str = "config.toml";
pub const CONTROL_COPY: &str = "control_input.txt";
pub const REPLAY_DIR: &str = "replay";

pub fn code_version() -> String {
    format!("meanfield {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Runtime(#[from] meanfield_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("replay mismatch in {file}: expected {expected}, found {found}")]
    Mismatch {
        file: String,
        expected: String,
        found: String,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io { .. } => 1,
            RunError::Config(_) | RunError::Manifest(_) => 2,
            RunError::Runtime(_) => 3,
            RunError::Mismatch { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Io { .. } => "io",
            RunError::Config(_) => "config",
            RunError::Manifest(_) => "manifest",
            RunError::Runtime(_) => "runtime",
            RunError::Mismatch { .. } => "replay_mismatch",
        }
    }

    /// Flat `key=value` lines describing the failure.
    pub fn record(&self, command: &str) -> String {
        let mut s = String::new();
        let line = |s: &mut String, k: &str, v: &str| writeln!(s, "{k}={}", v.replace('\n', " ")).unwrap();
        line(&mut s, "status", "error");
        line(&mut s, "kind", self.kind());
        line(&mut s, "exit_code", &self.exit_code().to_string());
        line(&mut s, "command", command);
        match self {
            RunError::Config(e) => {
                line(&mut s, "violations", &e.violations.len().to_string());
                for (i, v) in e.violations.iter().enumerate() {
                    line(&mut s, &format!("violation.{i}"), &format!("{}: {}", v.field, v.message));
                }
            }
            RunError::Runtime(e) => {
                use meanfield_core::Error as E;
                if let E::NonFinite { step, particle } | E::WeightOverflow { step, particle } | E::Control { step, particle, .. } =
                    e
                {
                    line(&mut s, "step", &step.to_string());
                    line(&mut s, "particle", &particle.to_string());
                }
                line(&mut s, "message", &e.to_string());
            }
            RunError::Mismatch { file, expected, found } => {
                line(&mut s, "file", file);
                line(&mut s, "expected_sha256", expected);
                line(&mut s, "found_sha256", found);
            }
            _ => line(&mut s, "message", &self.to_string()),
        }
        s
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(io(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(io(path))
}

/// What a finished run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub output_dir: PathBuf,
    pub manifest: PathBuf,
    /// Output file names with their SHA-256, in write order.
    pub outputs: Vec<(String, String)>,
}

/// Runs `command` on the config at `config_path`.
///
/// The output directory is `output_dir` when given, else `output.dir` from
/// the config, else `meanfield-out/<command>`.
pub fn run(command: Command, config_path: &Path, output_dir: Option<&Path>, threads: usize) -> Result<RunSummary, RunError> {
    let text = read(config_path)?;
    let cfg = parse(&text, command)?;
    let control = match cfg.control.as_ref().and_then(|c| c.file.as_ref()) {
        Some(file) => {
            let base = config_path.parent().unwrap_or(Path::new("."));
            let path = base.join(file);
            let text = fs::read_to_string(&path).map_err(|e| control_violation(format!("cannot read {}: {e}", path.display())))?;
            Some(text)
        }
        None => None,
    };
    let dir = match (output_dir, cfg.output.as_ref().and_then(|o| o.dir.as_ref())) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => Path::new("meanfield-out").join(command.name()),
    };
    execute_into(command, &cfg, control.as_deref(), &dir, threads)
}

fn control_violation(message: String) -> RunError {
    RunError::Config(ConfigError {
        violations: vec![Violation {
            field: "control.file".into(),
            message,
        }],
    })
}

fn run_id(command: Command, canonical: &str, control: Option<&str>) -> String {
    let mut material = format!("{command}\n{}\n{canonical}", code_version());
    if let Some(c) = control {
        material.push_str("\ncontrol\n");
        material.push_str(c);
    }
    sha256_hex(material.as_bytes())[..16].to_string()
}

fn execute_into(
    command: Command,
    cfg: &ExperimentConfig,
    control_text: Option<&str>,
    dir: &Path,
    threads: usize,
) -> Result<RunSummary, RunError> {
    let ctx = Context {
        control: match control_text {
            Some(t) => Some(read_control(t, Some(cfg.dims())).map_err(|e| control_violation(e.to_string()))?),
            None => None,
        },
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let canonical = cfg.to_toml();
    let id = run_id(command, &canonical, control_text);
    let exec = PoolExecutor::new(threads).map_err(io(dir))?;
    let started = Instant::now();
    let produced = match execute(&exec, command, cfg, &ctx) {
        Ok(p) => p,
        Err(e) => {
            let err = RunError::Runtime(e);
            let _ = fs::write(dir.join("error.txt"), err.record(command.name()));
            return Err(err);
        }
    };
    let wall = started.elapsed().as_secs_f64();
    let _ = fs::remove_file(dir.join("error.txt"));

    let mut outputs = Vec::new();
    for table in &produced.tables {
        let bytes = table.to_bytes(&id).map_err(|e| io(dir)(std::io::Error::other(e)))?;
        write(&dir.join(&table.name), &bytes)?;
        outputs.push((table.name.clone(), sha256_hex(&bytes)));
    }
    for artifact in &produced.artifacts {
        write(&dir.join(&artifact.name), &artifact.bytes)?;
        outputs.push((artifact.name.clone(), sha256_hex(&artifact.bytes)));
    }
    write(&dir.join(CONFIG_COPY), canonical.as_bytes())?;

    let mut m = String::new();
    writeln!(m, "manifest_version={MANIFEST_VERSION}").unwrap();
    writeln!(m, "run_id={id}").unwrap();
    writeln!(m, "command={command}").unwrap();
    writeln!(m, "code_version={}", code_version()).unwrap();
    writeln!(m, "config={CONFIG_COPY}").unwrap();
    writeln!(m, "config_sha256={}", sha256_hex(canonical.as_bytes())).unwrap();
    writeln!(m, "seed={}", cfg.seed).unwrap();
    if let Some(c) = control_text {
        write(&dir.join(CONTROL_COPY), c.as_bytes())?;
        writeln!(m, "control_input={CONTROL_COPY}").unwrap();
        writeln!(m, "control_input_sha256={}", sha256_hex(c.as_bytes())).unwrap();
    }
    writeln!(m, "threads={}", exec.threads()).unwrap();
    writeln!(m, "wall_time_seconds={wall:.3}").unwrap();
    for (name, hash) in &outputs {
        writeln!(m, "output.{name}={hash}").unwrap();
    }
    let manifest = dir.join(MANIFEST);
    write(&manifest, m.as_bytes())?;
    Ok(RunSummary {
        run_id: id,
        output_dir: dir.to_path_buf(),
        manifest,
        outputs,
    })
}

/// Parsed `key=value` manifest, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RunError::Manifest(format!("line {} has no `=`", i + 1)))?;
            if entries.iter().any(|(key, _)| key == k) {
                return Err(RunError::Manifest(format!("duplicate key `{k}`")));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, RunError> {
        self.get(key).ok_or_else(|| RunError::Manifest(format!("missing `{key}`")))
    }

    pub fn outputs(&self) -> Vec<(&str, &str)> {
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("output.").map(|name| (name, v.as_str())))
            .collect()
    }
}

/// Re-executes the run recorded in `manifest_path` into its `replay/`
/// subdirectory and compares every output hash.
pub fn replay(manifest_path: &Path, threads: usize) -> Result<RunSummary, RunError> {
    let manifest = Manifest::parse(&read(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.require("manifest_version")? != MANIFEST_VERSION.to_string() {
        return Err(RunError::Manifest("unsupported manifest_version".into()));
    }
    let command: Command = manifest.require("command")?.parse().map_err(RunError::Manifest)?;
    let recorded_version = manifest.require("code_version")?;
    if recorded_version != code_version() {
        return Err(RunError::Manifest(format!(
            "recorded with `{recorded_version}`, this is `{}`",
            code_version()
        )));
    }
    let config_path = dir.join(manifest.require("config")?);
    let text = read(&config_path)?;
    check_hash(manifest.require("config")?, manifest.require("config_sha256")?, text.as_bytes())?;
    let mut cfg = parse(&text, command)?;
    cfg.seed = manifest
        .require("seed")?
        .parse()
        .map_err(|_| RunError::Manifest("seed is not an unsigned integer".into()))?;
    let control = match manifest.get("control_input") {
        Some(name) => {
            let t = read(&dir.join(name))?;
            check_hash(name, manifest.require("control_input_sha256")?, t.as_bytes())?;
            Some(t)
        }
        None => None,
    };
    let recorded = manifest.outputs();
    if recorded.is_empty() {
        return Err(RunError::Manifest("no outputs recorded".into()));
    }
    let target = dir.join(REPLAY_DIR);
    if target.exists() {
        fs::remove_dir_all(&target).map_err(io(&target))?;
    }
    let summary = execute_into(command, &cfg, control.as_deref(), &target, threads)?;
    for (name, expected) in &recorded {
        let found = summary
            .outputs
            .iter()
            .find(|(n, _)| n == name)
            .map_or_else(|| String::from("missing"), |(_, h)| h.clone());
        if found != *expected {
            return Err(mismatch(name, expected, &found));
        }
    }
    if let Some((name, hash)) = summary.outputs.iter().find(|(n, _)| !recorded.iter().any(|(r, _)| r == n)) {
        return Err(mismatch(name, "absent", hash));
    }
    Ok(summary)
}

fn check_hash(file: &str, expected: &str, bytes: &[u8]) -> Result<(), RunError> {
    let found = sha256_hex(bytes);
    if found == expected {
        Ok(())
    } else {
        Err(mismatch(file, expected, &found))
    }
}

fn mismatch(file: &str, expected: &str, found: &str) -> RunError {
    RunError::Mismatch {
        file: file.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
