//! Schema-versioned JSON/JSONL persistence, run configs and the exact
//! solution cache.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ising::ExactSolution;

pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_FIELD: &str = "schema_version";
/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "QAOA_ANGLES_CACHE";
const EXACT_CACHE_FILE: &str = "exact.jsonl";

fn stamp<T: Serialize>(item: &T) -> Result<Value> {
    let mut v = serde_json::to_value(item)?;
    match &mut v {
        Value::Object(map) => {
            map.insert(SCHEMA_FIELD.into(), Value::from(SCHEMA_VERSION));
            Ok(v)
        }
        _ => Err(Error::Parameter("only JSON objects can be stored".into())),
    }
}

fn unstamp(path: &Path, mut v: Value) -> Result<Value> {
    let found = match &mut v {
        Value::Object(map) => map.remove(SCHEMA_FIELD).and_then(|f| f.as_u64()),
        _ => None,
    };
    if found != Some(u64::from(SCHEMA_VERSION)) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: SCHEMA_VERSION,
            found,
        });
    }
    Ok(v)
}

fn atomic_write(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let lines = items
        .iter()
        .map(|i| stamp(i).map(|v| v.to_string()))
        .collect::<Result<Vec<_>>>()?;
    atomic_write(path, |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            source: e,
        };
        let v: Value = serde_json::from_str(&line).map_err(parse)?;
        let v = unstamp(path, v)?;
        out.push(serde_json::from_value(v).map_err(parse)?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&stamp(item)?)?;
    atomic_write(path, |w| writeln!(w, "{text}"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        source: e,
    })?;
    Ok(serde_json::from_value(unstamp(path, v)?)?)
}

/// `<out>.config.json` next to an output file.
pub fn config_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// Records the resolved configuration of a run next to its output.
pub fn write_run_config<T: Serialize>(out: &Path, command: &str, config: &T) -> Result<()> {
    #[derive(Serialize)]
    struct RunConfig<'a, T> {
        command: &'a str,
        config: &'a T,
    }
    write_json(&config_path(out), &RunConfig { command, config })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactRecord {
    pub instance_id: String,
    #[serde(flatten)]
    pub solution: ExactSolution,
}

pub fn read_exact(path: &Path) -> Result<BTreeMap<String, ExactSolution>> {
    Ok(read_jsonl::<ExactRecord>(path)?
        .into_iter()
        .map(|r| (r.instance_id, r.solution))
        .collect())
}

pub fn write_exact(path: &Path, solutions: &BTreeMap<String, ExactSolution>) -> Result<()> {
    let records: Vec<ExactRecord> = solutions
        .iter()
        .map(|(id, s)| ExactRecord {
            instance_id: id.clone(),
            solution: s.clone(),
        })
        .collect();
    write_jsonl(path, &records)
}

/// Cache directory from the environment, if set.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Exact solutions stored in the cache directory (empty when unset or absent).
pub fn load_exact_cache() -> Result<BTreeMap<String, ExactSolution>> {
    match cache_dir().map(|d| d.join(EXACT_CACHE_FILE)) {
        Some(p) if p.exists() => read_exact(&p),
        _ => Ok(BTreeMap::new()),
    }
}

/// Merges `new` into the cache; a no-op when no cache directory is set.
pub fn update_exact_cache(new: &BTreeMap<String, ExactSolution>) -> Result<()> {
    let Some(dir) = cache_dir() else {
        return Ok(());
    };
    if new.is_empty() {
        return Ok(());
    }
    let path = dir.join(EXACT_CACHE_FILE);
    let mut all = if path.exists() {
        read_exact(&path)?
    } else {
        BTreeMap::new()
    };
    all.extend(new.iter().map(|(k, v)| (k.clone(), v.clone())));
    write_exact(&path, &all)
}

/// Writes any serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
    atomic_write(path, |f| f.write_all(&bytes))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parameter(format!("{}: row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
