use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::records::{InteractionRecord, ItemRecord, QueryRecord, RawCorpus, UserRecord};
use crate::error::{Error, Result};

pub const USERS_FILE: &str = "users.jsonl";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const INTERACTIONS_FILE: &str = "interactions.jsonl";

fn read_jsonl<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    let path = dir.join(name);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads the four line-delimited JSON files without any validation beyond
/// per-line syntax.
pub fn read_raw(dir: &Path) -> Result<RawCorpus> {
    Ok(RawCorpus {
        users: read_jsonl::<UserRecord>(dir, USERS_FILE)?,
        items: read_jsonl::<ItemRecord>(dir, ITEMS_FILE)?,
        queries: read_jsonl::<QueryRecord>(dir, QUERIES_FILE)?,
        interactions: read_jsonl::<InteractionRecord>(dir, INTERACTIONS_FILE)?,
    })
}

fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// The exact bytes of each file, in `(name, contents)` form.
pub fn render_raw(raw: &RawCorpus) -> [(&'static str, String); 4] {
    [
        (USERS_FILE, to_jsonl(&raw.users)),
        (ITEMS_FILE, to_jsonl(&raw.items)),
        (QUERIES_FILE, to_jsonl(&raw.queries)),
        (INTERACTIONS_FILE, to_jsonl(&raw.interactions)),
    ]
}

pub fn write_raw(raw: &RawCorpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, contents) in render_raw(raw) {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(contents.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
