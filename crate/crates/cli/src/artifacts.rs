//! Output directory writer. Every file carries the config hash and the code version.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliResult;

pub struct Artifacts {
    pub dir: PathBuf,
    pub config_hash: String,
}

impl Artifacts {
    pub fn create(dir: &Path, config_hash: &str) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), config_hash: config_hash.to_string() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn stamp(&self) -> Value {
        json!({ "config_hash": self.config_hash, "version": hymlab::VERSION })
    }

    fn stamped(&self, value: impl Serialize) -> CliResult<Value> {
        let v = serde_json::to_value(value)?;
        let mut out = Map::new();
        out.insert("config_hash".into(), self.config_hash.clone().into());
        out.insert("version".into(), hymlab::VERSION.into());
        match v {
            Value::Object(m) => out.extend(m),
            other => {
                out.insert("value".into(), other);
            }
        }
        Ok(Value::Object(out))
    }

    pub fn write_json(&self, name: &str, value: impl Serialize) -> CliResult<()> {
        let v = self.stamped(value)?;
        fs::write(self.path(name), serde_json::to_vec_pretty(&v)?)?;
        Ok(())
    }

    /// Truncates `name`; used before appending a fresh series.
    pub fn reset(&self, name: &str) -> CliResult<()> {
        File::create(self.path(name))?;
        Ok(())
    }

    pub fn append_jsonl(&self, name: &str, value: impl Serialize) -> CliResult<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(name))?;
        serde_json::to_writer(&mut f, &self.stamped(value)?)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// CSV with a leading `#` comment line holding the stamp.
    pub fn write_csv<R>(&self, name: &str, header: &[&str], rows: R) -> CliResult<()>
    where
        R: IntoIterator,
        R::Item: IntoIterator,
        <R::Item as IntoIterator>::Item: ToString,
    {
        let mut f = File::create(self.path(name))?;
        writeln!(f, "# config_hash={} version={}", self.config_hash, hymlab::VERSION)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.into_iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_file_is_stamped() {
        let dir = tempfile::tempdir().unwrap();
        let a = Artifacts::create(dir.path(), "abc").unwrap();
        a.write_json("s.json", json!({"x": 1})).unwrap();
        a.append_jsonl("t.jsonl", json!({"y": 2})).unwrap();
        a.append_jsonl("t.jsonl", json!({"y": 3})).unwrap();
        a.write_csv("c.csv", &["a", "b"], vec![vec![1.0, 2.0]]).unwrap();
        let s: Value = serde_json::from_slice(&fs::read(a.path("s.json")).unwrap()).unwrap();
        assert_eq!(s["config_hash"], "abc");
        assert_eq!(s["x"], 1);
        let lines: Vec<Value> = fs::read_to_string(a.path("t.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l["version"] == hymlab::VERSION));
        let csv = fs::read_to_string(a.path("c.csv")).unwrap();
        assert!(csv.starts_with("# config_hash=abc"));
        assert!(csv.contains("a,b\n1,2\n"));
    }
}
