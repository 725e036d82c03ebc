//! Tables, output directories and run manifests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    I(i64),
    B(bool),
    S(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:.10e}"),
            Cell::U(v) => v.to_string(),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(v) if v.is_finite() => json!(v),
            Cell::F(v) => json!(v.to_string()),
            Cell::U(v) => json!(v),
            Cell::I(v) => json!(v),
            Cell::B(v) => json!(v),
            Cell::S(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// `{"columns": [...], "rows": [[...], ...]}`.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let mut s = serde_json::to_string_pretty(&json!({ "columns": self.columns, "rows": rows }))
            .expect("tables always serialise");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Files written by one run. Nothing outside this list is touched; on
/// [`abort`](Self::abort) the files (and the directory, if the run created
/// it) are removed again.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    created: bool,
    format: Format,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path, format: Format) -> io::Result<Self> {
        let created = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf(), created, format, files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn write_table(&mut self, stem: &str, table: &Table) -> io::Result<()> {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        self.write_text(&format!("{stem}.{ext}"), &table.render(self.format))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> io::Result<()> {
        let path = self.dir.join(name);
        // record before writing so a failed write is still cleaned up
        self.files.push(FileEntry { name: name.to_string(), bytes: text.len(), sha256: sha256_hex(text.as_bytes()) });
        fs::write(path, text)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes `manifest.json` listing every file with its hash.
    pub fn finish(mut self, mut manifest: serde_json::Map<String, Value>) -> io::Result<PathBuf> {
        manifest.insert("files".into(), serde_json::to_value(&self.files).expect("entries serialise"));
        let mut text = serde_json::to_string_pretty(&Value::Object(manifest)).expect("manifest serialises");
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text)?;
        self.files.clear();
        self.created = false;
        Ok(path)
    }

    pub fn abort(mut self) {
        self.cleanup();
    }

    fn cleanup(&mut self) {
        for f in self.files.drain(..) {
            let _ = fs::remove_file(self.dir.join(&f.name));
        }
        let _ = fs::remove_file(self.dir.join("manifest.json"));
        if self.created {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_shapes() {
        let mut t = Table::new(&["x", "label", "n"]);
        t.push(vec![0.5.into(), "a".into(), 3usize.into()]);
        assert_eq!(t.to_csv(), "x,label,n\n5.0000000000e-1,a,3\n");
        let v: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["rows"][0][2], json!(3));
        assert_eq!(v["columns"][1], json!("label"));
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn abort_removes_written_files() {
        let base = std::env::temp_dir().join(format!("ddcomm-out-{}", std::process::id()));
        let _ = fs::remove_dir_all(&base);
        let mut o = OutputDir::create(&base, Format::Csv).unwrap();
        o.write_text("a.csv", "x\n").unwrap();
        assert!(base.join("a.csv").exists());
        o.abort();
        assert!(!base.exists());
    }
}
