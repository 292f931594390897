//! Collected output files, written by a single writer once computation ends.

use std::path::{Path, PathBuf};

use crate::manifest::{sha256_hex, OutputFile};
use crate::CliError;

/// Full round-trip precision; `NaN`/`inf` are spelled out.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

/// CSV table builder with a fixed header.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
    columns: Vec<String>,
    trailer: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Self {
            writer,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            trailer: Vec::new(),
        }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    /// Appends a `# key = value` line after the rows.
    pub fn comment(&mut self, line: impl Into<String>) {
        self.trailer.push(line.into());
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn into_bytes(self) -> Vec<u8> {
        let mut bytes = self.writer.into_inner().expect("in-memory flush");
        for line in self.trailer {
            bytes.extend_from_slice(format!("# {line}\n").as_bytes());
        }
        bytes
    }
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: serde::Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    /// Adds the table and, if requested, a gnuplot script plotting `y` against `x`.
    pub fn add_table(&mut self, name: &str, table: Table, plot: Option<(&str, &str)>) {
        if let Some((x, y)) = plot {
            let col = |c: &str| table.columns().iter().position(|k| k == c).map(|i| i + 1);
            if let (Some(xi), Some(yi)) = (col(x), col(y)) {
                let stem = name.trim_end_matches(".csv");
                let script = format!(
                    "set datafile separator ','\nset key autotitle columnhead\nset xlabel '{x}'\nset ylabel '{y}'\n\
                     set terminal pngcairo size 900,600\nset output '{stem}.png'\nplot '{name}' using {xi}:{yi} with linespoints\n"
                );
                self.add(format!("{stem}.gp"), script.into_bytes());
            }
        }
        self.add(name, table.into_bytes());
    }

    /// Writes every file into `dir` and returns their hashes in insertion order.
    pub fn write(&self, dir: &Path) -> Result<Vec<OutputFile>, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut list = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
            list.push(OutputFile {
                file: name.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        Ok(list)
    }
}

/// `--out`, then the config's `output_dir`, then `$PENSPDE_OUT_DIR`, then `./penspde-out`.
pub fn resolve_dir(flag: Option<&Path>, config: Option<&Path>, env: Option<PathBuf>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or(env)
        .unwrap_or_else(|| PathBuf::from("penspde-out"))
}
