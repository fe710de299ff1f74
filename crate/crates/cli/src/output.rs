//! In-memory output files, written only once a command has fully succeeded.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// Files produced by one command, in emission order.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> serde_json::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file under `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

/// CSV with columns `t,x,value,light_cone_tag`.
pub struct Csv {
    text: String,
}

impl Csv {
    /// `quantity` names what `value` holds and its atomic unit.
    pub fn new(quantity: &str) -> Self {
        let mut text = String::from("# units: au\n");
        text.push_str(&format!("# t: time, x: length, value: {quantity}\n"));
        text.push_str("t,x,value,light_cone_tag\n");
        Self { text }
    }

    /// `None` leaves the value empty (guarded node).
    pub fn row(&mut self, t: f64, x: f64, value: Option<f64>, tag: &str) {
        let v = value.map(num).unwrap_or_default();
        self.text.push_str(&format!("{},{},{},{}\n", num(t), num(x), v, tag));
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}
