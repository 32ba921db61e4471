//! Output directory bookkeeping: every file carries the config hash, and
//! the run ends with a manifest listing files, reported values and checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub bound: f64,
    pub passed: bool,
}

pub struct Output {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    files: Vec<String>,
    reports: Vec<(String, f64)>,
    checks: Vec<Check>,
}

/// Quotes a CSV text field.
pub fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Output {
    pub fn create(dir: &Path, cfg: &ExperimentConfig, command: &'static str) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut out = Output {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            command,
            files: Vec::new(),
            reports: Vec::new(),
            checks: Vec::new(),
        };
        let body = format!("# config_sha256 = \"{}\"\n{}", out.hash, cfg.to_toml());
        out.write("config.toml", &body)?;
        Ok(out)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Metadata pairs for binary dumps.
    pub fn meta(&self) -> Vec<(&'static str, String)> {
        vec![("config_sha256", self.hash.clone()), ("command", self.command.to_string())]
    }

    fn write(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes a CSV preceded by two `#` metadata lines.
    pub fn csv(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        let text = format!("# config_sha256 = {}\n# command = {}\n{body}", self.hash, self.command);
        self.write(name, &text)
    }

    /// Records a file written elsewhere (binary dumps).
    pub fn register(&mut self, name: impl Into<String>) {
        self.files.push(name.into());
    }

    pub fn report(&mut self, name: impl Into<String>, value: f64) {
        self.reports.push((name.into(), value));
    }

    pub fn check_le(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        let passed = value <= bound;
        self.checks.push(Check { name: name.into(), value, relation: "<=", bound, passed });
    }

    pub fn check_ge(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        let passed = value >= bound;
        self.checks.push(Check { name: name.into(), value, relation: ">=", bound, passed });
    }

    /// Exact checks: `value == bound` required.
    pub fn check_eq(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        let passed = value == bound;
        self.checks.push(Check { name: name.into(), value, relation: "==", bound, passed });
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Prints the check table, writes `checks.csv` and `manifest.toml`.
    pub fn finish(mut self) -> std::io::Result<Vec<String>> {
        for (name, v) in &self.reports {
            println!("       {name} = {v:.6e}");
        }
        let mut csv = String::from("check,value,relation,bound,passed\n");
        for c in &self.checks {
            println!("{} {} = {:.3e} {} {:.3e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.relation, c.bound);
            let _ = writeln!(csv, "{},{},{},{},{}", quote(&c.name), num(c.value), c.relation, num(c.bound), c.passed);
        }
        let mut reports = String::from("quantity,value\n");
        for (name, v) in &self.reports {
            let _ = writeln!(reports, "{},{}", quote(name), num(*v));
        }
        self.csv("checks.csv", &csv)?;
        self.csv("reports.csv", &reports)?;

        let mut manifest = String::new();
        let _ = writeln!(manifest, "command = \"{}\"", self.command);
        let _ = writeln!(manifest, "config_sha256 = \"{}\"", self.hash);
        let _ = writeln!(manifest, "passed = {}", self.checks.iter().all(|c| c.passed));
        let files: Vec<String> = self.files.iter().map(|f| format!("\"{f}\"")).collect();
        let _ = writeln!(manifest, "files = [{}]", files.join(", "));
        std::fs::write(self.dir.join("manifest.toml"), manifest)?;
        Ok(self.failed().iter().map(|c| c.name.clone()).collect())
    }
}
