use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

/// Full-precision float cell (17 significant digits).
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Collects artifacts for one run and writes them with a shared manifest.
pub struct Run {
    out_dir: PathBuf,
    manifest: Value,
    files: Vec<(String, String)>,
}

impl Run {
    pub fn new(out_dir: &Path, command: &str, seed: u64, params: Value) -> Self {
        let manifest = json!({
            "tool": "genestim",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": seed,
            "params": params,
        });
        Self { out_dir: out_dir.to_path_buf(), manifest, files: Vec::new() }
    }

    /// Extra manifest fields (e.g. conventions used).
    pub fn note(&mut self, key: &str, value: Value) {
        self.manifest[key] = value;
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let mut body = String::new();
        writeln!(body, "{}", header.join(",")).unwrap();
        for r in rows {
            writeln!(body, "{}", r.join(",")).unwrap();
        }
        self.files.push((name.to_string(), body));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> serde_json::Result<()> {
        let body = serde_json::to_string_pretty(value)? + "\n";
        self.files.push((name.to_string(), body));
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out_dir)?;
        let names: Vec<&str> = self.files.iter().map(|(n, _)| n.as_str()).collect();
        self.manifest["files"] = json!(names);
        let header = format!("# {}\n", serde_json::to_string(&self.manifest).expect("manifest serializes"));
        let mut written = Vec::new();
        for (name, body) in &self.files {
            let path = self.out_dir.join(name);
            let text = if name.ends_with(".csv") { format!("{header}{body}") } else { body.clone() };
            fs::write(&path, text)?;
            written.push(path);
        }
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n")?;
        written.push(path);
        Ok(written)
    }
}
