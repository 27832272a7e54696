//! Artifact writers. Every file starts with a provenance header naming the
//! tool version, scenario, seed and configuration hash. Floats carry nine
//! significant digits so payloads are byte-stable across runs.

use std::path::{Path, PathBuf};

use serde_json::{Map, Number, Value};

use crate::config::Outputs;
use crate::error::{CliError, CliResult};
use crate::svg::Plot;

pub const TOOL: &str = concat!("cohrx ", env!("CARGO_PKG_VERSION"));
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "COHRX_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";

/// Output directory: the explicit flag, else the environment, else `out`.
pub fn out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    fn fields(&self) -> [(&'static str, String); 4] {
        [
            ("tool", TOOL.to_owned()),
            ("scenario", self.scenario.clone()),
            ("seed", self.seed.to_string()),
            ("config_sha256", self.config_hash.clone()),
        ]
    }

    pub fn line(&self) -> String {
        self.fields().iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }

    fn json(&self) -> Value {
        let mut m = Map::new();
        m.insert("tool".into(), TOOL.into());
        m.insert("scenario".into(), self.scenario.clone().into());
        m.insert("seed".into(), self.seed.into());
        m.insert("config_sha256".into(), self.config_hash.clone().into());
        Value::Object(m)
    }
}

/// Nine significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string().to_lowercase()
    }
}

/// Rounds every non-integer number in `v` to nine significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            fmt_f64(x).parse::<f64>().ok().and_then(Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// A CSV table with a fixed column list.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt_f64(x)).collect());
    }

    pub fn render(&self, prov: &Provenance) -> String {
        let mut s = String::with_capacity(32 * self.rows.len() * self.columns.len().max(1));
        for (k, v) in prov.fields() {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Writes the artifacts of one command into its output directory.
#[derive(Debug)]
pub struct Emitter {
    dir: PathBuf,
    outputs: Outputs,
    prov: Provenance,
    written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: &Path, outputs: Outputs, prov: Provenance) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), outputs, prov, written: Vec::new() })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.prov
    }

    fn write(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> CliResult<()> {
        if self.outputs.csv {
            let body = table.render(&self.prov);
            self.write(&format!("{name}.csv"), &body)?;
        }
        Ok(())
    }

    /// Writes `{"provenance": ..., <payload fields>}`.
    pub fn json(&mut self, name: &str, payload: Value) -> CliResult<()> {
        if self.outputs.json {
            let mut m = Map::new();
            m.insert("provenance".into(), self.prov.json());
            match round_json(payload) {
                Value::Object(o) => m.extend(o),
                other => {
                    m.insert("data".into(), other);
                }
            }
            let mut body = serde_json::to_string_pretty(&Value::Object(m)).expect("JSON values serialize");
            body.push('\n');
            self.write(&format!("{name}.json"), &body)?;
        }
        Ok(())
    }

    pub fn svg(&mut self, name: &str, plot: &Plot) -> CliResult<()> {
        if self.outputs.svg {
            let body = plot.render(&self.prov.line());
            self.write(&format!("{name}.svg"), &body)?;
        }
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn prov() -> Provenance {
        Provenance { scenario: "s".into(), seed: 3, config_hash: "ab".into() }
    }

    #[test]
    fn floats_keep_nine_digits() {
        assert_eq!(fmt_f64(0.1), "1.00000000e-1");
        assert_eq!(fmt_f64(-123456789.123), "-1.23456789e8");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(round_json(json!({"a": [1.0000000001, 7], "b": "x"})), json!({"a": [1.0, 7], "b": "x"}));
    }

    #[test]
    fn csv_starts_with_provenance() {
        let mut t = Table::new(&["x", "y"]);
        t.push_f64(&[1.0, 2.5]);
        let s = t.render(&prov());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], format!("# tool={TOOL}"));
        assert_eq!(lines[1..4], ["# scenario=s", "# seed=3", "# config_sha256=ab"]);
        assert_eq!(lines[4..], ["x,y", "1.00000000e0,2.50000000e0"]);
    }

    #[test]
    fn emitter_respects_output_selection() {
        let dir = tempfile::tempdir().unwrap();
        let outputs = Outputs { csv: false, json: true, svg: false };
        let mut e = Emitter::new(dir.path(), outputs, prov()).unwrap();
        e.csv("t", &Table::new(&["x"])).unwrap();
        e.json("m", json!({"v": 0.5})).unwrap();
        assert_eq!(e.written().len(), 1);
        let text = std::fs::read_to_string(dir.path().join("m.json")).unwrap();
        assert!(text.trim_start().starts_with("{\n  \"provenance\""), "{text}");
    }
}
