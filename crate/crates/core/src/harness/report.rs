use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError, Method, Protocol};

/// Which test distribution a cell was evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    None,
    Texture,
    Distractor,
    /// Q3: a sub-utterance seen in training.
    Seen,
    /// Q3: the held-out superordinate utterance.
    Unseen,
}

impl fmt::Display for Shift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Shift::None => "none",
            Shift::Texture => "texture",
            Shift::Distractor => "distractor",
            Shift::Seen => "seen",
            Shift::Unseen => "unseen",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub scenario: String,
    pub demos: usize,
    pub seed: u64,
    pub shift: Shift,
    pub utterance: String,
    pub successes: usize,
    pub n: usize,
    pub success: f64,
    pub epochs: usize,
    pub losses: Vec<f64>,
    pub checkpoint_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub method: Method,
    pub scenario: String,
    pub demos: usize,
    pub seed: u64,
    pub message: String,
}

/// Wall-clock cost of one trained cell. Kept out of the report so reports
/// stay byte-identical across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub method: Method,
    pub scenario: String,
    pub demos: usize,
    pub seed: u64,
    pub train_secs: f64,
    pub eval_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: Protocol,
    pub config_hash: String,
    pub catalog_hash: String,
    pub cells: Vec<CellResult>,
    pub errors: Vec<CellError>,
    #[serde(skip)]
    pub timings: Vec<CellTiming>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    protocol: Protocol,
    variant: String,
    scenario: &'a str,
    demos: usize,
    seed: u64,
    shift: Shift,
    utterance: &'a str,
    success: f64,
}

impl Report {
    pub fn empty(protocol: Protocol, config_hash: &str, catalog_hash: &str) -> Self {
        Self {
            protocol,
            config_hash: config_hash.into(),
            catalog_hash: catalog_hash.into(),
            cells: Vec::new(),
            errors: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Mean success over the cells accepted by `filter`, or `None` if there are none.
    pub fn mean_success(&self, filter: impl Fn(&CellResult) -> bool) -> Option<f64> {
        let v: Vec<f64> = self.cells.iter().filter(|c| filter(c)).map(|c| c.success).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(CsvRow {
                protocol: self.protocol,
                variant: c.method.to_string(),
                scenario: &c.scenario,
                demos: c.demos,
                seed: c.seed,
                shift: c.shift,
                utterance: &c.utterance,
                success: c.success,
            })
            .map_err(|e| HarnessError::Format(e.to_string()))?;
        }
        if self.cells.is_empty() {
            w.write_record(["protocol", "variant", "scenario", "demos", "seed", "shift", "utterance", "success"])
                .map_err(|e| HarnessError::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Format(e.to_string()))
    }

    /// Writes `report.json`, `report.csv` and `timings.json` into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(io_err(&p))
        };
        write("report.json", self.to_json())?;
        write("report.csv", self.to_csv()?)?;
        write("timings.json", serde_json::to_string_pretty(&self.timings).expect("timings serialize") + "\n")
    }

    /// Reads back what [`Report::emit`] wrote.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let p = dir.join("report.json");
        let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
        let mut r: Report = serde_json::from_str(&text).map_err(|e| HarnessError::Format(e.to_string()))?;
        let t = dir.join("timings.json");
        if let Ok(text) = std::fs::read_to_string(&t) {
            r.timings = serde_json::from_str(&text).map_err(|e| HarnessError::Format(e.to_string()))?;
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Variant;

    fn cell(seed: u64, success: f64) -> CellResult {
        CellResult {
            method: Method::GCBC_DART,
            scenario: "heart".into(),
            demos: 10,
            seed,
            shift: Shift::Texture,
            utterance: "Bring me the heart.".into(),
            successes: (success * 20.0) as usize,
            n: 20,
            success,
            epochs: 3,
            losses: vec![0.1 + 1e-17, 0.05, 1.0 / 3.0],
            checkpoint_sha256: "ab".into(),
        }
    }

    #[test]
    fn empty_report_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report::empty(Protocol::Q1, "c", "k");
        r.emit(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(Report::load(dir.path()).unwrap(), r);
    }

    #[test]
    fn emit_load_roundtrip_and_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::empty(Protocol::Q2, "c", "k");
        r.cells = vec![cell(0, 0.35), cell(1, 0.9)];
        r.cells[1].method = Method::plain(Variant::LgaS);
        r.errors.push(CellError { method: Method::plain(Variant::Lga), scenario: "x".into(), demos: 1, seed: 0, message: "m".into() });
        r.timings.push(CellTiming { method: Method::GCBC_DART, scenario: "heart".into(), demos: 10, seed: 0, train_secs: 1.5, eval_secs: 0.25 });
        r.emit(dir.path()).unwrap();
        assert_eq!(Report::load(dir.path()).unwrap(), r);
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + r.cells.len());
        assert!(csv.contains("q2,LGA-S,heart,10,1,texture,Bring me the heart.,0.9"));
        assert_eq!(r.mean_success(|_| true), Some((0.35 + 0.9) / 2.0));
        assert_eq!(r.mean_success(|c| c.seed == 7), None);
    }
}
