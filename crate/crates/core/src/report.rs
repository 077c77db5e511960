//! Evaluation records and their aggregation into per-SNR and per-noise
//! tables, written as JSON lines and as an aligned text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const NOISY_SYSTEM: &str = "Noisy";

/// Scores for one system on one test mixture. A failed enhancement keeps
/// its row with `error` set and no enhanced scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub system: String,
    pub mixture_id: String,
    pub utterance_id: String,
    pub noise_type: String,
    pub snr_db: f64,
    pub stoi_noisy: f64,
    pub si_sdr_noisy: f64,
    pub stoi_enhanced: Option<f64>,
    pub si_sdr_enhanced: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Snr,
    NoiseType,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: Grouping,
    pub key: String,
    pub system: String,
    pub stoi: f64,
    pub si_sdr: f64,
    pub count: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum ReportLine {
    Eval(EvalRecord),
    Summary(SummaryRow),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub records: Vec<EvalRecord>,
    pub summary: Vec<SummaryRow>,
    /// Column order: Noisy first, then systems in first-seen order.
    pub systems: Vec<String>,
}

/// Sort key that orders SNRs numerically and prints them compactly.
fn snr_key(snr: f64) -> (i64, String) {
    let milli = (snr * 1000.0).round() as i64;
    let label = if milli % 1000 == 0 {
        format!("{}", milli / 1000)
    } else {
        format!("{snr}")
    };
    (milli, label)
}

#[derive(Default)]
struct Acc {
    stoi: f64,
    si_sdr: f64,
    count: usize,
    failures: usize,
}

impl Acc {
    fn add(&mut self, stoi: Option<f64>, si_sdr: Option<f64>) {
        match (stoi, si_sdr) {
            (Some(a), Some(b)) => {
                self.stoi += a;
                self.si_sdr += b;
                self.count += 1;
            }
            _ => self.failures += 1,
        }
    }
}

impl Report {
    pub fn new(mut records: Vec<EvalRecord>) -> Self {
        let mut systems = vec![NOISY_SYSTEM.to_string()];
        for r in &records {
            if !systems.contains(&r.system) {
                systems.push(r.system.clone());
            }
        }
        records.sort_by(|a, b| (&a.system, &a.mixture_id).cmp(&(&b.system, &b.mixture_id)));

        type Key = (Grouping, (i64, String), String);
        let mut acc: BTreeMap<Key, Acc> = BTreeMap::new();
        let mut seen_noisy = std::collections::BTreeSet::new();
        for r in &records {
            let keys = [
                (Grouping::Snr, snr_key(r.snr_db)),
                (Grouping::NoiseType, (0, r.noise_type.clone())),
                (Grouping::Overall, (0, "all".to_string())),
            ];
            let fresh = seen_noisy.insert(r.mixture_id.clone());
            for (g, k) in keys {
                if fresh {
                    acc.entry((g, k.clone(), NOISY_SYSTEM.to_string()))
                        .or_default()
                        .add(Some(r.stoi_noisy), Some(r.si_sdr_noisy));
                }
                acc.entry((g, k, r.system.clone()))
                    .or_default()
                    .add(r.stoi_enhanced, r.si_sdr_enhanced);
            }
        }
        let order = |s: &str| systems.iter().position(|x| x == s).unwrap_or(usize::MAX);
        let mut summary: Vec<(usize, SummaryRow, (i64, String))> = acc
            .into_iter()
            .map(|((group, key, system), a)| {
                let n = a.count.max(1) as f64;
                let row = SummaryRow {
                    group,
                    key: key.1.clone(),
                    stoi: if a.count > 0 { a.stoi / n } else { f64::NAN },
                    si_sdr: if a.count > 0 { a.si_sdr / n } else { f64::NAN },
                    count: a.count,
                    failures: a.failures,
                    system,
                };
                (order(&row.system), row, key)
            })
            .collect();
        summary.sort_by(|a, b| (a.1.group, &a.2, a.0).cmp(&(b.1.group, &b.2, b.0)));
        Self {
            records,
            summary: summary.into_iter().map(|(_, r, _)| r).collect(),
            systems,
        }
    }

    pub fn mean(&self, group: Grouping, key: &str, system: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.group == group && r.key == key && r.system == system)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(&ReportLine::Eval(r.clone()))?);
            out.push('\n');
        }
        for s in &self.summary {
            out.push_str(&serde_json::to_string(&ReportLine::Summary(s.clone()))?);
            out.push('\n');
        }
        Ok(out)
    }

    /// One block per grouping and metric; rows are keys, columns systems.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (group, title) in [
            (Grouping::Snr, "SNR (dB)"),
            (Grouping::NoiseType, "Noise"),
            (Grouping::Overall, "Overall"),
        ] {
            let mut keys: Vec<&str> = Vec::new();
            for r in self.summary.iter().filter(|r| r.group == group) {
                if !keys.contains(&r.key.as_str()) {
                    keys.push(&r.key);
                }
            }
            for (metric, fmt) in [("STOI", 0usize), ("SI-SDR (dB)", 1)] {
                let _ = writeln!(out, "{metric} by {title}");
                let _ = write!(out, "{:<12}", title);
                for s in &self.systems {
                    let _ = write!(out, "{s:>14}");
                }
                out.push('\n');
                for k in &keys {
                    let _ = write!(out, "{k:<12}");
                    for s in &self.systems {
                        match self.mean(group, k, s) {
                            Some(r) if r.count > 0 => {
                                let v = if fmt == 0 { r.stoi } else { r.si_sdr };
                                let cell = if r.failures > 0 {
                                    format!("{v:.4}*")
                                } else {
                                    format!("{v:.4}")
                                };
                                let _ = write!(out, "{cell:>14}");
                            }
                            Some(_) => {
                                let _ = write!(out, "{:>14}", "failed");
                            }
                            None => {
                                let _ = write!(out, "{:>14}", "-");
                            }
                        }
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
        if self.summary.iter().any(|r| r.failures > 0) {
            out.push_str("* some enhancements failed; mean over successful rows\n");
        }
        out
    }

    pub fn write(&self, jsonl: &Path, table: &Path) -> Result<()> {
        std::fs::write(jsonl, self.to_jsonl()?)?;
        std::fs::write(table, self.to_table())?;
        Ok(())
    }
}
