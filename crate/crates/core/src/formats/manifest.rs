//! Tab-separated corpus manifest: `id  split  audio  emg`, one row per
//! utterance, paths relative to the manifest's directory.

use std::path::{Path, PathBuf};

use crate::dataset::Split;
use crate::error::{Error, Result};

const HEADER: &str = "id\tsplit\taudio\temg";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub id: String,
    pub split: Split,
    pub audio: PathBuf,
    pub emg: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn audio_path(&self, row: &ManifestRow) -> PathBuf {
        self.root.join(&row.audio)
    }

    pub fn emg_path(&self, row: &ManifestRow) -> PathBuf {
        self.root.join(&row.emg)
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.id,
                r.split,
                r.audio.display(),
                r.emg.display()
            ));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root, path)
    }

    fn parse(text: &str, root: PathBuf, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(HEADER) {
            return Err(Error::format(path, format!("missing header {HEADER:?}")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::format(
                    path,
                    format!("line {}: expected 4 columns, found {}", i + 2, cols.len()),
                ));
            }
            rows.push(ManifestRow {
                id: cols[0].to_string(),
                split: cols[1].parse()?,
                audio: PathBuf::from(cols[2]),
                emg: PathBuf::from(cols[3]),
            });
        }
        let mut ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::format(path, format!("duplicate utterance id {}", w[0])));
        }
        Ok(Self { root, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_text() {
        let m = Manifest {
            root: PathBuf::from("/x"),
            rows: vec![
                ManifestRow {
                    id: "s01_u001".into(),
                    split: Split::Train,
                    audio: "audio/s01_u001.wav".into(),
                    emg: "emg/s01_u001.emgc".into(),
                },
                ManifestRow {
                    id: "s01_u002".into(),
                    split: Split::Test,
                    audio: "audio/s01_u002.wav".into(),
                    emg: "emg/s01_u002.emgc".into(),
                },
            ],
        };
        let parsed = Manifest::parse(&m.to_tsv(), PathBuf::from("/x"), Path::new("m")).unwrap();
        assert_eq!(parsed, m);
        assert_eq!(
            parsed.audio_path(&parsed.rows[0]),
            PathBuf::from("/x/audio/s01_u001.wav")
        );
    }

    #[test]
    fn rejects_bad_rows() {
        let p = Path::new("m");
        assert!(Manifest::parse("nope\n", PathBuf::new(), p).is_err());
        let dup = format!("{HEADER}\na\ttrain\tx\ty\na\ttest\tx\ty\n");
        assert!(Manifest::parse(&dup, PathBuf::new(), p).is_err());
        let short = format!("{HEADER}\na\ttrain\tx\n");
        assert!(Manifest::parse(&short, PathBuf::new(), p).is_err());
        let split = format!("{HEADER}\na\tdev\tx\ty\n");
        assert!(Manifest::parse(&split, PathBuf::new(), p).is_err());
    }
}
