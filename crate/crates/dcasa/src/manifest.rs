//! Line-delimited dataset manifest with a fixed, documented field order:
//!
//! `id <TAB> split <TAB> mixture <TAB> source1 <TAB> source2 <TAB> spk1 <TAB> spk2 <TAB> snr_db`
//!
//! Paths are relative to the manifest's directory; snr_db is printed with
//! four decimals so regenerated manifests are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRecord {
    pub id: u32,
    pub split: Split,
    pub mixture: String,
    pub source1: String,
    pub source2: String,
    pub spk1: u32,
    pub spk2: u32,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

pub fn render(records: &[MixtureRecord]) -> String {
    let mut out = String::from("# id\tsplit\tmixture\tsource1\tsource2\tspk1\tspk2\tsnr_db\n");
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}",
            r.id,
            r.split.as_str(),
            r.mixture,
            r.source1,
            r.source2,
            r.spk1,
            r.spk2,
            r.snr_db
        );
    }
    out
}

pub fn write(path: &Path, records: &[MixtureRecord]) -> Result<()> {
    fs::write(path, render(records)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<MixtureRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(Error::format(
                path,
                format!("line {}: expected 8 fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let bad = |what: &str| {
            Error::format(path, format!("line {}: bad {what}", lineno + 1))
        };
        out.push(MixtureRecord {
            id: fields[0].parse().map_err(|_| bad("id"))?,
            split: Split::parse(fields[1]).ok_or_else(|| bad("split"))?,
            mixture: fields[2].to_string(),
            source1: fields[3].to_string(),
            source2: fields[4].to_string(),
            spk1: fields[5].parse().map_err(|_| bad("spk1"))?,
            spk2: fields[6].parse().map_err(|_| bad("spk2"))?,
            snr_db: fields[7].parse().map_err(|_| bad("snr_db"))?,
        });
    }
    Ok(out)
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest_path: &Path, relative: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(relative)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_reject_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        let records = vec![MixtureRecord {
            id: 3,
            split: Split::Test,
            mixture: "wav/test_0003_mix.wav".into(),
            source1: "wav/test_0003_s1.wav".into(),
            source2: "wav/test_0003_s2.wav".into(),
            spk1: 21,
            spk2: 24,
            snr_db: 3.25,
        }];
        write(&path, &records).unwrap();
        assert_eq!(read(&path).unwrap(), records);

        std::fs::write(&path, "1\ttrain\tonly_three_fields\n").unwrap();
        assert!(read(&path).is_err());
    }
}
