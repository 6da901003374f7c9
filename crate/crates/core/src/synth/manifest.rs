//! Line-delimited JSON manifests: one [`ManifestEntry`] per line.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(SynthError::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Degradation {
    Reverb { rir_id: String, scale_factor: f64 },
    Noise { source_id: String, snr_db: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Speaker or source group; splits never share a group.
    pub group: String,
    /// Relative paths resolve against the manifest's directory.
    pub input_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_path: Option<PathBuf>,
    pub degradation: Degradation,
    pub split: Split,
}

impl ManifestEntry {
    pub fn resolved_input(&self, base: &Path) -> PathBuf {
        base.join(&self.input_path)
    }

    pub fn resolved_clean(&self, base: &Path) -> Option<PathBuf> {
        self.clean_path.as_ref().map(|p| base.join(p))
    }
}

pub fn to_jsonl(entries: &[ManifestEntry]) -> Result<String, SynthError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

/// Blank lines are skipped; errors name the offending line.
pub fn from_jsonl(text: &str) -> Result<Vec<ManifestEntry>, SynthError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| SynthError::Invalid(format!("manifest line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), SynthError> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(entries)?.as_bytes())?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, SynthError> {
    let mut text = String::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    from_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: &str, deg: Degradation, split: Split) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            group: "spk01".into(),
            input_path: PathBuf::from(format!("{split}/{id}.wav")),
            clean_path: Some(PathBuf::from(format!("clean/{id}.wav"))),
            degradation: deg,
            split,
        }
    }

    #[test]
    fn line_format() {
        let e = entry(
            "utt0001",
            Degradation::Reverb { rir_id: "rir03".into(), scale_factor: 0.9 },
            Split::Train,
        );
        let line = to_jsonl(&[e]).unwrap();
        assert_eq!(
            line,
            "{\"id\":\"utt0001\",\"group\":\"spk01\",\"input_path\":\"train/utt0001.wav\",\
             \"clean_path\":\"clean/utt0001.wav\",\"degradation\":{\"reverb\":{\"rir_id\":\"rir03\",\
             \"scale_factor\":0.9}},\"split\":\"train\"}\n"
        );
    }

    #[test]
    fn rejects_unknown_fields_and_reports_line() {
        let bad = "\n{\"id\":\"a\",\"group\":\"g\",\"input_path\":\"x\",\"degradation\":{\"noise\":{\"source_id\":\"n\",\"snr_db\":5.0}},\"split\":\"valid\",\"extra\":1}\n";
        let err = from_jsonl(bad).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn file_round_trip_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            entry("a", Degradation::Noise { source_id: "n0".into(), snr_db: 0.0 }, Split::Valid),
            ManifestEntry { clean_path: None, ..entry("b", Degradation::Noise { source_id: "n1".into(), snr_db: 15.0 }, Split::Test) },
        ];
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &entries).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), entries);
        assert_eq!(entries[0].resolved_input(dir.path()), dir.path().join("valid/a.wav"));
        assert_eq!(entries[1].resolved_clean(dir.path()), None);
    }

    proptest! {
        #[test]
        fn serialization_round_trips(
            id in "[a-z0-9_]{1,12}",
            group in "[a-z0-9]{1,6}",
            reverb in any::<bool>(),
            value in -50.0f64..50.0,
            split_ix in 0usize..3,
            with_clean in any::<bool>(),
        ) {
            let deg = if reverb {
                Degradation::Reverb { rir_id: format!("r{group}"), scale_factor: value }
            } else {
                Degradation::Noise { source_id: format!("n{group}"), snr_db: value }
            };
            let e = ManifestEntry {
                id: id.clone(),
                group,
                input_path: PathBuf::from(format!("in/{id}.wav")),
                clean_path: with_clean.then(|| PathBuf::from(format!("clean/{id}.wav"))),
                degradation: deg,
                split: Split::ALL[split_ix],
            };
            let back = from_jsonl(&to_jsonl(std::slice::from_ref(&e)).unwrap()).unwrap();
            prop_assert_eq!(back, vec![e]);
        }
    }
}
