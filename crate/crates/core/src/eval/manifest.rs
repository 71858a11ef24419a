use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::EvalError;

/// Binary task-load label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NoLoad,
    Load,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NoLoad => "no_load",
            Label::Load => "load",
        }
    }

    /// Class index: `no_load` = 0, `load` = 1.
    pub fn index(self) -> usize {
        self as usize
    }

    /// SVM target: `no_load` = -1, `load` = +1.
    pub fn sign(self) -> f64 {
        match self {
            Label::NoLoad => -1.0,
            Label::Load => 1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "load" => Ok(Label::Load),
            "no_load" => Ok(Label::NoLoad),
            other => Err(EvalError::Manifest(format!(
                "label '{other}' is not one of load / no_load"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub utterance_id: String,
    pub path: PathBuf,
    pub speaker: String,
    pub gender: String,
    pub label: Label,
    pub duration: Option<f64>,
}

/// Dataset description, one record per utterance.
///
/// CSV header: `utterance_id,path,speaker,gender,label` (an optional
/// `duration` column is accepted). Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

const HEADER: [&str; 5] = ["utterance_id", "path", "speaker", "gender", "label"];

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn read_csv<R: std::io::Read>(input: R, base: Option<&Path>) -> Result<Self, EvalError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let idx: Vec<usize> = HEADER
            .iter()
            .map(|h| col(h).ok_or_else(|| EvalError::Manifest(format!("missing column '{h}'"))))
            .collect::<Result<_, _>>()?;
        let dur = col("duration");
        let mut records = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let get = |i: usize| rec.get(idx[i]).unwrap_or("").trim().to_string();
            let mut path = PathBuf::from(get(1));
            if let Some(b) = base {
                if path.is_relative() {
                    path = b.join(path);
                }
            }
            let duration = match dur.and_then(|d| rec.get(d)).map(str::trim) {
                None | Some("") => None,
                Some(v) => Some(v.parse().map_err(|_| {
                    EvalError::Manifest(format!("row {}: bad duration '{v}'", line + 2))
                })?),
            };
            records.push(ManifestRecord {
                utterance_id: get(0),
                path,
                speaker: get(2),
                gender: get(3),
                label: get(4).parse()?,
                duration,
            });
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| {
            EvalError::Manifest(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::read_csv(file, path.parent())
    }

    /// Paths are written relative to `base` when possible.
    pub fn write_csv<W: std::io::Write>(&self, out: W, base: Option<&Path>) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.records {
            let path = base
                .and_then(|b| r.path.strip_prefix(b).ok())
                .unwrap_or(&r.path);
            w.write_record([
                r.utterance_id.as_str(),
                &path.to_string_lossy(),
                &r.speaker,
                &r.gender,
                r.label.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Structural checks: unique ids, at least two speakers, both classes,
    /// and (optionally) every file present.
    pub fn validate(&self, check_files: bool) -> Result<(), EvalError> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.utterance_id.is_empty() || r.speaker.is_empty() {
                return Err(EvalError::Manifest("empty utterance_id or speaker".into()));
            }
            if !seen.insert(r.utterance_id.as_str()) {
                return Err(EvalError::Manifest(format!(
                    "duplicate utterance_id '{}'",
                    r.utterance_id
                )));
            }
            if check_files && !r.path.is_file() {
                return Err(EvalError::Manifest(format!(
                    "file for '{}' not found: {}",
                    r.utterance_id,
                    r.path.display()
                )));
            }
        }
        if self.speakers().len() < 2 {
            return Err(EvalError::TooFewSpeakers {
                need: 2,
                got: self.speakers().len(),
            });
        }
        for l in [Label::NoLoad, Label::Load] {
            if !self.records.iter().any(|r| r.label == l) {
                return Err(EvalError::Manifest(format!("no '{l}' utterances")));
            }
        }
        Ok(())
    }
}
