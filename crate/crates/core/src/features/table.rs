use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::FeatureError;

/// Utterance-keyed feature matrix, the on-disk feature dump.
///
/// CSV layout: a `# schema_id=<id>` comment line, a header row
/// `utterance_id,<col>,...`, then one row per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema_id: String,
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, id: &str) -> Option<&[f64]> {
        self.ids.iter().position(|i| i == id).map(|k| self.rows[k].as_slice())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), FeatureError> {
        writeln!(out, "# schema_id={}", self.schema_id)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["utterance_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, FeatureError> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let schema_id = first
            .trim_end()
            .strip_prefix("# schema_id=")
            .ok_or_else(|| FeatureError::Table("missing '# schema_id=' line".into()))?
            .to_string();
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("utterance_id") {
            return Err(FeatureError::Table("first column must be utterance_id".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| FeatureError::Table(format!("bad number '{v}' in row {}", rec[0].to_string())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != columns.len() {
                return Err(FeatureError::Table(format!(
                    "row '{}' has {} values, header has {}",
                    &rec[0],
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self {
            schema_id,
            columns,
            ids,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::config::write_atomic(path.as_ref(), &buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_lossless() {
        let t = FeatureTable {
            schema_id: "CPS-115".into(),
            columns: vec!["a.mean".into(), "a.std".into()],
            ids: vec!["u1".into(), "u2".into()],
            rows: vec![vec![0.1 + 0.2, -1e-300], vec![f64::MAX, 3.0]],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema_id=CPS-115\nutterance_id,a.mean,a.std\n"));
        assert_eq!(FeatureTable::read_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_missing_schema_line() {
        assert!(FeatureTable::read_csv(&b"utterance_id,a\nx,1\n"[..]).is_err());
    }
}
