//! File exchange with external neural scorers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// One exported segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringRow {
    pub id: String,
    pub src: String,
    pub mt: String,
    #[serde(rename = "ref")]
    pub reference: String,
}

/// One imported segment score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub score: f64,
}

pub fn export_for_scoring(rows: &[ScoringRow], path: &Path) -> Result<(), MetricsError> {
    let mut seen = BTreeSet::new();
    for r in rows {
        if !seen.insert(r.id.as_str()) {
            return Err(MetricsError::IdMismatch(format!("duplicate id {}", r.id)));
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads scores and checks they cover exactly `expected_ids`, each once.
pub fn import_scores(
    path: &Path,
    expected_ids: &[String],
) -> Result<BTreeMap<String, f64>, MetricsError> {
    let text = fs::read_to_string(path)?;
    let mut scores = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ScoreRow = serde_json::from_str(line).map_err(|e| MetricsError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        if scores.insert(row.id.clone(), row.score).is_some() {
            return Err(MetricsError::IdMismatch(format!("duplicate id {}", row.id)));
        }
    }
    let expected: BTreeSet<&str> = expected_ids.iter().map(String::as_str).collect();
    if let Some(extra) = scores.keys().find(|k| !expected.contains(k.as_str())) {
        return Err(MetricsError::IdMismatch(format!("unexpected id {extra}")));
    }
    if let Some(missing) = expected.iter().find(|k| !scores.contains_key(**k)) {
        return Err(MetricsError::IdMismatch(format!("missing id {missing}")));
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ScoringRow> {
        (0..3)
            .map(|i| ScoringRow {
                id: format!("law:{i}"),
                src: format!("Satz {i}"),
                mt: format!("sentence {i}"),
                reference: format!("the sentence {i}"),
            })
            .collect()
    }

    fn ids() -> Vec<String> {
        rows().into_iter().map(|r| r.id).collect()
    }

    #[test]
    fn export_writes_expected_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.jsonl");
        export_for_scoring(&rows(), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"id":"law:0","src":"Satz 0","mt":"sentence 0","ref":"the sentence 0"}"#
        );
        let mut dup = rows();
        dup[1].id = "law:0".into();
        assert!(matches!(
            export_for_scoring(&dup, &p),
            Err(MetricsError::IdMismatch(_))
        ));
    }

    #[test]
    fn import_requires_bijection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.jsonl");
        fs::write(&p, "{\"id\":\"law:2\",\"score\":0.5}\n{\"id\":\"law:0\",\"score\":0.9}\n{\"id\":\"law:1\",\"score\":0.1}\n").unwrap();
        let s = import_scores(&p, &ids()).unwrap();
        assert_eq!(s["law:0"], 0.9);

        fs::write(&p, "{\"id\":\"law:0\",\"score\":0.9}\n").unwrap();
        assert!(matches!(
            import_scores(&p, &ids()),
            Err(MetricsError::IdMismatch(_))
        ));

        fs::write(&p, "{\"id\":\"law:0\",\"score\":0.9}\n{\"id\":\"law:1\",\"score\":0.1}\n{\"id\":\"law:2\",\"score\":0.1}\n{\"id\":\"x\",\"score\":0.1}\n").unwrap();
        assert!(matches!(
            import_scores(&p, &ids()),
            Err(MetricsError::IdMismatch(_))
        ));

        fs::write(
            &p,
            "{\"id\":\"law:0\",\"score\":0.9}\n{\"id\":\"law:0\",\"score\":0.1}\n",
        )
        .unwrap();
        assert!(matches!(
            import_scores(&p, &ids()),
            Err(MetricsError::IdMismatch(_))
        ));

        fs::write(&p, "not json\n").unwrap();
        assert!(matches!(
            import_scores(&p, &ids()),
            Err(MetricsError::Format { line: 1, .. })
        ));
    }
}
