//! Study outputs on disk: `study_result.json` plus one CSV per table and figure.

use std::path::Path;

use serde_json::Value;

use super::{StudyError, StudyResult, Table};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io { path: path.to_path_buf(), source }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "NA".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_table(dir: &Path, t: &Table) -> Result<(), StudyError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(format!("{}.csv", t.name));
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let ioe = |e: csv::Error| std::io::Error::other(e);
    wtr.write_record(&t.columns).map_err(ioe).map_err(io(&path))?;
    for row in &t.rows {
        wtr.write_record(row.iter().map(cell)).map_err(ioe).map_err(io(&path))?;
    }
    let bytes = wtr.into_inner().map_err(|e| std::io::Error::other(e.to_string())).map_err(io(&path))?;
    std::fs::write(&path, bytes).map_err(io(&path))
}

/// Writes a study into `dir`, returning the files written relative to it.
pub fn write_study(dir: &Path, result: &StudyResult) -> Result<Vec<String>, StudyError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = Vec::new();
    let json = dir.join("study_result.json");
    let mut text = serde_json::to_string_pretty(result).expect("serialisable");
    text.push('\n');
    std::fs::write(&json, text).map_err(io(&json))?;
    files.push("study_result.json".to_string());
    for (sub, tables) in [("tables", &result.tables), ("figures", &result.figures)] {
        for t in tables {
            write_table(&dir.join(sub), t)?;
            files.push(format!("{sub}/{}.csv", t.name));
        }
    }
    Ok(files)
}
