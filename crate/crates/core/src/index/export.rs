//! `cells.csv` and `scores.csv`. Floats use the shortest round-trip form, so a
//! written table reads back bit-for-bit.

use std::io::{Read, Write};

use super::{CellExposure, CellTable, GaisiScore, IndexError};
use crate::corpus::ExposureDistribution;

const CELL_HEADER: [&str; 7] = ["occ_code", "task_id", "run_count", "p_e0", "p_e1", "p_e2", "p_e3"];
const SCORE_HEADER: [&str; 9] = ["worker_id", "e0", "e1", "e2", "e3", "e2e3", "task_load", "gaisi", "omega"];

fn bad(file: &str, line: u64, msg: impl std::fmt::Display) -> IndexError {
    IndexError::InvalidInput(format!("{file}:{line}: {msg}"))
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, file: &str, expected: &[&str]) -> Result<(), IndexError> {
    let h = rdr.headers().map_err(|e| bad(file, 1, e))?;
    let got: Vec<&str> = h.iter().map(str::trim).collect();
    if got != expected {
        return Err(bad(file, 1, format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, file: &str) -> Result<T, IndexError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse().map_err(|_| bad(file, line, format!("cannot parse {raw:?}")))
}

pub fn write_cells<W: Write>(w: W, cells: &CellTable) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CELL_HEADER).map_err(std::io::Error::other)?;
    for ((occ, task), c) in cells.iter() {
        let p = c.distribution.probs();
        wtr.write_record([
            occ.clone(),
            task.clone(),
            c.run_count.to_string(),
            p[0].to_string(),
            p[1].to_string(),
            p[2].to_string(),
            p[3].to_string(),
        ])
        .map_err(std::io::Error::other)?;
    }
    wtr.flush()
}

pub fn read_cells<R: Read>(r: R, file: &str) -> Result<CellTable, IndexError> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, file, &CELL_HEADER)?;
    let mut table = CellTable::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(file, e.position().map_or(0, |p| p.line()), e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let p = [field(&rec, 3, file)?, field(&rec, 4, file)?, field(&rec, 5, file)?, field(&rec, 6, file)?];
        let distribution = ExposureDistribution::new(p).map_err(|f| bad(file, line, f))?;
        let key = (rec[0].trim().to_string(), rec[1].trim().to_string());
        let cell = CellExposure { distribution, run_count: field(&rec, 2, file)? };
        if table.cells.insert(key.clone(), cell).is_some() {
            return Err(bad(file, line, format!("duplicate cell {}/{}", key.0, key.1)));
        }
    }
    Ok(table)
}

pub fn write_scores<W: Write>(w: W, scores: &[GaisiScore]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SCORE_HEADER).map_err(std::io::Error::other)?;
    for s in scores {
        let nums = [s.e0, s.e1, s.e2, s.e3, s.e2e3, s.task_load, s.gaisi, s.omega];
        let mut row = vec![s.worker_id.clone()];
        row.extend(nums.iter().map(f64::to_string));
        wtr.write_record(&row).map_err(std::io::Error::other)?;
    }
    wtr.flush()
}

pub fn read_scores<R: Read>(r: R, file: &str) -> Result<Vec<GaisiScore>, IndexError> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, file, &SCORE_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(file, e.position().map_or(0, |p| p.line()), e))?;
        out.push(GaisiScore {
            worker_id: rec[0].trim().to_string(),
            e0: field(&rec, 1, file)?,
            e1: field(&rec, 2, file)?,
            e2: field(&rec, 3, file)?,
            e3: field(&rec, 4, file)?,
            e2e3: field(&rec, 5, file)?,
            task_load: field(&rec, 6, file)?,
            gaisi: field(&rec, 7, file)?,
            omega: field(&rec, 8, file)?,
        });
    }
    Ok(out)
}
