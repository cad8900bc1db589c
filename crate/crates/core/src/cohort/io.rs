use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::{Cohort, CohortError, CohortSource, Diagnosis, PatientRecord, RegionName, Sex};

const FIXED_COLUMNS: [&str; 9] = [
    "id",
    "age",
    "sex",
    "education_years",
    "marital_status",
    "mmse",
    "apoe4_copies",
    "diagnosis",
    "mri_ref",
];

/// On-disk cohort layouts. Both share the same field names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohortFormat {
    /// Comma-separated table with a header row.
    DelimitedTable,
    /// One flat JSON object per line.
    RecordLines,
}

impl CohortFormat {
    /// `.csv`/`.tsv` map to a table, everything else to record-lines.
    pub fn from_path(path: &Path) -> CohortFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("tsv") => CohortFormat::DelimitedTable,
            _ => CohortFormat::RecordLines,
        }
    }
}

type RawRow = BTreeMap<String, Option<String>>;

pub fn load_cohort(path: &Path, format: CohortFormat) -> Result<Cohort, CohortError> {
    let rows = match format {
        CohortFormat::DelimitedTable => read_table(path)?,
        CohortFormat::RecordLines => read_lines(path)?,
    };
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, row)| parse_row(i + 1, row))
        .collect::<Result<Vec<_>, _>>()?;
    Cohort::new(records, CohortSource::Ingested)
}

pub fn save_cohort(cohort: &Cohort, path: &Path, format: CohortFormat) -> Result<(), CohortError> {
    let io_err = |source| CohortError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    match format {
        CohortFormat::DelimitedTable => {
            let mut w = csv::Writer::from_path(path)?;
            let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
            header.extend(RegionName::ALL.iter().map(|r| r.as_str()));
            w.write_record(&header)?;
            for rec in &cohort.records {
                let row = to_raw(rec);
                w.write_record(header.iter().map(|h| row[*h].clone().unwrap_or_default()))?;
            }
            w.flush().map_err(io_err)?;
        }
        CohortFormat::RecordLines => {
            let file = File::create(path).map_err(io_err)?;
            let mut w = BufWriter::new(file);
            for rec in &cohort.records {
                serde_json::to_writer(&mut w, &to_json(rec))?;
                w.write_all(b"\n").map_err(io_err)?;
            }
            w.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<Vec<RawRow>, CohortError> {
    let delimiter = if path.extension().and_then(|e| e.to_str()) == Some("tsv") { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).from_path(path).map_err(|e| {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CohortError::Io { path: path.display().to_string(), source },
            other => CohortError::Row { row: 0, reason: format!("{other:?}") },
        }
    })?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let missing: Vec<String> = RegionName::ALL
        .iter()
        .filter(|r| !headers.iter().any(|h| h == r.as_str()))
        .map(|r| r.as_str().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CohortError::MissingRegions(missing));
    }
    for required in ["id", "age", "sex", "education_years", "mmse", "apoe4_copies", "diagnosis"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CohortError::MissingColumn(required.to_string()));
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CohortError::Row { row: i + 1, reason: e.to_string() })?;
        let row: RawRow = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| {
                let v = v.trim();
                (h.clone(), if v.is_empty() { None } else { Some(v.to_string()) })
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

fn read_lines(path: &Path) -> Result<Vec<RawRow>, CohortError> {
    let io_err = |source| CohortError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io_err)?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let row_no = rows.len() + 1;
        let obj: serde_json::Map<String, Value> = serde_json::from_str(&line)
            .map_err(|e| CohortError::Row { row: row_no, reason: format!("not a JSON object: {e}") })?;
        let row: RawRow = obj
            .into_iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::Null => None,
                    Value::String(s) if s.trim().is_empty() => None,
                    Value::String(s) => Some(s),
                    other => Some(other.to_string()),
                };
                (k, s)
            })
            .collect();
        let missing: Vec<&str> = RegionName::ALL
            .iter()
            .filter(|r| !row.contains_key(r.as_str()))
            .map(|r| r.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(CohortError::Row {
                row: row_no,
                reason: format!("missing region fields: {}", missing.join(", ")),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn required<'a>(row_no: usize, row: &'a RawRow, field: &str) -> Result<&'a str, CohortError> {
    row.get(field).and_then(|v| v.as_deref()).ok_or_else(|| CohortError::Field {
        row: row_no,
        field: field.to_string(),
        reason: "missing".to_string(),
    })
}

fn parse_field<T: FromStr>(row_no: usize, row: &RawRow, field: &str) -> Result<T, CohortError> {
    let raw = required(row_no, row, field)?;
    raw.parse::<T>().map_err(|_| CohortError::Field {
        row: row_no,
        field: field.to_string(),
        reason: format!("malformed value {raw:?}"),
    })
}

fn parse_row(row_no: usize, row: &RawRow) -> Result<PatientRecord, CohortError> {
    let field_err = |field: &str, reason: String| CohortError::Field {
        row: row_no,
        field: field.to_string(),
        reason,
    };
    let mmse: i64 = parse_field(row_no, row, "mmse")?;
    if !(0..=i64::from(super::MMSE_MAX)).contains(&mmse) {
        return Err(field_err("mmse", "out of range".into()));
    }
    let apoe4: i64 = parse_field(row_no, row, "apoe4_copies")?;
    if !(0..=2).contains(&apoe4) {
        return Err(field_err("apoe4_copies", "out of range".into()));
    }
    let sex = Sex::from_str(required(row_no, row, "sex")?).map_err(|e| field_err("sex", e))?;
    let gold = Diagnosis::from_str(required(row_no, row, "diagnosis")?).map_err(|e| field_err("diagnosis", e))?;
    let mut region_volumes = BTreeMap::new();
    for region in RegionName::ALL {
        let v: f64 = parse_field(row_no, row, region.as_str())?;
        region_volumes.insert(region, v);
    }
    let rec = PatientRecord {
        id: required(row_no, row, "id")?.to_string(),
        age: parse_field(row_no, row, "age")?,
        sex,
        education_years: parse_field(row_no, row, "education_years")?,
        marital_status: row.get("marital_status").cloned().flatten(),
        mmse: mmse as u8,
        apoe4_copies: apoe4 as u8,
        region_volumes,
        gold,
        mri_ref: row.get("mri_ref").cloned().flatten(),
    };
    rec.validate().map_err(|(field, reason)| CohortError::Field { row: row_no, field, reason })?;
    Ok(rec)
}

fn to_raw(rec: &PatientRecord) -> BTreeMap<&'static str, Option<String>> {
    let mut m = BTreeMap::new();
    m.insert("id", Some(rec.id.clone()));
    m.insert("age", Some(rec.age.to_string()));
    m.insert("sex", Some(format!("{:?}", rec.sex)));
    m.insert("education_years", Some(rec.education_years.to_string()));
    m.insert("marital_status", rec.marital_status.clone());
    m.insert("mmse", Some(rec.mmse.to_string()));
    m.insert("apoe4_copies", Some(rec.apoe4_copies.to_string()));
    m.insert("diagnosis", Some(rec.gold.code().to_string()));
    m.insert("mri_ref", rec.mri_ref.clone());
    for (region, v) in &rec.region_volumes {
        m.insert(region.as_str(), Some(v.to_string()));
    }
    m
}

fn to_json(rec: &PatientRecord) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("id".into(), Value::from(rec.id.clone()));
    m.insert("age".into(), Value::from(rec.age));
    m.insert("sex".into(), Value::from(format!("{:?}", rec.sex)));
    m.insert("education_years".into(), Value::from(rec.education_years));
    m.insert("marital_status".into(), rec.marital_status.clone().map_or(Value::Null, Value::from));
    m.insert("mmse".into(), Value::from(rec.mmse));
    m.insert("apoe4_copies".into(), Value::from(rec.apoe4_copies));
    m.insert("diagnosis".into(), Value::from(rec.gold.code()));
    m.insert("mri_ref".into(), rec.mri_ref.clone().map_or(Value::Null, Value::from));
    for (region, v) in &rec.region_volumes {
        m.insert(region.as_str().into(), Value::from(*v));
    }
    m
}
