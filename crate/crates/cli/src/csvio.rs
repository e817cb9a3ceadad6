//! CSV schemas for the routine, CRF and ward inputs, the value set, the
//! merged dataset and the imputed datasets.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};
use serde::Serialize;

use crt_cea_core::missing::{AnalysisTable, CellStatus, Column, ColumnRole, RowMeta};
use crt_cea_core::outcomes::ValueSet;
use crt_cea_core::trial::{
    Arm, CrfRecord, Eq5dObservation, Eq5dProfile, MergedDataset, Readmission, RoutineRecord, WardInfo, CRF_RESOURCES,
    EQ5D_DIMENSIONS, TIMEPOINT_LABELS,
};

use crate::error::{CliError, CliResult};

/// Lenient parsing skips malformed rows and reports them; strict parsing
/// stops at the first one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRow {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub skipped: Vec<SkippedRow>,
    pub warnings: Vec<String>,
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).flexible(false).from_reader(source)
}

fn open(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => CliError::Row { path: path.to_path_buf(), line, message: format!("{kind:?}") },
    }
}

struct Header {
    index: BTreeMap<String, usize>,
}

impl Header {
    fn read<R: Read>(path: &Path, reader: &mut csv::Reader<R>) -> CliResult<Self> {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        let mut index = BTreeMap::new();
        for (k, name) in h.iter().enumerate() {
            if index.insert(name.to_string(), k).is_some() {
                return Err(CliError::format(path, format!("duplicate column {name}")));
            }
        }
        Ok(Header { index })
    }

    fn require(&self, path: &Path, names: &[&str]) -> CliResult<()> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| !self.index.contains_key(*n)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::format(path, format!("schema error: missing required column(s) {}", missing.join(", "))))
        }
    }

    fn get<'r>(&self, row: &'r StringRecord, name: &str) -> Option<&'r str> {
        self.index.get(name).and_then(|&k| row.get(k)).filter(|s| !s.is_empty())
    }
}

type RowResult<T> = Result<T, String>;

fn number(v: Option<&str>, name: &str) -> RowResult<Option<f64>> {
    match v {
        None => Ok(None),
        Some(s) => s
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| format!("{name}: '{s}' is not a number")),
    }
}

fn required<T>(v: RowResult<Option<T>>, name: &str) -> RowResult<T> {
    v?.ok_or_else(|| format!("{name} is blank"))
}

fn flag(v: Option<&str>, name: &str) -> RowResult<Option<bool>> {
    match v {
        None => Ok(None),
        Some("0") => Ok(Some(false)),
        Some("1") => Ok(Some(true)),
        Some(s) => Err(format!("{name}: '{s}' must be 0 or 1")),
    }
}

fn day(v: Option<&str>, name: &str) -> RowResult<Option<u32>> {
    match v {
        None => Ok(None),
        Some(s) => s.parse::<u32>().map(Some).map_err(|_| format!("{name}: '{s}' is not a whole day")),
    }
}

/// Reads every data row, applying `parse`. Row errors abort in strict mode
/// and are collected in lenient mode.
fn read_rows<T, R: Read>(
    path: &Path,
    strict: Strictness,
    reader: &mut csv::Reader<R>,
    mut parse: impl FnMut(&StringRecord) -> RowResult<T>,
) -> CliResult<(Vec<T>, Vec<SkippedRow>)> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse(&row) {
            Ok(v) => out.push(v),
            Err(message) => match strict {
                Strictness::Strict => return Err(CliError::Row { path: path.to_path_buf(), line, message }),
                Strictness::Lenient => {
                    skipped.push(SkippedRow { file: path.display().to_string(), line, reason: message })
                }
            },
        }
    }
    Ok((out, skipped))
}

pub const ROUTINE_REQUIRED: [&str; 6] = ["patient_id", "ward_id", "arm", "age", "sex_male", "index_stay_days"];

fn readmission_slots(header: &Header) -> Vec<usize> {
    let mut k: Vec<usize> = header
        .index
        .keys()
        .filter_map(|c| c.strip_prefix("readm_start_").and_then(|n| n.parse().ok()))
        .collect();
    k.sort_unstable();
    k
}

pub fn parse_routine_csv(path: &Path, strict: Strictness) -> CliResult<Parsed<RoutineRecord>> {
    let mut reader = open(path)?;
    let header = Header::read(path, &mut reader)?;
    header.require(path, &ROUTINE_REQUIRED)?;
    let slots = readmission_slots(&header);
    for k in &slots {
        header.require(path, &[&format!("readm_len_{k}")])?;
    }
    let (records, skipped) = read_rows(path, strict, &mut reader, |row| {
        let patient_id = header.get(row, "patient_id").ok_or("patient_id is blank")?.to_string();
        let arm_code = header.get(row, "arm").ok_or("arm is blank")?;
        let arm = match arm_code {
            "0" => Arm::Control,
            "1" => Arm::Intervention,
            s => return Err(format!("arm: '{s}' must be 0 or 1")),
        };
        let mut readmissions = Vec::new();
        for k in &slots {
            let start = day(header.get(row, &format!("readm_start_{k}")), "readm_start")?;
            let len = number(header.get(row, &format!("readm_len_{k}")), "readm_len")?;
            match (start, len) {
                (Some(start_day), length_days) => readmissions.push(Readmission { start_day, length_days }),
                (None, Some(_)) => return Err(format!("readm_len_{k} given without readm_start_{k}")),
                (None, None) => {}
            }
        }
        let rec = RoutineRecord {
            patient_id,
            ward_id: header.get(row, "ward_id").ok_or("ward_id is blank")?.to_string(),
            arm,
            age: required(number(header.get(row, "age"), "age"), "age")?,
            sex_male: required(flag(header.get(row, "sex_male"), "sex_male"), "sex_male")?,
            death_day: day(header.get(row, "death_day"), "death_day")?,
            readmissions,
            index_stay_days: number(header.get(row, "index_stay_days"), "index_stay_days")?,
        };
        if let Some(d) = rec.death_day.filter(|d| *d > 90) {
            return Err(format!("death_day {d} outside 0-90"));
        }
        for r in &rec.readmissions {
            if r.start_day > 90 {
                return Err(format!("readmission start day {} outside 0-90", r.start_day));
            }
            if r.length_days.is_some_and(|l| l < 0.0) {
                return Err("negative readmission length".into());
            }
        }
        Ok(rec)
    })?;
    Ok(Parsed { records, skipped, warnings: Vec::new() })
}

pub fn eq5d_column(t: usize, dim: &str) -> String {
    format!("eq5d_{}_{dim}", TIMEPOINT_LABELS[t])
}

pub fn eq5d_index_column(t: usize) -> String {
    format!("eq5d_{}_index", TIMEPOINT_LABELS[t])
}

pub fn parse_crf_csv(path: &Path, strict: Strictness) -> CliResult<Parsed<CrfRecord>> {
    let mut reader = open(path)?;
    let header = Header::read(path, &mut reader)?;
    let mut required = vec!["patient_id".to_string()];
    for t in 0..4 {
        for dim in EQ5D_DIMENSIONS {
            required.push(eq5d_column(t, dim));
        }
    }
    header.require(path, &required.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut warnings = Vec::new();
    let (records, skipped) = read_rows(path, strict, &mut reader, |row| {
        let patient_id = header.get(row, "patient_id").ok_or("patient_id is blank")?.to_string();
        let mut eq5d = [Eq5dObservation::default(); 4];
        for (t, obs) in eq5d.iter_mut().enumerate() {
            let mut levels = [0u8; 5];
            let mut present = 0;
            for (k, dim) in EQ5D_DIMENSIONS.iter().enumerate() {
                let col = eq5d_column(t, dim);
                if let Some(s) = header.get(row, &col) {
                    let v: u8 = s.parse().map_err(|_| format!("{col}: '{s}' is not a level 1-5"))?;
                    if !(1..=5).contains(&v) {
                        return Err(format!("{col}: level {v} outside 1-5"));
                    }
                    levels[k] = v;
                    present += 1;
                }
            }
            if present == 5 {
                obs.profile = Some(Eq5dProfile::new(levels).map_err(|e| e.to_string())?);
            } else if present > 0 {
                warnings.push(format!("patient {patient_id}: incomplete EQ-5D profile at {} treated as missing", TIMEPOINT_LABELS[t]));
            }
            let idx = eq5d_index_column(t);
            obs.utility = number(header.get(row, &idx), &idx)?;
            if obs.utility.is_some_and(|u| u > 1.0) {
                return Err(format!("{idx}: utility above 1"));
            }
        }
        let mut resource_use = BTreeMap::new();
        for r in CRF_RESOURCES {
            let v = number(header.get(row, r), r)?;
            if v.is_some_and(|c| c < 0.0) {
                return Err(format!("{r}: negative count"));
            }
            resource_use.insert(r.to_string(), v);
        }
        Ok(CrfRecord { patient_id, eq5d, resource_use })
    })?;
    Ok(Parsed { records, skipped, warnings })
}

pub const WARD_COLUMNS: [&str; 4] = ["ward_id", "specialty_elderly", "baseline_readm_rate_pct", "pct_over_75"];

pub fn parse_wards_csv(path: &Path, strict: Strictness) -> CliResult<Parsed<WardInfo>> {
    let mut reader = open(path)?;
    let header = Header::read(path, &mut reader)?;
    header.require(path, &WARD_COLUMNS)?;
    let (records, skipped) = read_rows(path, strict, &mut reader, |row| {
        let w = WardInfo {
            ward_id: header.get(row, "ward_id").ok_or("ward_id is blank")?.to_string(),
            specialty_elderly: required(flag(header.get(row, "specialty_elderly"), "specialty_elderly"), "specialty_elderly")?,
            baseline_readmission_rate: number(header.get(row, "baseline_readm_rate_pct"), "baseline_readm_rate_pct")?,
            pct_over_75: required(number(header.get(row, "pct_over_75"), "pct_over_75"), "pct_over_75")?,
        };
        w.validate().map_err(|e| e.to_string())?;
        Ok(w)
    })?;
    Ok(Parsed { records, skipped, warnings: Vec::new() })
}

/// Value set file: `mo,sc,ua,pd,ad,utility`, one row per profile.
pub fn parse_valueset_csv(path: &Path) -> CliResult<ValueSet> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_valueset(file, path)
}

/// Parses value set CSV from any reader; `origin` labels errors.
pub fn parse_valueset<R: Read>(source: R, origin: &Path) -> CliResult<ValueSet> {
    let path = origin;
    let mut reader = reader(source);
    let header = Header::read(path, &mut reader)?;
    let mut cols: Vec<&str> = EQ5D_DIMENSIONS.to_vec();
    cols.push("utility");
    header.require(path, &cols)?;
    let (entries, _) = read_rows(path, Strictness::Strict, &mut reader, |row| {
        let mut levels = [0u8; 5];
        for (k, dim) in EQ5D_DIMENSIONS.iter().enumerate() {
            let s = header.get(row, dim).ok_or_else(|| format!("{dim} is blank"))?;
            levels[k] = s.parse().map_err(|_| format!("{dim}: '{s}' is not a level"))?;
        }
        let profile = Eq5dProfile::new(levels).map_err(|e| e.to_string())?;
        let u = required(number(header.get(row, "utility"), "utility"), "utility")?;
        Ok((profile, u))
    })?;
    ValueSet::new(entries).map_err(|e| CliError::format(path, e.to_string()))
}

/// Writes a leading `# key: value` comment block followed by CSV rows.
pub fn write_csv(path: &Path, comments: &[(&str, String)], header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
    for (k, v) in comments {
        writeln!(file, "# {k}: {v}").map_err(|e| CliError::io(path, e))?;
    }
    let mut w = WriterBuilder::new().from_writer(file);
    let wrap = |e: csv::Error| csv_error(path, e);
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn max_readmissions(routine: &[RoutineRecord]) -> usize {
    routine.iter().map(|r| r.readmissions.len()).max().unwrap_or(0).max(1)
}

pub fn write_routine_csv(path: &Path, records: &[RoutineRecord]) -> CliResult<()> {
    let k = max_readmissions(records);
    let mut header: Vec<String> = ["patient_id", "ward_id", "arm", "age", "sex_male", "death_day"].map(String::from).to_vec();
    for j in 1..=k {
        header.push(format!("readm_start_{j}"));
        header.push(format!("readm_len_{j}"));
    }
    header.push("index_stay_days".into());
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.patient_id.clone(),
                r.ward_id.clone(),
                r.arm.index().to_string(),
                r.age.to_string(),
                fmt_flag(r.sex_male),
                r.death_day.map(|d| d.to_string()).unwrap_or_default(),
            ];
            for j in 0..k {
                match r.readmissions.get(j) {
                    Some(a) => {
                        row.push(a.start_day.to_string());
                        row.push(fmt_opt(a.length_days));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row.push(fmt_opt(r.index_stay_days));
            row
        })
        .collect();
    write_csv(path, &[], &header, &rows)
}

fn crf_header() -> Vec<String> {
    let mut header = vec!["patient_id".to_string()];
    for t in 0..4 {
        for dim in EQ5D_DIMENSIONS {
            header.push(eq5d_column(t, dim));
        }
        header.push(eq5d_index_column(t));
    }
    header.extend(CRF_RESOURCES.iter().map(|s| s.to_string()));
    header
}

fn crf_cells(eq5d: &[Eq5dObservation; 4], resources: &BTreeMap<String, Option<f64>>) -> Vec<String> {
    let mut row = Vec::new();
    for obs in eq5d {
        match obs.profile {
            Some(p) => row.extend(p.levels().iter().map(|l| l.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        row.push(fmt_opt(obs.utility));
    }
    row.extend(CRF_RESOURCES.iter().map(|r| fmt_opt(resources.get(*r).copied().flatten())));
    row
}

pub fn write_crf_csv(path: &Path, records: &[CrfRecord]) -> CliResult<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.patient_id.clone()];
            row.extend(crf_cells(&r.eq5d, &r.resource_use));
            row
        })
        .collect();
    write_csv(path, &[], &crf_header(), &rows)
}

pub fn write_wards_csv(path: &Path, wards: &[WardInfo]) -> CliResult<()> {
    let header: Vec<String> = WARD_COLUMNS.map(String::from).to_vec();
    let rows: Vec<Vec<String>> = wards
        .iter()
        .map(|w| {
            vec![w.ward_id.clone(), fmt_flag(w.specialty_elderly), fmt_opt(w.baseline_readmission_rate), w.pct_over_75.to_string()]
        })
        .collect();
    write_csv(path, &[], &header, &rows)
}

/// One row per merged patient: routine fields, ward attributes, then CRF
/// fields.
pub fn write_merged_csv(path: &Path, merged: &MergedDataset, comments: &[(&str, String)]) -> CliResult<()> {
    let (routine, _) = merged.to_sources();
    let k = max_readmissions(&routine.records);
    let mut header: Vec<String> = ["patient_id", "ward_id", "arm", "age", "sex_male", "death_day"].map(String::from).to_vec();
    for j in 1..=k {
        header.push(format!("readm_start_{j}"));
        header.push(format!("readm_len_{j}"));
    }
    header.push("index_stay_days".into());
    header.extend(WARD_COLUMNS[1..].iter().map(|s| s.to_string()));
    header.extend(crf_header().into_iter().skip(1));
    let rows: Vec<Vec<String>> = merged
        .patients()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let w = merged.ward_of(i);
            let mut row = vec![
                p.patient_id.clone(),
                p.ward_id.clone(),
                p.arm.index().to_string(),
                p.age.to_string(),
                fmt_flag(p.sex_male),
                p.death_day.map(|d| d.to_string()).unwrap_or_default(),
            ];
            for j in 0..k {
                match p.readmissions.get(j) {
                    Some(a) => {
                        row.push(a.start_day.to_string());
                        row.push(fmt_opt(a.length_days));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row.push(fmt_opt(p.index_stay_days));
            row.push(fmt_flag(w.specialty_elderly));
            row.push(fmt_opt(w.baseline_readmission_rate));
            row.push(w.pct_over_75.to_string());
            row.extend(crf_cells(&p.eq5d, &p.resource_use));
            row
        })
        .collect();
    write_csv(path, comments, &header, &rows)
}

const TABLE_META: [&str; 4] = ["patient_id", "ward_id", "arm", "death_day"];

/// A completed analysis table: row identifiers then one column per variable;
/// blank cells are still missing.
pub fn write_table_csv(path: &Path, table: &AnalysisTable, comments: &[(&str, String)]) -> CliResult<()> {
    let mut header: Vec<String> = TABLE_META.map(String::from).to_vec();
    header.extend(table.columns.iter().map(|c| c.name.clone()));
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![
                r.patient_id.clone(),
                table.ward_ids[r.ward].clone(),
                r.arm.index().to_string(),
                r.death_day.map(|d| d.to_string()).unwrap_or_default(),
            ];
            row.extend(table.columns.iter().map(|c| fmt_opt(c.values[i])));
            row
        })
        .collect();
    write_csv(path, comments, &header, &rows)
}

/// Reads a table written by [`write_table_csv`]. Column roles, statuses and
/// the ward list come from the accompanying mask manifest.
pub fn read_table_csv(
    path: &Path,
    ward_ids: &[String],
    roles: &[(String, ColumnRole)],
    status: &[(String, Vec<CellStatus>)],
) -> CliResult<AnalysisTable> {
    let mut reader = open(path)?;
    let header = Header::read(path, &mut reader)?;
    header.require(path, &TABLE_META)?;
    let ward_lookup: BTreeMap<&str, usize> = ward_ids.iter().enumerate().map(|(k, w)| (w.as_str(), k)).collect();
    let (rows, _) = read_rows(path, Strictness::Strict, &mut reader, |row| {
        let pid = header.get(row, "patient_id").ok_or("patient_id is blank")?.to_string();
        let ward_id = header.get(row, "ward_id").ok_or("ward_id is blank")?;
        let ward = *ward_lookup.get(ward_id).ok_or_else(|| format!("unknown ward {ward_id}"))?;
        let arm = match header.get(row, "arm") {
            Some("0") => Arm::Control,
            Some("1") => Arm::Intervention,
            other => return Err(format!("arm: {other:?} must be 0 or 1")),
        };
        let meta = RowMeta { patient_id: pid, arm, ward, death_day: day(header.get(row, "death_day"), "death_day")? };
        let values: Vec<Option<f64>> =
            roles.iter().map(|(name, _)| number(header.get(row, name), name)).collect::<RowResult<_>>()?;
        Ok((meta, values))
    })?;
    let mut columns = Vec::with_capacity(roles.len());
    for (k, (name, role)) in roles.iter().enumerate() {
        let st = status
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| CliError::format(path, format!("mask has no column {name}")))?;
        if st.len() != rows.len() {
            return Err(CliError::format(path, format!("mask for {name} has {} rows, file has {}", st.len(), rows.len())));
        }
        columns.push(Column { name: name.clone(), role: *role, values: rows.iter().map(|(_, v)| v[k]).collect(), status: st });
    }
    Ok(AnalysisTable { ward_ids: ward_ids.to_vec(), rows: rows.into_iter().map(|(m, _)| m).collect(), columns })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
