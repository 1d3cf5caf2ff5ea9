//! PostgreSQL `COPY ... FROM STDIN` text format and RFC-4180 CSV export.
//!
//! Text format: one row per line, fields separated by a tab, `\N` for NULL,
//! and backslash escapes for backslash, tab, newline and carriage return.

use std::borrow::Cow;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::types::*;
use super::IngestError;

/// Size of the in-memory buffer in front of each sink.
pub const BULK_BUFFER_BYTES: usize = 1 << 20;

pub const NULL: &str = "\\N";

pub fn escape(field: &str) -> Cow<'_, str> {
    if !field.contains(['\\', '\t', '\n', '\r']) {
        return Cow::Borrowed(field);
    }
    let mut out = String::with_capacity(field.len() + 4);
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    Cow::Owned(out)
}

/// Inverse of [`escape`]; `None` for the NULL marker.
pub fn unescape(field: &str) -> Result<Option<String>, String> {
    if field == NULL {
        return Ok(None);
    }
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unsupported escape `\\{other}`")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(Some(out))
}

fn num(v: Option<f64>) -> Option<String> {
    v.map(|x| x.to_string())
}

fn date(v: Option<NaiveDate>) -> Option<String> {
    v.map(|d| d.format("%Y-%m-%d").to_string())
}

/// String fields of one row in table column order.
pub(crate) fn row_fields(tables: &RawTables, table: Table) -> Vec<Vec<Option<String>>> {
    match table {
        Table::Main => tables
            .main
            .iter()
            .map(|r| {
                vec![
                    Some(r.key.to_string()),
                    Some(r.species.clone()),
                    r.breed.clone(),
                    r.gender.clone(),
                    num(r.age_value),
                    r.age_unit.map(|u| u.as_str().to_string()),
                    num(r.weight_value),
                    r.weight_unit.map(|u| u.as_str().to_string()),
                    date(r.received_date),
                ]
            })
            .collect(),
        Table::Events => tables
            .events
            .iter()
            .map(|r| {
                vec![
                    Some(r.key.to_string()),
                    r.term_code.clone(),
                    Some(r.term_name.clone()),
                    r.veddra_level.map(|l| l.as_str().to_string()),
                ]
            })
            .collect(),
        Table::Outcomes => tables
            .outcomes
            .iter()
            .map(|r| {
                vec![
                    Some(r.key.to_string()),
                    Some(r.medical_status.as_str().to_string()),
                    r.animals_affected.map(|n| n.to_string()),
                ]
            })
            .collect(),
        Table::Drugs => tables
            .drugs
            .iter()
            .map(|r| {
                vec![
                    Some(r.key.to_string()),
                    Some(r.ingredient_name.clone()),
                    r.brand_name.clone(),
                    r.dosage_form.clone(),
                    r.route.clone(),
                    r.atcvet_code.clone(),
                ]
            })
            .collect(),
    }
}

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Row counts written per table.
pub type BulkCounts = TableCounts;

fn write_table<W: Write>(tables: &RawTables, table: Table, sink: W) -> Result<usize, IngestError> {
    let mut out = BufWriter::with_capacity(
        BULK_BUFFER_BYTES,
        CountingWriter {
            inner: sink,
            written: 0,
        },
    );
    let rows = row_fields(tables, table);
    let mut line = String::new();
    let mut result = Ok(());
    for row in &rows {
        line.clear();
        for (i, field) in row.iter().enumerate() {
            if i > 0 {
                line.push('\t');
            }
            match field {
                Some(v) => line.push_str(&escape(v)),
                None => line.push_str(NULL),
            }
        }
        line.push('\n');
        if let Err(e) = out.write_all(line.as_bytes()) {
            result = Err(e);
            break;
        }
    }
    let result = result.and_then(|_| out.flush());
    result.map_err(|source| IngestError::Sink {
        table,
        bytes_written: out.get_ref().written,
        source,
    })?;
    Ok(rows.len())
}

/// Writes each table as bulk-load text to the sink returned by `open`.
pub fn export_bulk<W, F>(tables: &RawTables, mut open: F) -> Result<BulkCounts, IngestError>
where
    W: Write,
    F: FnMut(Table) -> io::Result<W>,
{
    let mut counts = BulkCounts::default();
    for table in Table::ALL {
        let sink = open(table).map_err(|source| IngestError::Sink {
            table,
            bytes_written: 0,
            source,
        })?;
        let n = write_table(tables, table, sink)?;
        match table {
            Table::Main => counts.main = n,
            Table::Events => counts.events = n,
            Table::Outcomes => counts.outcomes = n,
            Table::Drugs => counts.drugs = n,
        }
    }
    Ok(counts)
}

/// In-memory bulk text of all four tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BulkTexts {
    pub main: Vec<u8>,
    pub events: Vec<u8>,
    pub outcomes: Vec<u8>,
    pub drugs: Vec<u8>,
}

impl BulkTexts {
    pub fn get(&self, table: Table) -> &[u8] {
        match table {
            Table::Main => &self.main,
            Table::Events => &self.events,
            Table::Outcomes => &self.outcomes,
            Table::Drugs => &self.drugs,
        }
    }

    fn get_mut(&mut self, table: Table) -> &mut Vec<u8> {
        match table {
            Table::Main => &mut self.main,
            Table::Events => &mut self.events,
            Table::Outcomes => &mut self.outcomes,
            Table::Drugs => &mut self.drugs,
        }
    }
}

pub fn export_bulk_to_memory(tables: &RawTables) -> Result<BulkTexts, IngestError> {
    let mut texts = BulkTexts::default();
    for table in Table::ALL {
        write_table(tables, table, texts.get_mut(table))?;
    }
    Ok(texts)
}

fn split_line(table: Table, line_no: usize, line: &str) -> Result<Vec<Option<String>>, IngestError> {
    let bad = |message: String| IngestError::Bulk {
        table,
        line: line_no,
        message,
    };
    let fields: Vec<Option<String>> = line
        .split('\t')
        .map(unescape)
        .collect::<Result<_, _>>()
        .map_err(&bad)?;
    if fields.len() != table.columns().len() {
        return Err(bad(format!(
            "expected {} fields, found {}",
            table.columns().len(),
            fields.len()
        )));
    }
    Ok(fields)
}

fn lines(text: &[u8]) -> Result<impl Iterator<Item = (usize, &str)>, String> {
    let text = std::str::from_utf8(text).map_err(|e| e.to_string())?;
    Ok(text.lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn required(table: Table, line: usize, field: Option<String>, name: &str) -> Result<String, IngestError> {
    field.ok_or_else(|| IngestError::Bulk {
        table,
        line,
        message: format!("{name} is NULL"),
    })
}

fn parsed<T: std::str::FromStr>(table: Table, line: usize, field: Option<String>) -> Result<Option<T>, IngestError>
where
    T::Err: std::fmt::Display,
{
    field
        .map(|v| v.parse::<T>())
        .transpose()
        .map_err(|e| IngestError::Bulk {
            table,
            line,
            message: e.to_string(),
        })
}

fn key(table: Table, line: usize, field: Option<String>) -> Result<ReportKey, IngestError> {
    required(table, line, field, "key").and_then(|k| {
        ReportKey::new(k).ok_or(IngestError::Bulk {
            table,
            line,
            message: "empty key".into(),
        })
    })
}

/// Re-parses bulk text produced by [`export_bulk`].
pub fn parse_bulk(texts: &BulkTexts) -> Result<RawTables, IngestError> {
    let utf8 = |table: Table| {
        move |message: String| IngestError::Bulk {
            table,
            line: 0,
            message,
        }
    };
    let mut tables = RawTables::default();

    let t = Table::Main;
    for (n, line) in lines(&texts.main).map_err(utf8(t))? {
        let mut f = split_line(t, n, line)?.into_iter();
        let mut next = || f.next().flatten();
        let key = key(t, n, next())?;
        let species = required(t, n, next(), "species")?;
        let breed = next();
        let gender = next();
        let age_value = parsed::<f64>(t, n, next())?;
        let age_unit = parsed::<AgeUnit>(t, n, next())?;
        let weight_value = parsed::<f64>(t, n, next())?;
        let weight_unit = parsed::<WeightUnit>(t, n, next())?;
        let received_date = next()
            .map(|d| NaiveDate::parse_from_str(&d, "%Y-%m-%d"))
            .transpose()
            .map_err(|e| IngestError::Bulk {
                table: t,
                line: n,
                message: e.to_string(),
            })?;
        tables.main.push(MainRow {
            key,
            species,
            breed,
            gender,
            age_value,
            age_unit,
            weight_value,
            weight_unit,
            received_date,
        });
    }

    let t = Table::Events;
    for (n, line) in lines(&texts.events).map_err(utf8(t))? {
        let mut f = split_line(t, n, line)?.into_iter();
        let mut next = || f.next().flatten();
        tables.events.push(AeRow {
            key: key(t, n, next())?,
            term_code: next(),
            term_name: required(t, n, next(), "term_name")?,
            veddra_level: parsed::<VeddraLevel>(t, n, next())?,
        });
    }

    let t = Table::Outcomes;
    for (n, line) in lines(&texts.outcomes).map_err(utf8(t))? {
        let mut f = split_line(t, n, line)?.into_iter();
        let mut next = || f.next().flatten();
        let key = key(t, n, next())?;
        let status = required(t, n, next(), "medical_status")?;
        let medical_status = match status.as_str() {
            "RecoveredWithSequela" => MedicalStatus::RecoveredWithSequela,
            other => other.parse().map_err(|e: UnknownValue| IngestError::Bulk {
                table: t,
                line: n,
                message: e.to_string(),
            })?,
        };
        tables.outcomes.push(OutcomeRow {
            key,
            medical_status,
            animals_affected: parsed::<u64>(t, n, next())?,
        });
    }

    let t = Table::Drugs;
    for (n, line) in lines(&texts.drugs).map_err(utf8(t))? {
        let mut f = split_line(t, n, line)?.into_iter();
        let mut next = || f.next().flatten();
        tables.drugs.push(DrugRow {
            key: key(t, n, next())?,
            ingredient_name: required(t, n, next(), "ingredient_name")?,
            brand_name: next(),
            dosage_form: next(),
            route: next(),
            atcvet_code: next(),
        });
    }
    Ok(tables)
}

/// Writes `<table>.copy` files into `dir`.
pub fn export_bulk_to_dir(tables: &RawTables, dir: &Path) -> Result<BulkCounts, IngestError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    export_bulk(tables, |table| {
        std::fs::File::create(dir.join(format!("{}.copy", table.name())))
    })
}

/// RFC-4180 CSV with a header row; absent values are empty fields.
pub fn write_csv<W: Write>(tables: &RawTables, table: Table, sink: W) -> Result<usize, csv::Error> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(sink);
    writer.write_record(table.columns())?;
    let rows = row_fields(tables, table);
    for row in &rows {
        writer.write_record(row.iter().map(|f| f.as_deref().unwrap_or("")))?;
    }
    writer.flush()?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> ReportKey {
        ReportKey::new(s).unwrap()
    }

    fn sample() -> RawTables {
        RawTables {
            main: vec![MainRow {
                key: key("r1"),
                species: "Dog".into(),
                breed: None,
                gender: Some("Male".into()),
                age_value: Some(0.1),
                age_unit: Some(AgeUnit::Month),
                weight_value: Some(3.25),
                weight_unit: Some(WeightUnit::Pound),
                received_date: NaiveDate::from_ymd_opt(2020, 2, 29),
            }],
            events: vec![AeRow {
                key: key("r1"),
                term_code: None,
                term_name: "line\nbreak \\ slash".into(),
                veddra_level: Some(VeddraLevel::Llt),
            }],
            outcomes: vec![OutcomeRow {
                key: key("r1"),
                medical_status: MedicalStatus::RecoveredWithSequela,
                animals_affected: Some(2),
            }],
            drugs: vec![DrugRow {
                key: key("r1"),
                ingredient_name: "tab\there".into(),
                brand_name: None,
                dosage_form: Some("Tablet".into()),
                route: Some("Oral".into()),
                atcvet_code: Some("QJ01CA04".into()),
            }],
        }
    }

    #[test]
    fn absent_breed_is_null_marker() {
        let texts = export_bulk_to_memory(&sample()).unwrap();
        let line = std::str::from_utf8(&texts.main).unwrap();
        let fields: Vec<&str> = line.trim_end_matches('\n').split('\t').collect();
        assert_eq!(fields[2], "\\N");
    }

    #[test]
    fn tab_in_ingredient_is_escaped() {
        let texts = export_bulk_to_memory(&sample()).unwrap();
        let line = std::str::from_utf8(&texts.drugs).unwrap();
        assert!(line.contains("tab\\there"));
        assert_eq!(line.matches('\t').count(), 5);
    }

    #[test]
    fn round_trip() {
        let tables = sample();
        let texts = export_bulk_to_memory(&tables).unwrap();
        assert_eq!(parse_bulk(&texts).unwrap(), tables);
    }

    #[test]
    fn escape_inverse() {
        for s in ["", "plain", "a\\b", "\t\n\r", "\\N literal"] {
            assert_eq!(unescape(&escape(s)).unwrap().as_deref(), Some(s));
        }
        assert_eq!(unescape("\\N").unwrap(), None);
    }

    struct FailAfter {
        budget: usize,
    }

    impl Write for FailAfter {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            if self.budget == 0 {
                return Err(io::Error::new(io::ErrorKind::Other, "disk full"));
            }
            let n = buf.len().min(self.budget);
            self.budget -= n;
            Ok(n)
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn sink_failure_reports_bytes_written() {
        let err = export_bulk(&sample(), |_| Ok(FailAfter { budget: 10 })).unwrap_err();
        match err {
            IngestError::Sink {
                table,
                bytes_written,
                ..
            } => {
                assert_eq!(table, Table::Main);
                assert_eq!(bytes_written, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_quotes_fields() {
        let mut buf = Vec::new();
        write_csv(&sample(), Table::Events, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("unique_aer_id_number,term_code,term_name,veddra_level\r\n"));
        assert!(text.contains("\"line\nbreak \\ slash\""));
    }
}
