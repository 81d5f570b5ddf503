use std::io::{Read, Write};

use super::FormatError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Float,
    Integer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: &[(&str, ColumnType)]) -> Self {
        Schema { columns: columns.iter().map(|&(n, ty)| Column { name: n.to_string(), ty }).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Text(String),
    Float(f64),
    Int(i64),
}

impl Value {
    fn matches(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Value::Text(_), ColumnType::Text) | (Value::Float(_), ColumnType::Float) | (Value::Int(_), ColumnType::Integer)
        )
    }

    fn render(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            // shortest representation that parses back to the same f64
            Value::Float(v) => format!("{v}"),
            Value::Int(v) => v.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Float(v) => Some(v),
            Value::Int(v) => Some(v as f64),
            Value::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

/// Write `rows` as comma-separated text with a header row taken from `schema`.
pub fn export_table<W: Write>(rows: &[Vec<Value>], schema: &Schema, sink: W) -> Result<(), FormatError> {
    for (r, row) in rows.iter().enumerate() {
        if row.len() != schema.columns.len() {
            let column = schema.columns.get(row.len()).map_or_else(|| "<extra>".to_string(), |c| c.name.clone());
            return Err(FormatError::Schema {
                column,
                message: format!("row {r} has {} fields, schema has {}", row.len(), schema.columns.len()),
            });
        }
        for (v, c) in row.iter().zip(&schema.columns) {
            if !v.matches(c.ty) {
                return Err(FormatError::Schema { column: c.name.clone(), message: format!("row {r}: expected {:?}, got {v:?}", c.ty) });
            }
        }
    }
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| FormatError::Io(std::io::Error::other(e));
    w.write_record(schema.columns.iter().map(|c| c.name.as_str())).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(Value::render)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a table written by [`export_table`], checking the header against `schema`.
pub fn read_table<R: Read>(source: R, schema: &Schema) -> Result<Vec<Vec<Value>>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = rdr.headers().map_err(|e| parse_err(&e, "header"))?.clone();
    if headers.len() != schema.columns.len() {
        return Err(FormatError::Schema {
            column: schema.columns.get(headers.len()).map_or_else(|| "<extra>".into(), |c| c.name.clone()),
            message: format!("header has {} columns, schema has {}", headers.len(), schema.columns.len()),
        });
    }
    for (h, c) in headers.iter().zip(&schema.columns) {
        if h != c.name {
            return Err(FormatError::Schema { column: c.name.clone(), message: format!("header names `{h}` instead") });
        }
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(&e, &format!("row {r}")))?;
        let mut row = Vec::with_capacity(rec.len());
        for (field, c) in rec.iter().zip(&schema.columns) {
            let bad = || FormatError::Schema { column: c.name.clone(), message: format!("row {r}: cannot parse `{field}`") };
            row.push(match c.ty {
                ColumnType::Text => Value::Text(field.to_string()),
                ColumnType::Float => Value::Float(field.parse::<f64>().map_err(|_| bad())?),
                ColumnType::Integer => Value::Int(field.parse::<i64>().map_err(|_| bad())?),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_err(e: &csv::Error, what: &str) -> FormatError {
    let location = e
        .position()
        .map_or_else(|| what.to_string(), |p| format!("line {} byte {}", p.line(), p.byte()));
    FormatError::Parse { location, message: e.to_string() }
}
