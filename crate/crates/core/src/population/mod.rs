//! Sampling frame: subjects, characteristic schemas and the stratification
//! of subjects into the cross-product cells of all characteristic groups.

mod schema;
mod strata;
mod synthetic;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

pub use schema::{CharacteristicSchema, GroupDef, GroupRule};
pub use strata::{stratify, StrataLayout, StratificationIndex, Stratum};
pub use synthetic::{generate_synthetic_population, PairCorrelation, SyntheticCharacteristic, SyntheticSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    values: Vec<String>,
}

/// A loaded table of subjects. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    columns: Vec<String>,
    column_index: HashMap<String, usize>,
    subjects: Vec<Subject>,
    id_index: HashMap<String, usize>,
    id_column: String,
}

impl Population {
    /// Builds a population from header + rows. Every row must have one cell
    /// per column.
    pub fn from_rows(columns: Vec<String>, rows: Vec<Vec<String>>, id_column: &str) -> Result<Self> {
        let column_index: HashMap<String, usize> = columns.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let id_pos =
            *column_index.get(id_column).ok_or_else(|| Error::MissingColumn { column: id_column.to_string() })?;
        if rows.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let mut subjects = Vec::with_capacity(rows.len());
        let mut id_index = HashMap::with_capacity(rows.len());
        for (row_no, values) in rows.into_iter().enumerate() {
            if values.len() != columns.len() {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} fields, expected {}",
                    row_no + 1,
                    values.len(),
                    columns.len()
                )));
            }
            let id = values[id_pos].clone();
            if id.is_empty() {
                return Err(Error::InvalidInput(format!("row {} has an empty id", row_no + 1)));
            }
            if id_index.insert(id.clone(), subjects.len()).is_some() {
                return Err(Error::DuplicateId { id, row: row_no + 1 });
            }
            subjects.push(Subject { id, values });
        }
        Ok(Population { columns, column_index, subjects, id_index, id_column: id_column.to_string() })
    }

    pub fn from_reader<R: Read>(reader: R, id_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Self::from_rows(columns, rows, id_column)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn id_column(&self) -> &str {
        &self.id_column
    }

    pub fn has_column(&self, column: &str) -> bool {
        self.column_index.contains_key(column)
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn subject(&self, pos: usize) -> &Subject {
        &self.subjects[pos]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    /// Raw value of `column` for the subject at `pos`. Empty cells read as `None`.
    pub fn value(&self, pos: usize, column: &str) -> Option<&str> {
        let c = *self.column_index.get(column)?;
        let v = self.subjects[pos].values[c].as_str();
        (!v.is_empty()).then_some(v)
    }

    pub fn numeric(&self, pos: usize, column: &str) -> Result<f64> {
        if !self.has_column(column) {
            return Err(Error::MissingColumn { column: column.to_string() });
        }
        let raw = self.value(pos, column).unwrap_or("");
        raw.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::NonNumeric {
            column: column.to_string(),
            subject: self.subjects[pos].id.clone(),
            value: raw.to_string(),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for s in &self.subjects {
            w.write_record(&s.values)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Reads a comma-delimited table with a header row; one subject per data row.
pub fn load_population(path: impl AsRef<Path>, id_column: &str) -> Result<Population> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Population::from_reader(std::io::BufReader::new(file), id_column)
}
