use std::io::Read;
use std::path::Path;

use super::{DataError, Dataset};

/// Reserved category for empty cells.
pub const MISSING: &str = "__missing__";

/// Reads a comma-separated file; every cell is treated as categorical text.
pub fn ingest_csv(path: impl AsRef<Path>, header: bool) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ingest_reader(file, header)
}

pub fn ingest_reader<R: Read>(reader: R, header: bool) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cells: Vec<String> = record
            .iter()
            .map(|c| {
                if c.is_empty() {
                    MISSING.to_string()
                } else {
                    c.to_string()
                }
            })
            .collect();
        match &names {
            None if header => {
                names = Some(record.iter().map(str::to_string).collect());
                continue;
            }
            None => names = Some((1..=cells.len()).map(|i| format!("col{i}")).collect()),
            Some(_) => {}
        }
        let expected = names.as_ref().map_or(0, Vec::len);
        if cells.len() != expected {
            return Err(DataError::RaggedRow {
                line,
                expected,
                found: cells.len(),
            });
        }
        rows.push(cells);
    }
    let names = names.ok_or(DataError::EmptyTable)?;
    if rows.is_empty() || names.is_empty() {
        return Err(DataError::EmptyTable);
    }
    Dataset::from_text_rows(names, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_distinct_values() {
        let text = "A,B,C\na1,b1,c1\na1,b2,c1\na2,b1,c2\na2,b2,c2\na1,b1,c2\na2,b2,c1\n";
        let d = ingest_reader(text.as_bytes(), true).unwrap();
        assert_eq!((d.universe().k(), d.universe().m(), d.n()), (3, 6, 6));
    }

    #[test]
    fn ragged_row_names_the_line() {
        let text = "A,B,C\na1,b1,c1\na1,b2,c1\na2,b1,c2\na2,b2\n";
        let err = ingest_reader(text.as_bytes(), true).unwrap_err();
        assert!(err.to_string().starts_with("ragged row 5"), "{err}");
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert_eq!(ingest_reader("".as_bytes(), true), Err(DataError::EmptyTable));
        assert_eq!(ingest_reader("A,B\n".as_bytes(), true), Err(DataError::EmptyTable));
    }

    #[test]
    fn headerless_and_missing_cells() {
        let d = ingest_reader("x,,z\nx,y,z\n".as_bytes(), false).unwrap();
        assert_eq!(d.universe().feature(0).name, "col1");
        assert_eq!(d.universe().feature(1).categories, vec![MISSING, "y"]);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            ingest_csv("/nonexistent/file.csv", true),
            Err(DataError::Io { .. })
        ));
    }
}
