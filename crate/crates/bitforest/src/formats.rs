//! Record input files: line-delimited JSON or headered CSV.

use std::io::{BufRead, Read};

use bitforest_core::{Dimension, TransactionRecord};

use crate::error::{StoreError, StoreResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

/// Streams records from `input`, reporting the one-based line of any error.
pub fn read_records<R: Read + 'static>(
    input: R,
    format: Format,
) -> Box<dyn Iterator<Item = StoreResult<TransactionRecord>>> {
    match format {
        Format::Jsonl => Box::new(jsonl(std::io::BufReader::new(input))),
        Format::Csv => Box::new(csv_records(input)),
    }
}

fn jsonl<R: BufRead>(input: R) -> impl Iterator<Item = StoreResult<TransactionRecord>> {
    input.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i as u64 + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                return Some(Err(StoreError::Parse {
                    line: line_no,
                    message: e.to_string(),
                }))
            }
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<TransactionRecord>(&line)
                .map_err(|e| StoreError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })
                .and_then(|r| checked(r, line_no)),
        )
    })
}

fn checked(record: TransactionRecord, line: u64) -> StoreResult<TransactionRecord> {
    record.validate().map_err(|e| StoreError::Parse {
        line,
        message: e.to_string(),
    })?;
    Ok(record)
}

fn csv_records<R: Read>(input: R) -> impl Iterator<Item = StoreResult<TransactionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let columns: StoreResult<Vec<Dimension>> = match reader.headers() {
        Ok(h) => {
            let cols: StoreResult<Vec<Dimension>> = h
                .iter()
                .map(|name| {
                    name.parse()
                        .map_err(|e: bitforest_core::Error| StoreError::Parse {
                            line: 1,
                            message: e.to_string(),
                        })
                })
                .collect();
            cols.and_then(|cols| {
                let missing: Vec<_> = Dimension::ALL
                    .into_iter()
                    .filter(|d| !cols.contains(d))
                    .collect();
                if !missing.is_empty() || cols.len() != Dimension::COUNT {
                    let names: Vec<_> = missing.iter().map(|d| d.name()).collect();
                    return Err(StoreError::Parse {
                        line: 1,
                        message: format!(
                            "header must list the 14 fields once each; missing {}",
                            names.join(", ")
                        ),
                    });
                }
                Ok(cols)
            })
        }
        Err(e) => Err(StoreError::Parse {
            line: 1,
            message: e.to_string(),
        }),
    };
    let (columns, header_error) = match columns {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    let rows = reader.into_records();
    header_error
        .into_iter()
        .map(Err)
        .chain(rows.map(move |row| {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                StoreError::Parse {
                    line,
                    message: e.to_string(),
                }
            })?;
            let line = row.position().map_or(0, |p| p.line());
            if columns.is_empty() {
                return Err(StoreError::Parse {
                    line,
                    message: "no usable header".into(),
                });
            }
            let mut record = TransactionRecord::default();
            for (d, field) in columns.iter().zip(row.iter()) {
                record.set(*d, field).map_err(|e| StoreError::Parse {
                    line,
                    message: e.to_string(),
                })?;
            }
            checked(record, line)
        }))
        .take_while_inclusive_error()
}

/// Stops after the first error so a bad header is not reported once per row.
trait TakeWhileInclusiveError: Iterator + Sized {
    fn take_while_inclusive_error(self) -> StopAfterError<Self> {
        StopAfterError {
            inner: self,
            done: false,
        }
    }
}

impl<I, T> TakeWhileInclusiveError for I where I: Iterator<Item = StoreResult<T>> {}

pub struct StopAfterError<I> {
    inner: I,
    done: bool,
}

impl<I, T> Iterator for StopAfterError<I>
where
    I: Iterator<Item = StoreResult<T>>,
{
    type Item = StoreResult<T>;
    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.inner.next()?;
        self.done = item.is_err();
        Some(item)
    }
}

/// The CSV header in schema order.
pub fn csv_header() -> String {
    Dimension::ALL
        .iter()
        .map(|d| d.name())
        .collect::<Vec<_>>()
        .join(",")
}

/// One record as a CSV row in schema order.
pub fn csv_row(r: &TransactionRecord) -> String {
    Dimension::ALL
        .iter()
        .map(|d| r.get(*d).to_string())
        .collect::<Vec<_>>()
        .join(",")
}
