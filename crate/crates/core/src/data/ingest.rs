use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::vocab::ItemVocabulary;
use super::Dataset;
use crate::{Error, Result};

/// One raw `user,item,timestamp` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

/// One already-ordered `user item1 item2 ...` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSequence {
    pub user: String,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    CsvTriples,
    SequenceLines,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv-triples" => Ok(InputFormat::CsvTriples),
            "seq" | "sequence-lines" => Ok(InputFormat::SequenceLines),
            other => Err(Error::Config(format!("unknown input format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ingested {
    Records(Vec<InteractionRecord>),
    Sequences(Vec<RawSequence>),
}

impl Ingested {
    pub fn is_empty(&self) -> bool {
        match self {
            Ingested::Records(r) => r.is_empty(),
            Ingested::Sequences(s) => s.iter().all(|s| s.items.is_empty()),
        }
    }

    /// Flatten to records. Sequence lines get their position as timestamp,
    /// which keeps their given order through the stable chronological sort.
    pub fn into_records(self) -> Vec<InteractionRecord> {
        match self {
            Ingested::Records(r) => r,
            Ingested::Sequences(seqs) => seqs
                .into_iter()
                .flat_map(|s| {
                    let user = s.user;
                    s.items
                        .into_iter()
                        .enumerate()
                        .map(move |(i, item)| InteractionRecord {
                            user: user.clone(),
                            item,
                            timestamp: i as i64,
                        })
                })
                .collect(),
        }
    }
}

pub fn ingest_interactions(path: &Path, format: InputFormat) -> Result<Ingested> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ingested = match format {
        InputFormat::CsvTriples => Ingested::Records(parse_csv_triples(&text, path)?),
        InputFormat::SequenceLines => Ingested::Sequences(parse_sequence_lines(&text)),
    };
    if ingested.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok(ingested)
}

/// Parse `user,item,timestamp` rows. A first row whose timestamp field is not
/// an integer is treated as a header.
pub fn parse_csv_triples(text: &str, origin: &Path) -> Result<Vec<InteractionRecord>> {
    let mut records = Vec::new();
    let mut seen_row = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_error = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message,
        };
        if fields.len() != 3 {
            return Err(parse_error(format!(
                "expected `user,item,timestamp`, found {} field(s)",
                fields.len()
            )));
        }
        let timestamp = match fields[2].parse::<i64>() {
            Ok(t) => t,
            Err(_) if !seen_row => {
                seen_row = true;
                continue;
            }
            Err(_) => return Err(parse_error(format!("timestamp `{}` is not an integer", fields[2]))),
        };
        seen_row = true;
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_error("empty user or item field".into()));
        }
        records.push(InteractionRecord {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            timestamp,
        });
    }
    Ok(records)
}

pub fn parse_sequence_lines(text: &str) -> Vec<RawSequence> {
    text.lines()
        .filter_map(|line| {
            let mut tokens = line.split_whitespace();
            let user = tokens.next()?;
            Some(RawSequence {
                user: user.to_string(),
                items: tokens.map(str::to_string).collect(),
            })
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write `user item1 item2 ...` lines using the original item strings.
pub fn write_sequence_lines(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(PathBuf::from(path), e);
    for seq in &dataset.sequences {
        write!(out, "{}", dataset.users[seq.user as usize]).map_err(io)?;
        for &item in &seq.items {
            write!(out, " {}", dataset.vocab.name(item).unwrap_or("?")).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Write `item_string<TAB>integer_id` lines in ID order.
pub fn write_vocabulary(path: &Path, vocab: &ItemVocabulary) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(PathBuf::from(path), e);
    for (id, name) in vocab.iter() {
        writeln!(out, "{name}\t{id}").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> PathBuf {
        PathBuf::from("test.csv")
    }

    #[test]
    fn csv_rows_in_file_order() {
        let recs = parse_csv_triples("u1,a,3\nu1,b,1\nu1,c,2\n", &origin()).unwrap();
        let items: Vec<_> = recs.iter().map(|r| r.item.as_str()).collect();
        assert_eq!(items, ["a", "b", "c"]);
        assert_eq!(recs[0].timestamp, 3);
    }

    #[test]
    fn csv_header_is_skipped() {
        let recs = parse_csv_triples("user,item,ts\nu1,a,3\n", &origin()).unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn missing_timestamp_names_line() {
        let err = parse_csv_triples("u1,a,1\nu1,i5\n", &origin()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_timestamp_after_data_is_an_error() {
        assert!(parse_csv_triples("u1,a,1\nu1,b,x\n", &origin()).is_err());
    }

    #[test]
    fn sequence_line_tokens() {
        let seqs = parse_sequence_lines("u1 a b c\n\nu2 d\n");
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].user, "u1");
        assert_eq!(seqs[0].items, ["a", "b", "c"]);
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        fs::write(&path, "").unwrap();
        assert!(matches!(
            ingest_interactions(&path, InputFormat::CsvTriples),
            Err(Error::EmptyInput(_))
        ));
    }
}
