//! JSON-lines gallery files.
//!
//! One [`FrameRecord`] per line. Records of a tube are contiguous and in
//! ascending `frame_index` order; tubes appear in file order. Embeddings are
//! written as the shortest decimal rendering of each `f32`, so a
//! write/read cycle reproduces the values bit for bit.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FrameRecord, Gallery, Tube};

/// Parses one gallery line. `line_no` is 1-based and only used in errors.
pub fn parse_frame_record(line: &str, line_no: usize) -> Result<FrameRecord> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let record: FrameRecord = serde_json::from_value(value).map_err(|e| Error::Schema {
        line: line_no,
        message: e.to_string(),
    })?;
    record.validate().map_err(|e| match e {
        Error::Value(msg) => Error::Value(format!("line {line_no}: {msg}")),
        other => other,
    })?;
    Ok(record)
}

pub fn read_gallery<R: BufRead>(reader: R) -> Result<Gallery> {
    let mut tubes: Vec<Tube> = Vec::new();
    let mut current: Vec<FrameRecord> = Vec::new();
    let mut closed: HashSet<String> = HashSet::new();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_frame_record(&line, line_no)?;
        let same_tube = current
            .last()
            .is_some_and(|last| last.tube_id == record.tube_id);
        if !same_tube {
            if closed.contains(&record.tube_id) {
                return Err(Error::Validation(format!(
                    "line {line_no}: records of tube '{}' are not contiguous",
                    record.tube_id
                )));
            }
            if !current.is_empty() {
                let tube = Tube::new(std::mem::take(&mut current))?;
                closed.insert(tube.tube_id().to_string());
                tubes.push(tube);
            }
        }
        current.push(record);
    }
    if !current.is_empty() {
        tubes.push(Tube::new(current)?);
    }
    Gallery::new(tubes)
}

pub fn load_gallery(path: impl AsRef<Path>) -> Result<Gallery> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gallery(BufReader::new(file))
}

/// Writes every frame of `tubes` as one JSON line.
pub fn write_tubes<'a, W, I>(mut writer: W, tubes: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Tube>,
{
    for tube in tubes {
        for frame in tube.frames() {
            serde_json::to_writer(&mut writer, frame)?;
            writer.write_all(b"\n")?;
        }
    }
    writer.flush()
}

pub fn write_gallery<W: Write>(writer: W, gallery: &Gallery) -> std::io::Result<()> {
    write_tubes(writer, gallery.tubes())
}

pub fn save_gallery(path: impl AsRef<Path>, gallery: &Gallery) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_gallery(BufWriter::new(file), gallery).map_err(|e| Error::io(path, e))
}
