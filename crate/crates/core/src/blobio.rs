//! Dump files (File_SW, File_Design, File_HW). All three share one format:
//!
//! ```text
//! blobdump version 1
//! stage design
//! image 0
//! layer conv1 3456
//! 1.25000000e-01 -3.00000000e+00 ...
//! ...
//! prediction 7
//! ```

use std::io::{self, Write};

use thiserror::Error;

use crate::engines::{BlobDump, BlobRecord, Stage};
use crate::textfmt::{parse_real, write_sci, Tokens};

const VALUES_PER_LINE: usize = 8;

#[derive(Debug, Error)]
pub enum BlobIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown stage `{tag}`")]
    UnknownStage { line: usize, tag: String },
    #[error("layer {layer}: declared {expected} values, found {got}")]
    CountMismatch { layer: String, expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> BlobIoError {
    BlobIoError::Parse { line, message: message.into() }
}

/// Renders a dump. Output is a pure function of `d`.
pub fn render_blob_dump(d: &BlobDump) -> String {
    let total: usize = d.records.iter().map(|r| r.count()).sum();
    let mut out = String::with_capacity(64 + total * 16);
    out.push_str("blobdump version 1\n");
    out.push_str(&format!("stage {}\nimage {}\n", d.stage, d.image));
    for record in &d.records {
        out.push_str(&format!("layer {} {}\n", record.name, record.count()));
        for chunk in record.values().chunks(VALUES_PER_LINE) {
            for (i, &v) in chunk.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_sci(&mut out, v);
            }
            out.push('\n');
        }
    }
    out.push_str(&format!("prediction {}\n", d.prediction));
    out
}

pub fn write_blob_dump(d: &BlobDump, sink: &mut impl Write) -> io::Result<()> {
    sink.write_all(render_blob_dump(d).as_bytes())
}

fn expect_keyword<'a>(tokens: &mut Tokens<'a>, keyword: &str) -> Result<usize, BlobIoError> {
    match tokens.next() {
        Some((line, t)) if t == keyword => Ok(line),
        Some((line, t)) => Err(parse_err(line, format!("expected `{keyword}`, got `{t}`"))),
        None => Err(parse_err(tokens.line(), format!("expected `{keyword}`, got end of file"))),
    }
}

fn value<'a>(tokens: &mut Tokens<'a>, what: &str) -> Result<(usize, &'a str), BlobIoError> {
    tokens.next().ok_or_else(|| parse_err(tokens.line(), format!("expected {what}, got end of file")))
}

pub fn read_blob_dump(source: &str) -> Result<BlobDump, BlobIoError> {
    let mut tokens = Tokens::new(source);
    expect_keyword(&mut tokens, "blobdump")?;
    expect_keyword(&mut tokens, "version")?;
    let (line, v) = value(&mut tokens, "version number")?;
    if v != "1" {
        return Err(parse_err(line, format!("unsupported version `{v}`")));
    }
    expect_keyword(&mut tokens, "stage")?;
    let (line, tag) = value(&mut tokens, "stage tag")?;
    let stage: Stage = tag.parse().map_err(|_| BlobIoError::UnknownStage { line, tag: tag.to_string() })?;
    expect_keyword(&mut tokens, "image")?;
    let (_, image) = value(&mut tokens, "image id")?;

    let mut records = Vec::new();
    loop {
        let (line, keyword) = value(&mut tokens, "`layer` or `prediction`")?;
        match keyword {
            "layer" => {
                let (_, name) = value(&mut tokens, "layer name")?;
                let (line, n) = value(&mut tokens, "element count")?;
                let expected: usize =
                    n.parse().map_err(|_| parse_err(line, format!("invalid element count `{n}`")))?;
                let mut values = Vec::with_capacity(expected);
                while let Some((line, tok)) = tokens.peek() {
                    if tok == "layer" || tok == "prediction" {
                        break;
                    }
                    tokens.next();
                    values.push(parse_real(tok).ok_or_else(|| parse_err(line, format!("invalid value `{tok}`")))?);
                }
                if values.len() != expected {
                    return Err(BlobIoError::CountMismatch { layer: name.to_string(), expected, got: values.len() });
                }
                records.push(BlobRecord::new(name, values));
            }
            "prediction" => {
                let (line, p) = value(&mut tokens, "class index")?;
                let prediction = p.parse().map_err(|_| parse_err(line, format!("invalid class index `{p}`")))?;
                if let Some((line, t)) = tokens.next() {
                    return Err(parse_err(line, format!("trailing content `{t}`")));
                }
                return Ok(BlobDump { stage, image: image.to_string(), records, prediction });
            }
            other => return Err(parse_err(line, format!("expected `layer` or `prediction`, got `{other}`"))),
        }
    }
}
