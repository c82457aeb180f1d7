//! Line-delimited JSON dataset files.
//!
//! Each line is one record tagged by `"t"`:
//!
//! ```text
//! {"t":"q","id":"fi-q000001","text":"...","lang":"fi"}
//! {"t":"p","id":"fi-p000001","text":"...","lang":"fi"}
//! {"t":"i","qid":"fi-q000001","pid":"fi-p000001","score":3,"lang":"fi","annotator":"gpt"}
//! ```
//!
//! Field order is fixed. Paths ending in `.gz` are gzip-compressed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{Dataset, GradedInstance, LanguageTag, Passage, Query, RelevanceScore};

#[derive(Serialize)]
struct TextLine<'a> {
    t: &'static str,
    id: &'a str,
    text: &'a str,
    lang: &'a str,
}

#[derive(Serialize)]
struct InstanceLine<'a> {
    t: &'static str,
    qid: &'a str,
    pid: &'a str,
    score: u8,
    lang: &'a str,
    annotator: &'a str,
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Open `path` for reading, transparently decompressing `.gz`.
pub fn open_reader(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let inner: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(inner)))
}

/// Create `path` (and parents) and stream `body` into it, gzip-compressing `.gz`.
pub fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let res = if is_gz(path) {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        body(&mut enc).and_then(|_| enc.finish()?.flush())
    } else {
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush())
    };
    res.map_err(|e| Error::io(path, e))
}

pub fn encode_dataset(dataset: &Dataset, out: &mut dyn Write) -> std::io::Result<()> {
    for q in &dataset.queries {
        writeln!(
            out,
            "{}",
            ser(&TextLine {
                t: "q",
                id: &q.id,
                text: &q.text,
                lang: q.language.code(),
            })
        )?;
    }
    for p in &dataset.passages {
        writeln!(
            out,
            "{}",
            ser(&TextLine {
                t: "p",
                id: &p.id,
                text: &p.text,
                lang: p.language.code(),
            })
        )?;
    }
    for i in &dataset.instances {
        writeln!(
            out,
            "{}",
            ser(&InstanceLine {
                t: "i",
                qid: &i.query_id,
                pid: &i.passage_id,
                score: i.score.value(),
                lang: i.language.code(),
                annotator: &i.annotator_id,
            })
        )?;
    }
    Ok(())
}

fn ser<T: Serialize>(record: &T) -> String {
    serde_json::to_string(record).expect("record serializes")
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_with(path, |w| encode_dataset(dataset, w))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let reader = open_reader(path)?;
    decode_dataset(reader, path)
}

/// Parse a dataset from any reader; `path` is used in error messages.
pub fn decode_dataset(reader: impl BufRead, path: &Path) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            field: field.to_string(),
            message,
        };
        let obj: Map<String, Value> = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(err("<record>", "expected a JSON object".into())),
            Err(e) => return Err(err("<record>", e.to_string())),
        };
        let text_field = |name: &str| -> Result<&str> {
            match obj.get(name) {
                Some(Value::String(s)) => Ok(s.as_str()),
                Some(_) => Err(err(name, "expected a string".into())),
                None => Err(err(name, "missing".into())),
            }
        };
        let lang = |name: &str| -> Result<LanguageTag> {
            LanguageTag::from_code(text_field(name)?).map_err(|e| err(name, e.to_string()))
        };
        match text_field("t")? {
            "q" => {
                let q = Query::new(text_field("id")?, text_field("text")?, lang("lang")?)
                    .map_err(|e| err("text", e.to_string()))?;
                ds.queries.push(q);
            }
            "p" => {
                let p = Passage::new(text_field("id")?, text_field("text")?, lang("lang")?)
                    .map_err(|e| err("text", e.to_string()))?;
                ds.passages.push(p);
            }
            "i" => {
                let score = match obj.get("score") {
                    Some(Value::Number(n)) => n
                        .as_i64()
                        .ok_or_else(|| err("score", format!("{n} is not an integer")))
                        .and_then(|v| {
                            RelevanceScore::new(v).map_err(|e| err("score", e.to_string()))
                        })?,
                    Some(other) => return Err(err("score", format!("expected integer, got {other}"))),
                    None => return Err(err("score", "missing".into())),
                };
                ds.instances.push(GradedInstance {
                    query_id: text_field("qid")?.to_string(),
                    passage_id: text_field("pid")?.to_string(),
                    score,
                    language: lang("lang")?,
                    annotator_id: text_field("annotator")?.to_string(),
                });
            }
            other => return Err(err("t", format!("unknown record type {other:?}"))),
        }
    }
    Ok(ds)
}

/// Serialize `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    write_with(path, |w| {
        w.write_all(body.as_bytes())?;
        w.write_all(b"\n")
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = open_reader(path)?;
    Ok(serde_json::from_reader(reader)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        decode_dataset(text.as_bytes(), Path::new("mem.jsonl"))
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n\n").unwrap().is_empty());
    }

    #[test]
    fn score_four_names_field_and_line() {
        let text = concat!(
            "{\"t\":\"q\",\"id\":\"q1\",\"text\":\"a\",\"lang\":\"fi\"}\n",
            "{\"t\":\"i\",\"qid\":\"q1\",\"pid\":\"p1\",\"score\":4,\"lang\":\"fi\",\"annotator\":\"x\"}\n"
        );
        match parse(text) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "score");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_and_bad_json() {
        let e = parse("{\"t\":\"p\",\"id\":\"p1\",\"lang\":\"fi\"}").unwrap_err();
        assert!(e.to_string().contains("`text`"), "{e}");
        let e = parse("not json").unwrap_err();
        assert!(e.to_string().contains("mem.jsonl:1"), "{e}");
        let e = parse("{\"t\":\"z\"}").unwrap_err();
        assert!(e.to_string().contains("`t`"), "{e}");
    }

    #[test]
    fn field_order_is_fixed() {
        let lang = LanguageTag::from_code("fi").unwrap();
        let ds = Dataset {
            queries: vec![Query::new("q1", "kysely", lang.clone()).unwrap()],
            passages: vec![Passage::new("p1", "teksti", lang.clone()).unwrap()],
            instances: vec![GradedInstance {
                query_id: "q1".into(),
                passage_id: "p1".into(),
                score: RelevanceScore::new(2).unwrap(),
                language: lang,
                annotator_id: "gpt".into(),
            }],
        };
        let mut buf = Vec::new();
        encode_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            concat!(
                "{\"t\":\"q\",\"id\":\"q1\",\"text\":\"kysely\",\"lang\":\"fi\"}\n",
                "{\"t\":\"p\",\"id\":\"p1\",\"text\":\"teksti\",\"lang\":\"fi\"}\n",
                "{\"t\":\"i\",\"qid\":\"q1\",\"pid\":\"p1\",\"score\":2,\"lang\":\"fi\",\"annotator\":\"gpt\"}\n"
            )
        );
        assert_eq!(parse(&text).unwrap(), ds);
    }

    #[test]
    fn gzip_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lang = LanguageTag::from_code("ar").unwrap();
        let ds = Dataset {
            queries: vec![Query::new("q", "سؤال", lang.clone()).unwrap()],
            passages: vec![Passage::new("p", "نص", lang).unwrap()],
            instances: vec![],
        };
        let path = dir.path().join("d.jsonl.gz");
        write_dataset(&path, &ds).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
    }
}
