//! CSV readers and writers.
//!
//! Expression files have a header row whose first cell names the sample-id
//! column (it may be empty) followed by gene ids; each following row is a
//! sample id and one value per gene. Label files have a header and two
//! columns: sample id and class.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use raresub_core::data::ExpressionMatrix;
use raresub_core::Matrix;
use sha2::{Digest, Sha256};

use crate::error::{Result, RunError};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| RunError::input(path, e))
}

pub fn read_expression(path: &Path) -> Result<ExpressionMatrix> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| RunError::input(path, e))?.clone();
    if header.len() < 2 {
        return Err(RunError::input(
            path,
            "expected a sample-id column and at least one gene",
        ));
    }
    let gene_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut sample_ids = Vec::new();
    let mut values = Vec::new();
    let mut record = csv::StringRecord::new();
    while rdr
        .read_record(&mut record)
        .map_err(|e| RunError::input(path, e))?
    {
        let line = record.position().map_or(0, |p| p.line());
        sample_ids.push(record[0].to_owned());
        for (j, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                RunError::input(
                    path,
                    format!("line {line}, column {}: `{cell}` is not a number", j + 1),
                )
            })?;
            values.push(v);
        }
    }
    if sample_ids.is_empty() {
        return Err(RunError::input(path, "no samples"));
    }
    let m = Matrix::new(sample_ids.len(), gene_ids.len(), values)?;
    Ok(ExpressionMatrix::new(sample_ids, gene_ids, m)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RunError::input(path, e))?;
        if rec.len() < 2 {
            return Err(RunError::input(
                path,
                "label rows need a sample id and a class",
            ));
        }
        out.push((rec[0].to_owned(), rec[1].trim().to_owned()));
    }
    Ok(out)
}

/// `sample_id,cluster` rows.
pub fn read_assignments(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RunError::input(path, e))?;
        let cluster = rec
            .get(1)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| {
                RunError::input(path, format!("bad cluster in row {:?}", rec.position()))
            })?;
        out.push((rec[0].to_owned(), cluster));
    }
    Ok(out)
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let to_err = |e: csv::Error| RunError::output(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| RunError::output(path, e))
}

pub fn write_expression(path: &Path, m: &ExpressionMatrix) -> Result<()> {
    let mut header = vec!["sample_id"];
    header.extend(m.gene_ids().iter().map(String::as_str));
    let rows = m
        .sample_ids()
        .iter()
        .zip(m.values().row_iter())
        .map(|(id, row)| {
            std::iter::once(id.clone())
                .chain(row.iter().map(|v| format!("{v:?}")))
                .collect::<Vec<_>>()
        });
    write_csv(path, &header, rows)
}

pub fn write_labels(path: &Path, ids: &[String], classes: &[String]) -> Result<()> {
    write_csv(
        path,
        &["sample_id", "class"],
        ids.iter().zip(classes).map(|(a, b)| [a, b]),
    )
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| RunError::output(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| RunError::output(path, e.into()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| RunError::output(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| RunError::output(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| RunError::input(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| RunError::input(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let vals = vec![
            0.1,
            1e-300,
            3.0,
            7.25,
            1.0 / 3.0,
            2.0f64.sqrt(),
            0.0,
            5e10,
            1e-7,
            4.0,
            6.5,
            9.0,
        ];
        let m = ExpressionMatrix::new(
            (0..3).map(|i| format!("s{i}")).collect(),
            (0..4).map(|j| format!("g,{j}")).collect(),
            Matrix::new(3, 4, vals.clone()).unwrap(),
        )
        .unwrap();
        write_expression(&path, &m).unwrap();
        let back = read_expression(&path).unwrap();
        assert_eq!(back.gene_ids(), m.gene_ids());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.values().as_slice()), bits(&vals));
    }

    #[test]
    fn bad_cell_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, ",g0,g1\ns0,1,abc\n").unwrap();
        let err = read_expression(&path).unwrap_err();
        assert!(err.to_string().contains("abc"), "{err}");
        std::fs::write(&path, ",g0,g1\ns0,1\n").unwrap();
        assert!(read_expression(&path).is_err());
    }

    #[test]
    fn labels_and_assignments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        std::fs::write(&path, "\"\",Class\nsample_0,PRAD\nsample_1,LUAD\n").unwrap();
        assert_eq!(
            read_labels(&path).unwrap(),
            vec![
                ("sample_0".into(), "PRAD".into()),
                ("sample_1".into(), "LUAD".into())
            ]
        );
        std::fs::write(&path, "sample_id,cluster\na,0\nb,3\n").unwrap();
        assert_eq!(
            read_assignments(&path).unwrap(),
            vec![("a".into(), 0), ("b".into(), 3)]
        );
    }

    #[test]
    fn digest_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc");
        std::fs::write(&path, "abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
