//! Versioned text checkpoint of named tensors. Values are stored as hex
//! f64 bit patterns so a save/load round-trip is exact.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

const MAGIC: &str = "lgcl-checkpoint v1";

pub fn save_checkpoint<P: AsRef<Path>>(
    path: P,
    meta: &[(String, String)],
    tensors: &[(String, Array2<f64>)],
) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let io_err = |source| Error::Io {
        path: path_str.clone(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref()).map_err(io_err)?);
    let io_err = |source| Error::Io {
        path: path_str.clone(),
        source,
    };
    writeln!(out, "{MAGIC}").map_err(io_err)?;
    for (k, v) in meta {
        if k.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("meta key '{k}' has whitespace")));
        }
        writeln!(out, "meta {k} {v}").map_err(io_err)?;
    }
    for (name, t) in tensors {
        if name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!(
                "tensor name '{name}' has whitespace"
            )));
        }
        writeln!(out, "tensor {name} {} {}", t.nrows(), t.ncols()).map_err(io_err)?;
        for row in t.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            writeln!(out, "{}", line.join(" ")).map_err(io_err)?;
        }
    }
    writeln!(out, "end").map_err(io_err)?;
    out.flush().map_err(io_err)
}

#[allow(clippy::type_complexity)]
pub fn load_checkpoint<P: AsRef<Path>>(
    path: P,
) -> Result<(Vec<(String, String)>, Vec<(String, Array2<f64>)>)> {
    let path_str = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref()).map_err(|source| Error::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let bad = |msg: &str| Error::Checkpoint(format!("{path_str}: {msg}"));

    let first = lines
        .next()
        .transpose()
        .map_err(|source| Error::Io {
            path: path_str.clone(),
            source,
        })?
        .ok_or_else(|| bad("empty file"))?;
    if first.trim() != MAGIC {
        return Err(bad(&format!("bad magic line '{first}'")));
    }

    let mut meta = Vec::new();
    let mut tensors = Vec::new();
    let mut saw_end = false;
    while let Some(line) = lines.next() {
        let line = line.map_err(|source| Error::Io {
            path: path_str.clone(),
            source,
        })?;
        let line = line.trim_end();
        if line == "end" {
            saw_end = true;
            break;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.push((k.to_string(), v.to_string()));
            continue;
        }
        let Some(rest) = line.strip_prefix("tensor ") else {
            return Err(bad(&format!("unexpected line '{line}'")));
        };
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(&format!("bad tensor header '{line}'")));
        }
        let name = parts[0].to_string();
        let rows: usize = parts[1].parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = parts[2].parse().map_err(|_| bad("bad col count"))?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row_line = lines
                .next()
                .transpose()
                .map_err(|source| Error::Io {
                    path: path_str.clone(),
                    source,
                })?
                .ok_or_else(|| bad("truncated tensor rows"))?;
            let mut count = 0usize;
            for tok in row_line.split_whitespace() {
                let bits = u64::from_str_radix(tok, 16).map_err(|_| bad("bad hex value"))?;
                values.push(f64::from_bits(bits));
                count += 1;
            }
            if count != cols {
                return Err(bad(&format!("row has {count} values, expected {cols}")));
            }
        }
        let t = Array2::from_shape_vec((rows, cols), values).map_err(|_| bad("bad shape"))?;
        tensors.push((name, t));
    }
    if !saw_end {
        return Err(bad("missing end marker"));
    }
    Ok((meta, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.lgcl");
        let tensors = vec![
            (
                "w0".to_string(),
                array![[1.0 / 3.0, -0.0], [f64::MIN_POSITIVE, 2.5e300]],
            ),
            ("b0".to_string(), array![[1e-308, -7.25]]),
        ];
        let meta = vec![("config_hash".to_string(), "cafebabe".to_string())];
        save_checkpoint(&path, &meta, &tensors).unwrap();
        let (m2, t2) = load_checkpoint(&path).unwrap();
        assert_eq!(m2, meta);
        assert_eq!(t2.len(), 2);
        for ((n1, a), (n2, b)) in tensors.iter().zip(&t2) {
            assert_eq!(n1, n2);
            assert_eq!(a.dim(), b.dim());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.lgcl");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        std::fs::write(&path, "lgcl-checkpoint v1\ntensor w 2 2\n00 00\n").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
