//! Bit-exact persistence for train objects: a short textual header followed
//! by the raw core buffers as little-endian 64-bit floats in core order.

use crate::constructors::QttObject;
use crate::error::TtError;
use crate::matrix::{Core4, TtMatrix};
use crate::tensor::{Core3, TtVector};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const MAGIC: &str = "qtt-container 1";

pub fn save(path: impl AsRef<Path>, obj: &QttObject) -> Result<(), TtError> {
    let mut w = BufWriter::new(File::create(path)?);
    match obj {
        QttObject::Vector(v) => {
            writeln!(w, "{MAGIC}")?;
            writeln!(w, "kind vector")?;
            writeln!(w, "d {}", v.num_modes())?;
            writeln!(w, "modes {}", join(&v.mode_sizes()))?;
            writeln!(w, "ranks {}", join(&v.ranks()))?;
            let count: usize = v.cores().iter().map(|c| c.data().len()).sum();
            writeln!(w, "data {count}")?;
            for core in v.cores() {
                for value in core.data() {
                    w.write_all(&value.to_le_bytes())?;
                }
            }
        }
        QttObject::Matrix(m) => {
            writeln!(w, "{MAGIC}")?;
            writeln!(w, "kind matrix")?;
            writeln!(w, "d {}", m.num_modes())?;
            writeln!(w, "rows {}", join(&m.row_sizes()))?;
            writeln!(w, "cols {}", join(&m.col_sizes()))?;
            writeln!(w, "ranks {}", join(&m.ranks()))?;
            let fused = m.fused_vector();
            let count: usize = fused.cores().iter().map(|c| c.data().len()).sum();
            writeln!(w, "data {count}")?;
            for core in fused.cores() {
                for value in core.data() {
                    w.write_all(&value.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<QttObject, TtError> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_line(&mut r)?;
    if magic != MAGIC {
        return Err(TtError::MalformedContainer(format!("bad magic line {magic:?}")));
    }
    let kind_line = read_line(&mut r)?;
    let kind = kind_line
        .strip_prefix("kind ")
        .ok_or_else(|| TtError::MalformedContainer("missing kind".into()))?
        .to_string();
    let d: usize = parse_scalar(&read_line(&mut r)?, "d")?;
    match kind.as_str() {
        "vector" => {
            let modes = parse_list(&read_line(&mut r)?, "modes", d)?;
            let ranks = parse_list(&read_line(&mut r)?, "ranks", d + 1)?;
            let data = read_payload(&mut r, &modes, &ranks)?;
            let mut cores = Vec::with_capacity(d);
            let mut offset = 0usize;
            for k in 0..d {
                let len = ranks[k] * modes[k] * ranks[k + 1];
                cores.push(Core3::from_vec(ranks[k], modes[k], ranks[k + 1], data[offset..offset + len].to_vec()));
                offset += len;
            }
            Ok(QttObject::Vector(TtVector::from_cores(cores)?))
        }
        "matrix" => {
            let rows = parse_list(&read_line(&mut r)?, "rows", d)?;
            let cols = parse_list(&read_line(&mut r)?, "cols", d)?;
            let ranks = parse_list(&read_line(&mut r)?, "ranks", d + 1)?;
            let fused: Vec<usize> = rows.iter().zip(&cols).map(|(&a, &b)| a * b).collect();
            let data = read_payload(&mut r, &fused, &ranks)?;
            let mut cores = Vec::with_capacity(d);
            let mut offset = 0usize;
            for k in 0..d {
                let len = ranks[k] * fused[k] * ranks[k + 1];
                let mut core = Core4::zeros(ranks[k], rows[k], cols[k], ranks[k + 1]);
                for (pos, &v) in data[offset..offset + len].iter().enumerate() {
                    let a = pos % ranks[k];
                    let rest = pos / ranks[k];
                    let i = rest % rows[k];
                    let rest = rest / rows[k];
                    let j = rest % cols[k];
                    let b = rest / cols[k];
                    core.set(a, i, j, b, v);
                }
                cores.push(core);
                offset += len;
            }
            Ok(QttObject::Matrix(TtMatrix::from_cores(cores)?))
        }
        other => Err(TtError::MalformedContainer(format!("unknown kind {other:?}"))),
    }
}

fn join(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn read_line(r: &mut impl BufRead) -> Result<String, TtError> {
    let mut line = String::new();
    let n = r.read_line(&mut line)?;
    if n == 0 {
        return Err(TtError::MalformedContainer("unexpected end of file".into()));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

fn parse_scalar(line: &str, tag: &str) -> Result<usize, TtError> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| TtError::MalformedContainer(format!("expected {tag:?} line, got {line:?}")))?;
    rest.trim()
        .parse()
        .map_err(|_| TtError::MalformedContainer(format!("bad {tag} value in {line:?}")))
}

fn parse_list(line: &str, tag: &str, expected: usize) -> Result<Vec<usize>, TtError> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| TtError::MalformedContainer(format!("expected {tag:?} line, got {line:?}")))?;
    let values: Result<Vec<usize>, _> = rest.split_whitespace().map(str::parse).collect();
    let values = values.map_err(|_| TtError::MalformedContainer(format!("bad {tag} list in {line:?}")))?;
    if values.len() != expected {
        return Err(TtError::MalformedContainer(format!(
            "{tag} list has {} entries, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

fn read_payload(r: &mut impl BufRead, modes: &[usize], ranks: &[usize]) -> Result<Vec<f64>, TtError> {
    let count: usize = parse_scalar(&read_line(r)?, "data")?;
    let expected: usize = (0..modes.len()).map(|k| ranks[k] * modes[k] * ranks[k + 1]).sum();
    if count != expected {
        return Err(TtError::MalformedContainer(format!(
            "payload declares {count} values, header implies {expected}"
        )));
    }
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructors;

    #[test]
    fn vector_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.qtt");
        let v = constructors::xfun(5).unwrap().scale(0.3);
        save(&path, &QttObject::Vector(v.clone())).unwrap();
        match load(&path).unwrap() {
            QttObject::Vector(w) => assert_eq!(v, w),
            _ => panic!("expected a vector"),
        }
    }

    #[test]
    fn matrix_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.qtt");
        let m = constructors::volterra(4).unwrap();
        save(&path, &QttObject::Matrix(m.clone())).unwrap();
        match load(&path).unwrap() {
            QttObject::Matrix(w) => assert_eq!(m, w),
            _ => panic!("expected a matrix"),
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.qtt");
        std::fs::write(&path, "not a container\n").unwrap();
        assert!(matches!(load(&path), Err(TtError::MalformedContainer(_))));
    }
}
