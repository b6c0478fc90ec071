//! Plain-text tensor files.
//!
//! ```text
//! dims n_1 n_2 ... n_K
//! i_1 i_2 ... i_K value
//! ...
//! ```
//!
//! Indices are 1-based and whitespace-separated. Dense tensors use the same
//! format with every entry present. Writers emit entries in lexicographic
//! index order and format values with the shortest round-trip representation,
//! so identical tensors always produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, SparseTensor, Support};

pub fn parse_sparse(text: &str) -> Result<SparseTensor> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (first_no, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty tensor file".into(),
    })?;
    let mut head = header.split_whitespace();
    if head.next() != Some("dims") {
        return Err(Error::Parse {
            line: first_no + 1,
            message: "expected header `dims n_1 ... n_K`".into(),
        });
    }
    let dims = head
        .map(|tok| {
            tok.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(|| Error::Parse {
                line: first_no + 1,
                message: format!("invalid dimension `{tok}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.is_empty() {
        return Err(Error::Parse {
            line: first_no + 1,
            message: "header lists no dimensions".into(),
        });
    }

    let mut entries = Vec::new();
    for (no, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != dims.len() + 1 {
            return Err(Error::Parse {
                line: no + 1,
                message: format!("expected {} indices and a value", dims.len()),
            });
        }
        let mut idx = Vec::with_capacity(dims.len());
        for (tok, &n) in toks[..dims.len()].iter().zip(&dims) {
            let i: usize = tok.parse().map_err(|_| Error::Parse {
                line: no + 1,
                message: format!("invalid index `{tok}`"),
            })?;
            if i == 0 || i > n {
                return Err(Error::Parse {
                    line: no + 1,
                    message: format!("index {i} outside 1..={n}"),
                });
            }
            idx.push(i - 1);
        }
        let v: f64 = toks[dims.len()].parse().map_err(|_| Error::Parse {
            line: no + 1,
            message: format!("invalid value `{}`", toks[dims.len()]),
        })?;
        entries.push((idx, v));
    }
    SparseTensor::new(&dims, entries)
}

/// Parses a file whose entries must cover the full grid.
pub fn parse_dense(text: &str) -> Result<DenseTensor> {
    let sparse = parse_sparse(text)?;
    let total: usize = sparse.dims().iter().product();
    if sparse.nnz() != total {
        return Err(Error::Parse {
            line: 1,
            message: format!("dense tensor needs {total} entries, found {}", sparse.nnz()),
        });
    }
    Ok(sparse.to_dense())
}

pub fn format_sparse(t: &SparseTensor) -> String {
    let mut out = String::new();
    write_header(&mut out, t.dims());
    for (idx, v) in t.iter() {
        write_entry(&mut out, idx, v);
    }
    out
}

pub fn format_dense(t: &DenseTensor) -> String {
    let mut out = String::new();
    write_header(&mut out, t.dims());
    let full = Support::full(t.dims()).expect("valid dims");
    for idx in full.iter() {
        write_entry(&mut out, idx, t.get(idx));
    }
    out
}

fn write_header(out: &mut String, dims: &[usize]) {
    out.push_str("dims");
    for n in dims {
        let _ = write!(out, " {n}");
    }
    out.push('\n');
}

fn write_entry(out: &mut String, idx: &[usize], v: f64) {
    for i in idx {
        let _ = write!(out, "{} ", i + 1);
    }
    let _ = writeln!(out, "{v}");
}

pub fn read_sparse(path: impl AsRef<Path>) -> Result<SparseTensor> {
    parse_sparse(&fs::read_to_string(path)?)
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseTensor> {
    parse_dense(&fs::read_to_string(path)?)
}

pub fn write_sparse(path: impl AsRef<Path>, t: &SparseTensor) -> Result<()> {
    Ok(fs::write(path, format_sparse(t))?)
}

pub fn write_dense(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    Ok(fs::write(path, format_dense(t))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_one_based_entries() {
        let t = parse_sparse("dims 2 3\n1 1 0.5\n\n2 3 -4\n").unwrap();
        assert_eq!(t.dims(), &[2, 3]);
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.support().index(1), &[1, 2]);
        assert_eq!(t.values(), &[0.5, -4.0]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_sparse("").is_err());
        assert!(parse_sparse("size 2 2\n").is_err());
        assert!(parse_sparse("dims 2 2\n0 1 1.0\n").is_err());
        assert!(parse_sparse("dims 2 2\n3 1 1.0\n").is_err());
        assert!(parse_sparse("dims 2 2\n1 1\n").is_err());
        assert!(parse_sparse("dims 2 2\n1 1 x\n").is_err());
        assert!(parse_sparse("dims 2 2\n1 1 1\n1 1 2\n").is_err());
        assert!(parse_dense("dims 2 2\n1 1 1\n").is_err());
    }

    #[test]
    fn dense_round_trip_is_byte_stable() {
        let t = DenseTensor::from_fn(&[2, 3, 2], |i| (i[0] as f64 - 0.3) * (i[1] + 2 * i[2]) as f64 / 7.0).unwrap();
        let text = format_dense(&t);
        let back = parse_dense(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(format_dense(&back), text);
        assert!(text.starts_with("dims 2 3 2\n1 1 1 "));
    }
}
