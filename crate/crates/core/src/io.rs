//! Matrix and vector file formats.
//!
//! * CSV: one row per line, comma-separated decimals, no header.
//! * Binary: magic `SLMX`, `u64` n, `u64` d (little endian), then `n * d`
//!   little-endian `f64` in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SLMX";

pub fn matrix_to_csv(x: &DesignMatrix) -> String {
    let mut out = String::new();
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str, context: &str) -> Result<DesignMatrix> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(format!("{context}:{}", lineno + 1), e.to_string()))?;
        rows.push(row);
    }
    DesignMatrix::from_rows(&rows)
}

pub fn matrix_to_bytes(x: &DesignMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * x.as_row_major().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(x.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.ncols() as u64).to_le_bytes());
    for v in x.as_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn matrix_from_bytes(bytes: &[u8], context: &str) -> Result<DesignMatrix> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::parse(context, "missing SLMX header"));
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::parse(context, "dimension overflow"))?;
    let body = &bytes[20..];
    if body.len() != expected {
        return Err(Error::parse(context, format!("expected {expected} payload bytes for {n}x{d}, found {}", body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    DesignMatrix::from_row_major(n, d, data)
}

/// Reads a matrix, choosing the binary format when the file starts with the magic bytes.
pub fn read_matrix(path: &Path) -> Result<DesignMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    if bytes.starts_with(MAGIC) {
        matrix_from_bytes(&bytes, &ctx)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::parse(&ctx, e.to_string()))?;
        matrix_from_csv(&text, &ctx)
    }
}

/// Writes binary when the extension is `slmx`, CSV otherwise.
pub fn write_matrix(path: &Path, x: &DesignMatrix) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("slmx")) {
        matrix_to_bytes(x)
    } else {
        matrix_to_csv(x).into_bytes()
    };
    write_file(path, &bytes)
}

/// A single column of numbers, one per line. Blank lines are skipped.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))
        })
        .collect()
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut s = String::new();
    for x in v {
        s.push_str(&format_f64(*x));
        s.push('\n');
    }
    write_file(path, s.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn both_formats_round_trip(n in 1usize..6, extra in 0usize..4, seed in any::<u64>()) {
            let d = n;
            let rows = n + extra;
            let mut s = seed;
            let data: Vec<f64> = (0..rows * d).map(|_| {
                s = crate::par::splitmix64(s);
                (s as i64 as f64) / 1e17
            }).collect();
            let x = DesignMatrix::from_row_major(rows, d, data).unwrap();
            let from_csv = matrix_from_csv(&matrix_to_csv(&x), "mem").unwrap();
            let from_bin = matrix_from_bytes(&matrix_to_bytes(&x), "mem").unwrap();
            prop_assert_eq!(from_csv.as_row_major(), x.as_row_major());
            prop_assert_eq!(from_bin.as_row_major(), x.as_row_major());
        }
    }

    #[test]
    fn binary_layout_is_exact() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = matrix_to_bytes(&x);
        assert_eq!(&b[..4], b"SLMX");
        assert_eq!(u64::from_le_bytes(b[4..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[28..36].try_into().unwrap()), 2.0);
        assert_eq!(b.len(), 20 + 32);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(matrix_from_csv("1,2\n3,x\n", "t").is_err());
        assert!(matrix_from_bytes(b"XXXX", "t").is_err());
        let mut b = matrix_to_bytes(&DesignMatrix::identity(2).unwrap());
        b.pop();
        assert!(matrix_from_bytes(&b, "t").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = DesignMatrix::from_rows(&[vec![0.1, -2.0], vec![3.5, 4.25], vec![1e-300, 7.0]]).unwrap();
        for name in ["m.csv", "m.slmx"] {
            let p = dir.path().join(name);
            write_matrix(&p, &x).unwrap();
            assert_eq!(read_matrix(&p).unwrap().as_row_major(), x.as_row_major());
        }
        let p = dir.path().join("y.csv");
        write_vector(&p, &[1.5, -0.25]).unwrap();
        assert_eq!(read_vector(&p).unwrap(), vec![1.5, -0.25]);
    }
}
