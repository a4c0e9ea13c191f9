//! Count-matrix ingestion and serialization: MatrixMarket coordinate files
//! with optional id sidecars, and dense tab-separated tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::CountMatrix;

/// `<stem>.features.txt` next to `path`.
pub fn features_sidecar(path: &Path) -> PathBuf {
    path.with_extension("features.txt")
}

/// `<stem>.cells.txt` next to `path`.
pub fn cells_sidecar(path: &Path) -> PathBuf {
    path.with_extension("cells.txt")
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_id_list(path: &Path) -> Result<Option<Vec<String>>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = read_to_string(path)?;
    Ok(Some(
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
    ))
}

/// Parses a count that may be serialized as an integer or as an integral real.
fn parse_count(token: &str, real: bool) -> std::result::Result<u64, String> {
    if real {
        let v: f64 = token.parse().map_err(|_| format!("non-numeric entry '{token}'"))?;
        if !v.is_finite() {
            return Err(format!("non-finite entry '{token}'"));
        }
        if v < 0.0 {
            return Err(format!("negative count {token}"));
        }
        let r = v.round();
        if (v - r).abs() > 1e-9 {
            return Err(format!("non-integral entry {token}"));
        }
        Ok(r as u64)
    } else {
        let v: i128 = token.parse().map_err(|_| format!("non-integer entry '{token}'"))?;
        if v < 0 {
            return Err(format!("negative count {token}"));
        }
        u64::try_from(v).map_err(|_| format!("count {token} overflows"))
    }
}

/// Reads a MatrixMarket coordinate file (features on rows, cells on columns).
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CountMatrix> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    let real = match fields.as_slice() {
        [banner, obj, fmt, field, sym]
            if banner == "%%matrixmarket"
                && obj == "matrix"
                && fmt == "coordinate"
                && sym == "general" =>
        {
            match field.as_str() {
                "integer" => false,
                "real" => true,
                other => {
                    return Err(Error::parse(path, 1, format!("unsupported field type '{other}'")))
                }
            }
        }
        _ => return Err(Error::parse(path, 1, format!("malformed header '{header}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut raw: Vec<(usize, usize, u64, usize)> = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if tok.len() != 3 {
                    return Err(Error::parse(path, lineno, "size line must be 'rows cols nnz'"));
                }
                let parse = |t: &str| {
                    t.parse::<usize>()
                        .map_err(|_| Error::parse(path, lineno, format!("bad size token '{t}'")))
                };
                let s = (parse(tok[0])?, parse(tok[1])?, parse(tok[2])?);
                raw.reserve(s.2);
                size = Some(s);
            }
            Some((p, n, _)) => {
                if tok.len() != 3 {
                    return Err(Error::parse(path, lineno, "entry line must be 'row col value'"));
                }
                let idx = |t: &str, bound: usize, what: &str| -> Result<usize> {
                    let v: usize = t
                        .parse()
                        .map_err(|_| Error::parse(path, lineno, format!("bad {what} index '{t}'")))?;
                    if v == 0 || v > bound {
                        return Err(Error::parse(
                            path,
                            lineno,
                            format!("{what} index {v} out of bounds 1..={bound}"),
                        ));
                    }
                    Ok(v - 1)
                };
                let i = idx(tok[0], p, "row")?;
                let j = idx(tok[1], n, "column")?;
                let v = parse_count(tok[2], real).map_err(|m| Error::parse(path, lineno, m))?;
                raw.push((i, j, v, lineno));
            }
        }
    }
    let (p, n, nnz) = size.ok_or_else(|| Error::parse(path, 1, "missing size line"))?;
    if raw.len() != nnz {
        return Err(Error::parse(
            path,
            1,
            format!("size line declares {nnz} entries, found {}", raw.len()),
        ));
    }
    raw.sort_by_key(|&(i, j, _, line)| (i, j, line));
    for w in raw.windows(2) {
        if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
            return Err(Error::parse(
                path,
                w[1].3,
                format!("duplicate coordinate ({}, {})", w[1].0 + 1, w[1].1 + 1),
            ));
        }
    }

    let feature_ids = read_id_list(&features_sidecar(path))?;
    let cell_ids = read_id_list(&cells_sidecar(path))?;
    CountMatrix::from_triplets(
        p,
        n,
        raw.into_iter().map(|(i, j, v, _)| (i, j, v)).collect(),
        feature_ids,
        cell_ids,
    )
}

/// Writes the matrix plus both id sidecars.
pub fn write_matrix_market(path: impl AsRef<Path>, x: &CountMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::with_capacity(16 * x.nnz() + 64);
    body.push_str("%%MatrixMarket matrix coordinate integer general\n");
    body.push_str(&format!("{} {} {}\n", x.n_features(), x.n_cells(), x.nnz()));
    for (i, j, v) in x.entries() {
        body.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
    }
    write_atomic(path, body.as_bytes())?;
    write_atomic(&features_sidecar(path), join_lines(x.feature_ids()).as_bytes())?;
    write_atomic(&cells_sidecar(path), join_lines(x.cell_ids()).as_bytes())
}

fn join_lines(ids: &[String]) -> String {
    let mut s = String::new();
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    s
}

/// Reads a dense table: header row of cell ids, first column feature ids.
/// A leading corner token in the header is accepted.
pub fn read_dense_tsv(path: impl AsRef<Path>) -> Result<CountMatrix> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "zero dimensions: empty file"))?;
    let header: Vec<&str> = header.split('\t').collect();

    let mut feature_ids = Vec::new();
    let mut triplets = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in lines {
        let tok: Vec<&str> = line.split('\t').collect();
        let n = tok.len() - 1;
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("ragged row: {n} values, expected {w}"),
                ))
            }
            _ => {}
        }
        let i = feature_ids.len();
        feature_ids.push(tok[0].trim().to_string());
        for (j, t) in tok[1..].iter().enumerate() {
            let t = t.trim();
            let v: u64 = t
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("non-integer token '{t}'")))?;
            if v > 0 {
                triplets.push((i, j, v));
            }
        }
    }
    let n = width.unwrap_or(0);
    if feature_ids.is_empty() || n == 0 {
        return Err(Error::parse(path, 1, "zero dimensions"));
    }
    let cell_ids: Vec<String> = if header.len() == n + 1 {
        header[1..].iter().map(|s| s.trim().to_string()).collect()
    } else if header.len() == n {
        header.iter().map(|s| s.trim().to_string()).collect()
    } else {
        return Err(Error::parse(
            path,
            1,
            format!("header has {} ids for {n} columns", header.len()),
        ));
    };
    CountMatrix::from_triplets(feature_ids.len(), n, triplets, Some(feature_ids), Some(cell_ids))
}

pub fn write_dense_tsv(path: impl AsRef<Path>, x: &CountMatrix) -> Result<()> {
    let mut s = String::from("feature");
    for c in x.cell_ids() {
        s.push('\t');
        s.push_str(c);
    }
    s.push('\n');
    for (i, row) in x.to_dense().iter().enumerate() {
        s.push_str(&x.feature_ids()[i]);
        for v in row {
            s.push('\t');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    write_atomic(path.as_ref(), s.as_bytes())
}

/// Writes to a temporary sibling and renames over the target, so a failure
/// never leaves a truncated file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
