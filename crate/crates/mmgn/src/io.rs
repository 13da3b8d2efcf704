//! On-disk formats for solver artifacts.
//!
//! * **Factors** — flat binary: 8-byte magic `MMGNFAC1`, then `m`, `n`, `r`
//!   as little-endian `u64`, then `U` (`m x r`) column-major and `V`
//!   (`n x r`) column-major as little-endian `f64`.
//! * **Truth matrix** — flat binary: magic `MMGNTRU1`, then `m`, `n` as
//!   little-endian `u64`, then the dense matrix column-major.
//! * **Observations** — CSV with header `i,j,y`; indices are 1-based and
//!   `y` is `+1` or `-1`. The matrix shape is inferred from the largest
//!   indices present unless explicit dimensions are supplied.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::obs::ObservationSet;
use crate::objective::FactorPair;

const FACTORS_MAGIC: &[u8; 8] = b"MMGNFAC1";
const TRUTH_MAGIC: &[u8; 8] = b"MMGNTRU1";

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for &x in values {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

fn take_u64(bytes: &[u8], offset: &mut usize, what: &str) -> Result<u64> {
    let end = *offset + 8;
    if end > bytes.len() {
        return Err(Error::parse(format!("file truncated while reading {what}")));
    }
    let v = u64::from_le_bytes(bytes[*offset..end].try_into().unwrap());
    *offset = end;
    Ok(v)
}

fn take_f64s(bytes: &[u8], offset: &mut usize, count: usize, what: &str) -> Result<Vec<f64>> {
    let end = *offset + 8 * count;
    if end > bytes.len() {
        return Err(Error::parse(format!("file truncated while reading {what}")));
    }
    let out = bytes[*offset..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *offset = end;
    Ok(out)
}

fn check_magic(bytes: &[u8], magic: &[u8; 8], what: &str) -> Result<()> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(Error::parse(format!("not a {what} file (bad magic)")));
    }
    Ok(())
}

fn check_consumed(bytes: &[u8], offset: usize, what: &str) -> Result<()> {
    if offset != bytes.len() {
        return Err(Error::parse(format!(
            "{what} file has {} unexpected trailing bytes",
            bytes.len() - offset
        )));
    }
    Ok(())
}

/// Write a factor pair in the flat binary format.
pub fn write_factors(path: &Path, factors: &FactorPair) -> Result<()> {
    let payload = (factors.m() + factors.n()) * factors.rank();
    let mut buf = Vec::with_capacity(32 + 8 * payload);
    buf.extend_from_slice(FACTORS_MAGIC);
    for dim in [factors.m(), factors.n(), factors.rank()] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    push_f64s(&mut buf, factors.u().as_slice());
    push_f64s(&mut buf, factors.v().as_slice());
    fs::write(path, buf)?;
    Ok(())
}

/// Read a factor pair written by [`write_factors`].
pub fn read_factors(path: &Path) -> Result<FactorPair> {
    let bytes = fs::read(path)?;
    check_magic(&bytes, FACTORS_MAGIC, "factors")?;
    let mut offset = 8;
    let m = take_u64(&bytes, &mut offset, "row count")? as usize;
    let n = take_u64(&bytes, &mut offset, "column count")? as usize;
    let r = take_u64(&bytes, &mut offset, "rank")? as usize;
    let mr = m
        .checked_mul(r)
        .ok_or_else(|| Error::parse("factor dimensions overflow"))?;
    let nr = n
        .checked_mul(r)
        .ok_or_else(|| Error::parse("factor dimensions overflow"))?;
    let u = take_f64s(&bytes, &mut offset, mr, "left factor")?;
    let v = take_f64s(&bytes, &mut offset, nr, "right factor")?;
    check_consumed(&bytes, offset, "factors")?;
    FactorPair::new(
        DMatrix::from_column_slice(m, r, &u),
        DMatrix::from_column_slice(n, r, &v),
    )
}

/// Write a dense parameter matrix in the flat binary format.
pub fn write_truth(path: &Path, theta: &DMatrix<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * theta.len());
    buf.extend_from_slice(TRUTH_MAGIC);
    for dim in [theta.nrows(), theta.ncols()] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    push_f64s(&mut buf, theta.as_slice());
    fs::write(path, buf)?;
    Ok(())
}

/// Read a dense parameter matrix written by [`write_truth`].
pub fn read_truth(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    check_magic(&bytes, TRUTH_MAGIC, "truth")?;
    let mut offset = 8;
    let m = take_u64(&bytes, &mut offset, "row count")? as usize;
    let n = take_u64(&bytes, &mut offset, "column count")? as usize;
    if m == 0 || n == 0 {
        return Err(Error::parse(format!("truth file declares empty shape {m} x {n}")));
    }
    let count = m
        .checked_mul(n)
        .ok_or_else(|| Error::parse("truth dimensions overflow"))?;
    let data = take_f64s(&bytes, &mut offset, count, "matrix entries")?;
    check_consumed(&bytes, offset, "truth")?;
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::parse("truth file contains non-finite entries"));
    }
    Ok(DMatrix::from_column_slice(m, n, &data))
}

/// Classify a csv-crate error: operating-system failures stay I/O errors
/// (with the path attached), everything else is a parse problem.
fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(std::io::Error::new(
                io.kind(),
                format!("{}: {io}", path.display()),
            )),
            _ => unreachable!("is_io_error guarantees an Io kind"),
        }
    } else {
        Error::parse(format!("{}: {e}", path.display()))
    }
}

/// Write observations as CSV with header `i,j,y` and 1-based indices.
pub fn write_observations_csv(path: &Path, obs: &ObservationSet) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer.write_record(["i", "j", "y"]).map_err(|e| csv_error(path, e))?;
    for (i, j, y) in obs.iter() {
        writer
            .write_record([
                (u64::from(i) + 1).to_string(),
                (u64::from(j) + 1).to_string(),
                (y as i64).to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush()?;
    Ok(())
}

/// Read observations written by [`write_observations_csv`].
///
/// The matrix shape defaults to the largest row/column index seen; `rows` and
/// `cols` may enlarge it (they must not be smaller than any index present).
pub fn read_observations_csv(
    path: &Path,
    rows: Option<usize>,
    cols: Option<usize>,
) -> Result<ObservationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut triplets: Vec<(u32, u32, i8)> = Vec::new();
    let mut max_i = 0u64;
    let mut max_j = 0u64;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::parse(format!("line {line}: {e}")))?;
        if record.len() != 3 {
            return Err(Error::parse(format!(
                "line {line}: expected 3 fields i,j,y, got {}",
                record.len()
            )));
        }
        let i: u64 = record[0]
            .parse()
            .map_err(|e| Error::parse(format!("line {line}: bad row index {:?}: {e}", &record[0])))?;
        let j: u64 = record[1]
            .parse()
            .map_err(|e| Error::parse(format!("line {line}: bad column index {:?}: {e}", &record[1])))?;
        let y: i64 = record[2]
            .parse()
            .map_err(|e| Error::parse(format!("line {line}: bad label {:?}: {e}", &record[2])))?;
        if i == 0 || j == 0 {
            return Err(Error::parse(format!("line {line}: indices are 1-based, got ({i}, {j})")));
        }
        if i > u64::from(u32::MAX) || j > u64::from(u32::MAX) {
            return Err(Error::parse(format!("line {line}: index ({i}, {j}) too large")));
        }
        if y != 1 && y != -1 {
            return Err(Error::parse(format!("line {line}: label must be +1 or -1, got {y}")));
        }
        max_i = max_i.max(i);
        max_j = max_j.max(j);
        triplets.push(((i - 1) as u32, (j - 1) as u32, y as i8));
    }
    if triplets.is_empty() {
        return Err(Error::parse(format!("{} contains no observations", path.display())));
    }
    let m = rows.unwrap_or(max_i as usize);
    let n = cols.unwrap_or(max_j as usize);
    if m < max_i as usize || n < max_j as usize {
        return Err(Error::dimension(format!(
            "declared shape {m} x {n} is smaller than the largest observed index ({max_i}, {max_j})"
        )));
    }
    ObservationSet::from_triplets(m, n, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn tmp(name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    #[test]
    fn factors_round_trip_bitwise() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let u = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>() - 0.5);
        let v = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>() - 0.5);
        let pair = FactorPair::new(u, v).unwrap();
        let (_dir, path) = tmp("f.bin");
        write_factors(&path, &pair).unwrap();
        let back = read_factors(&path).unwrap();
        assert_eq!(pair.u(), back.u());
        assert_eq!(pair.v(), back.v());
    }

    #[test]
    fn truth_round_trip_bitwise() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let theta = DMatrix::from_fn(6, 9, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let (_dir, path) = tmp("t.bin");
        write_truth(&path, &theta).unwrap();
        assert_eq!(read_truth(&path).unwrap(), theta);
    }

    #[test]
    fn binary_readers_reject_corruption() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let theta = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
        let (_dir, path) = tmp("c.bin");
        write_truth(&path, &theta).unwrap();
        let good = fs::read(&path).unwrap();
        // Wrong magic.
        let mut bad = good.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(read_truth(&path).is_err());
        // Truncated payload.
        fs::write(&path, &good[..good.len() - 4]).unwrap();
        assert!(read_truth(&path).is_err());
        // Trailing bytes.
        let mut long = good.clone();
        long.extend_from_slice(&[0u8; 8]);
        fs::write(&path, &long).unwrap();
        assert!(read_truth(&path).is_err());
        // Non-finite entry.
        let mut nan = good.clone();
        let tail = nan.len() - 8;
        nan[tail..].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&path, &nan).unwrap();
        assert!(read_truth(&path).is_err());
        // Factors magic on a truth reader and vice versa.
        assert!(read_factors(&path).is_err());
    }

    #[test]
    fn observations_round_trip_and_infer_shape() {
        let obs = ObservationSet::from_triplets(
            8,
            6,
            &[(0, 0, 1), (7, 5, -1), (3, 2, 1), (2, 2, -1)],
        )
        .unwrap();
        let (_dir, path) = tmp("o.csv");
        write_observations_csv(&path, &obs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "i,j,y");
        // 1-based indices on disk, column-major order.
        assert_eq!(lines.next().unwrap(), "1,1,1");
        // Shape inferred from the largest indices (8 x 6 here).
        let back = read_observations_csv(&path, None, None).unwrap();
        assert_eq!((back.m(), back.n()), (8, 6));
        assert_eq!(back.to_triplets(), obs.to_triplets());
        // Explicit enlargement is allowed; shrinking is not.
        let bigger = read_observations_csv(&path, Some(10), Some(9)).unwrap();
        assert_eq!((bigger.m(), bigger.n()), (10, 9));
        assert!(read_observations_csv(&path, Some(7), None).is_err());
    }

    #[test]
    fn observation_reader_rejects_malformed_rows() {
        let (_dir, path) = tmp("bad.csv");
        fs::write(&path, "i,j,y\n0,1,1\n").unwrap();
        let err = read_observations_csv(&path, None, None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        fs::write(&path, "i,j,y\n1,1,2\n").unwrap();
        assert!(read_observations_csv(&path, None, None).is_err());
        fs::write(&path, "i,j,y\n1,x,1\n").unwrap();
        assert!(read_observations_csv(&path, None, None).is_err());
        fs::write(&path, "i,j,y\n").unwrap();
        assert!(read_observations_csv(&path, None, None).is_err());
        fs::write(&path, "i,j,y\n1,1\n").unwrap();
        assert!(read_observations_csv(&path, None, None).is_err());
    }
}
