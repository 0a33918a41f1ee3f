//! Plain-text model files.
//!
//! A model directory holds
//!
//! * `mass.txt`: one diagonal entry per line;
//! * `stiffness.txt`: header `n nnz`, then `i j value` lines;
//! * `damper.txt`, `input.txt`, `output.txt`: header `rows cols nnz`, then
//!   `i j value` lines;
//! * `params.toml`: `alpha_c`, `gain_map` and the per-gain `bounds`.
//!
//! Indices in the files are 1-based. Values are written with 17 significant
//! digits, which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GainBounds, SecondOrderSystem, SparseMatrix};
use crate::error::{Error, Result};

const MASS_FILE: &str = "mass.txt";
const STIFFNESS_FILE: &str = "stiffness.txt";
const DAMPER_FILE: &str = "damper.txt";
const INPUT_FILE: &str = "input.txt";
const OUTPUT_FILE: &str = "output.txt";
const PARAMS_FILE: &str = "params.toml";

#[derive(Debug, Serialize, Deserialize)]
struct Params {
    alpha_c: f64,
    gain_map: Vec<usize>,
    bounds: Vec<GainBounds>,
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_coordinates(header: &str, entries: impl Iterator<Item = (usize, usize, f64)>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    for (i, j, v) in entries {
        let _ = writeln!(out, "{} {} {}", i + 1, j + 1, fmt_value(v));
    }
    out
}

fn dense_entries(a: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut entries = Vec::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if a[(i, j)] != 0.0 {
                entries.push((i, j, a[(i, j)]));
            }
        }
    }
    entries
}

/// Write `sys` into `dir`, creating the directory if needed.
pub fn write_model(sys: &SecondOrderSystem, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut mass = String::new();
    for m in sys.mass().iter() {
        let _ = writeln!(mass, "{}", fmt_value(*m));
    }
    fs::write(dir.join(MASS_FILE), mass)?;

    let k = sys.stiffness();
    fs::write(
        dir.join(STIFFNESS_FILE),
        write_coordinates(
            &format!("{} {}", k.rows(), k.nnz()),
            k.entries().iter().copied(),
        ),
    )?;
    let b = sys.damper_geometry();
    fs::write(
        dir.join(DAMPER_FILE),
        write_coordinates(
            &format!("{} {} {}", b.rows(), b.cols(), b.nnz()),
            b.entries().iter().copied(),
        ),
    )?;
    for (name, a) in [
        (INPUT_FILE, sys.input_map()),
        (OUTPUT_FILE, sys.output_map()),
    ] {
        let entries = dense_entries(a);
        fs::write(
            dir.join(name),
            write_coordinates(
                &format!("{} {} {}", a.nrows(), a.ncols(), entries.len()),
                entries.into_iter(),
            ),
        )?;
    }

    let params = Params {
        alpha_c: sys.alpha_c(),
        gain_map: sys.gain_map().to_vec(),
        bounds: sys.gain_bounds().to_vec(),
    };
    let text = toml::to_string(&params)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize model parameters: {e}")))?;
    fs::write(dir.join(PARAMS_FILE), text)?;
    Ok(())
}

/// Read a model directory written by [`write_model`] (or by hand).
pub fn read_model(dir: &Path) -> Result<SecondOrderSystem> {
    let mass_path = dir.join(MASS_FILE);
    let mass_text = fs::read_to_string(&mass_path)?;
    let mut mass = Vec::new();
    for (lineno, line) in mass_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        mass.push(parse_f64(line, &mass_path, lineno)?);
    }
    let n = mass.len();

    let stiffness = read_coordinates(&dir.join(STIFFNESS_FILE), true)?;
    let damper = read_coordinates(&dir.join(DAMPER_FILE), false)?;
    let input = read_coordinates(&dir.join(INPUT_FILE), false)?.to_dense();
    let output = read_coordinates(&dir.join(OUTPUT_FILE), false)?.to_dense();

    let params_path = dir.join(PARAMS_FILE);
    let params: Params =
        toml::from_str(&fs::read_to_string(&params_path)?).map_err(|e| Error::Parse {
            path: params_path.clone(),
            message: e.to_string(),
        })?;

    SecondOrderSystem::new(
        DVector::from_vec(mass),
        stiffness,
        params.alpha_c,
        damper,
        params.gain_map,
        params.bounds,
        input,
        output,
    )
    .map_err(|e| match e {
        Error::InvalidDimension(m) => {
            Error::InvalidDimension(format!("{m} (n = {n} from {MASS_FILE})"))
        }
        other => other,
    })
}

fn parse_f64(token: &str, path: &Path, lineno: usize) -> Result<f64> {
    token.parse::<f64>().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {}: {e} ({token:?})", lineno + 1),
    })
}

fn parse_usize(token: &str, path: &Path, lineno: usize) -> Result<usize> {
    token.parse::<usize>().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {}: {e} ({token:?})", lineno + 1),
    })
}

fn read_coordinates(path: &Path, square: bool) -> Result<SparseMatrix> {
    let text = fs::read_to_string(path)?;
    let parse_err = |lineno: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {}: {message}", lineno + 1),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        message: "missing header".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols, nnz) = match (square, fields.as_slice()) {
        (true, [n, nnz]) => {
            let n = parse_usize(n, path, hline)?;
            (n, n, parse_usize(nnz, path, hline)?)
        }
        (false, [r, c, nnz]) => (
            parse_usize(r, path, hline)?,
            parse_usize(c, path, hline)?,
            parse_usize(nnz, path, hline)?,
        ),
        _ => {
            let expected = if square { "n nnz" } else { "rows cols nnz" };
            return Err(parse_err(hline, format!("expected header `{expected}`")));
        }
    };
    let mut triplets = Vec::with_capacity(nnz);
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [i, j, v] = fields.as_slice() else {
            return Err(parse_err(lineno, "expected `i j value`".into()));
        };
        let i = parse_usize(i, path, lineno)?;
        let j = parse_usize(j, path, lineno)?;
        let v = parse_f64(v, path, lineno)?;
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(parse_err(
                lineno,
                format!("index ({i}, {j}) outside 1..={rows} x 1..={cols}"),
            ));
        }
        triplets.push((i - 1, j - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("header announces {nnz} entries, found {}", triplets.len()),
        });
    }
    Ok(SparseMatrix::from_triplets(rows, cols, triplets))
}
