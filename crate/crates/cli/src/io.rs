//! File formats: CSV emission with full-precision decimal text, binary PGM
//! (P5) images, and the block-average ingestion path for user images.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};

use recover_core::signals::Image;
use recover_core::solver::IterationRecord;

/// Shortest decimal text that parses back to the identical f64.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn writer(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Per-point recovery table for 1D runs. Header is fixed:
/// `s,truth,map,abs_err`.
pub fn write_signal_csv(
    path: &Path,
    s: &[f64],
    truth: &DVector<f64>,
    map: &DVector<f64>,
) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "s,truth,map,abs_err")?;
    for j in 0..truth.len() {
        let err = (map[j] - truth[j]).abs();
        writeln!(w, "{},{},{},{}", fmt(s[j]), fmt(truth[j]), fmt(map[j]), fmt(err))?;
    }
    Ok(())
}

/// Per-pixel recovery table for 2D runs: `row,col,truth,map,abs_err`,
/// column-major pixel order.
pub fn write_image_csv(
    path: &Path,
    n: usize,
    truth: &DVector<f64>,
    map: &DVector<f64>,
) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "row,col,truth,map,abs_err")?;
    for idx in 0..truth.len() {
        let (row, col) = (idx % n, idx / n);
        let err = (map[idx] - truth[idx]).abs();
        writeln!(w, "{row},{col},{},{},{}", fmt(truth[idx]), fmt(map[idx]), fmt(err))?;
    }
    Ok(())
}

/// Credible band table: `s,mean,lower,upper`.
pub fn write_band_csv(
    path: &Path,
    s: &[f64],
    mean: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "s,mean,lower,upper")?;
    for j in 0..mean.len() {
        writeln!(w, "{},{},{},{}", fmt(s[j]), fmt(mean[j]), fmt(lower[j]), fmt(upper[j]))?;
    }
    Ok(())
}

/// Posterior sample table: first column the component index, one column per
/// draw.
pub fn write_samples_csv(path: &Path, samples: &DMatrix<f64>) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    let header: Vec<String> = (0..samples.ncols()).map(|c| format!("sample_{c}")).collect();
    writeln!(w, "component,{}", header.join(","))?;
    for j in 0..samples.nrows() {
        let row: Vec<String> = samples.row(j).iter().map(|&v| fmt(v)).collect();
        writeln!(w, "{j},{}", row.join(","))?;
    }
    Ok(())
}

/// Iteration trace table: `iter,objective,x_change`.
pub fn write_trace_csv(path: &Path, trace: &[IterationRecord]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "iter,objective,x_change")?;
    for r in trace {
        writeln!(w, "{},{},{}", r.iter, fmt(r.objective), fmt(r.x_change))?;
    }
    Ok(())
}

/// Raw dense matrix dump, row-major, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| fmt(v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Line-oriented `key=value` summary.
pub fn write_summary(path: &Path, entries: &[(String, String)]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}

/// Writes an image as binary 8-bit PGM, min-max normalized; a constant
/// image maps to black.
pub fn write_pgm(path: &Path, image: &Image) -> anyhow::Result<()> {
    let n = image.n();
    let v = image.values();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in v.iter() {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = writer(path)?;
    write!(w, "P5\n{n} {n}\n255\n")?;
    let mut bytes = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let scaled = (v[(row, col)] - lo) / span * 255.0;
            bytes.push(scaled.round().clamp(0.0, 255.0) as u8);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn parse_pgm_tokens(data: &[u8]) -> anyhow::Result<(usize, usize, usize, usize)> {
    // Returns (width, height, maxval, data_offset).
    if data.len() < 2 || &data[0..2] != b"P5" {
        bail!("not a binary PGM (P5) file");
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            bail!("malformed PGM header");
        }
        *field = std::str::from_utf8(&data[start..pos])?.parse()?;
    }
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        bail!("malformed PGM header");
    }
    pos += 1;
    Ok((fields[0], fields[1], fields[2], pos))
}

/// Reads a binary PGM into a matrix of `[0, 1]` values (rows x cols).
pub fn load_pgm(path: &Path) -> anyhow::Result<DMatrix<f64>> {
    let mut data = Vec::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut data)?;
    let (width, height, maxval, offset) = parse_pgm_tokens(&data)?;
    if maxval == 0 || maxval > 255 {
        bail!("unsupported PGM maxval {maxval}");
    }
    if data.len() < offset + width * height {
        bail!("PGM data truncated: expected {} pixels", width * height);
    }
    let scale = 1.0 / maxval as f64;
    Ok(DMatrix::from_fn(height, width, |r, c| data[offset + r * width + c] as f64 * scale))
}

/// Area-weighted block average from `in_n` to `out_n` cells along one axis;
/// exact for non-integer ratios.
fn resample_weights(in_n: usize, out_n: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = in_n as f64 / out_n as f64;
    (0..out_n)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let mut weights = Vec::new();
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(in_n);
            for i in first..last {
                let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    weights.push((i, overlap / scale));
                }
            }
            weights
        })
        .collect()
}

/// Block-average downscale of a square matrix to `out_n x out_n`.
pub fn block_average(input: &DMatrix<f64>, out_n: usize) -> anyhow::Result<DMatrix<f64>> {
    let in_n = input.nrows();
    if input.ncols() != in_n {
        bail!("block_average expects a square image");
    }
    if out_n == 0 || out_n > in_n {
        bail!("cannot rescale {in_n} pixels to {out_n}");
    }
    let weights = resample_weights(in_n, out_n);
    let mut rows = DMatrix::<f64>::zeros(out_n, in_n);
    for (o, ws) in weights.iter().enumerate() {
        for &(i, w) in ws {
            for c in 0..in_n {
                rows[(o, c)] += w * input[(i, c)];
            }
        }
    }
    let mut out = DMatrix::<f64>::zeros(out_n, out_n);
    for (o, ws) in weights.iter().enumerate() {
        for &(i, w) in ws {
            for r in 0..out_n {
                out[(r, o)] += w * rows[(r, i)];
            }
        }
    }
    Ok(out)
}

/// Loads a user-supplied grayscale image, optionally center-cropping a
/// non-square input, and block-averages it to `n x n`.
pub fn load_image(path: &Path, n: usize, crop: bool) -> anyhow::Result<Image> {
    let mut m = load_pgm(path)?;
    if m.nrows() != m.ncols() {
        if !crop {
            bail!(
                "image {} is {}x{}, not square; set \"crop\": true to center-crop",
                path.display(),
                m.nrows(),
                m.ncols()
            );
        }
        let side = m.nrows().min(m.ncols());
        let r0 = (m.nrows() - side) / 2;
        let c0 = (m.ncols() - side) / 2;
        m = m.view((r0, c0), (side, side)).into_owned();
    }
    let rescaled = block_average(&m, n)?;
    Ok(Image::new(rescaled)?)
}
