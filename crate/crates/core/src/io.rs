//! File formats: sample lists, metadata sidecars, image strips and edge tables.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edge::{EdgeResult, ImageStrip};
use crate::error::{Error, Result};
use crate::model::{G0Params, Sample};

/// Write `contents` to a sibling temporary file, then rename it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Path of the JSON sidecar that accompanies `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    /// One value per line.
    Text,
    /// CSV with a `value` header.
    Csv,
}

/// Parse a sample from text: one value per line, or CSV whose first row may be
/// a header. With a header, the `value` column is used (else the first column).
pub fn parse_sample(text: &str) -> Result<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut column = 0;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let cell = record.get(column).unwrap_or("");
        match cell.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 && values.is_empty() => {
                column = record.iter().position(|h| h.eq_ignore_ascii_case("value")).unwrap_or(0);
            }
            Err(_) => return Err(Error::Parse(format!("line {}: cannot parse {cell:?} as a number", i + 1))),
        }
    }
    Sample::new(values)
}

pub fn read_sample(path: &Path) -> Result<Sample> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let sample = parse_sample(&text)?;
    Ok(match label {
        Some(l) => sample.with_label(l),
        None => sample,
    })
}

pub fn format_sample(sample: &Sample, format: SampleFormat) -> String {
    let mut out = String::with_capacity(sample.len() * 20);
    if format == SampleFormat::Csv {
        out.push_str("value\n");
    }
    for v in sample.values() {
        out.push_str(&format!("{v:e}\n"));
    }
    out
}

/// Provenance of a simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub params: G0Params,
    pub seed: u64,
    pub n: usize,
}

pub fn write_sample(path: &Path, sample: &Sample, format: SampleFormat, meta: Option<&SampleMeta>) -> Result<()> {
    write_atomic(path, format_sample(sample, format).as_bytes())?;
    if let Some(meta) = meta {
        write_atomic(&sidecar_path(path), serde_json::to_string_pretty(meta)?.as_bytes())?;
    }
    Ok(())
}

/// Geometry sidecar for headerless raw rasters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub rows: usize,
    pub cols: usize,
    pub looks: f64,
}

/// Little-endian 32-bit float raster, row-major.
pub fn parse_raw_f32(bytes: &[u8], meta: &RasterMeta) -> Result<ImageStrip> {
    let expected = meta.rows * meta.cols * 4;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "raw raster has {} bytes, {}x{} f32 needs {expected}",
            bytes.len(),
            meta.rows,
            meta.cols
        )));
    }
    let pixels = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    ImageStrip::new(meta.rows, meta.cols, pixels, meta.looks)
}

pub fn encode_raw_f32(strip: &ImageStrip) -> Vec<u8> {
    strip.pixels().iter().flat_map(|&p| (p as f32).to_le_bytes()).collect()
}

/// Read a raw raster using the sidecar `<path>.json`.
pub fn read_raw_f32(path: &Path) -> Result<ImageStrip> {
    let meta_path = sidecar_path(path);
    let meta: RasterMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path).map_err(|e| Error::Io(format!("{}: {e}", meta_path.display())))?,
    )?;
    parse_raw_f32(&fs::read(path)?, &meta)
}

struct PgmHeader {
    binary: bool,
    cols: usize,
    rows: usize,
    maxval: u32,
}

/// Header tokens separated by whitespace, `#` comments running to end of line.
fn pgm_tokens<R: BufRead>(r: &mut R, count: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::with_capacity(count);
    let mut current = String::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    while tokens.len() < count {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        let c = byte[0] as char;
        if in_comment {
            in_comment = c != '\n' && c != '\r';
            continue;
        }
        if c == '#' {
            in_comment = true;
        } else if c.is_ascii_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else {
            current.push(c);
        }
    }
    Ok(tokens)
}

fn pgm_header<R: BufRead>(r: &mut R) -> Result<PgmHeader> {
    let t = pgm_tokens(r, 4)?;
    let binary = match t[0].as_str() {
        "P2" => false,
        "P5" => true,
        m => return Err(Error::Parse(format!("unsupported PGM magic {m:?}"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM header field {s:?}")));
    let (cols, rows, maxval) = (num(&t[1])?, num(&t[2])?, num(&t[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM maxval {maxval} out of range")));
    }
    Ok(PgmHeader { binary, cols, rows, maxval: maxval as u32 })
}

/// Plain (P2) or binary (P5, 8- or 16-bit big-endian) PGM.
pub fn parse_pgm(bytes: &[u8], looks: f64) -> Result<ImageStrip> {
    let mut r = BufReader::new(bytes);
    let h = pgm_header(&mut r)?;
    let count = h.rows * h.cols;
    let pixels: Vec<f64> = if h.binary {
        let width = if h.maxval < 256 { 1 } else { 2 };
        let mut raw = vec![0u8; count * width];
        r.read_exact(&mut raw).map_err(|_| Error::Parse("truncated PGM raster".into()))?;
        if width == 1 {
            raw.iter().map(|&b| b as f64).collect()
        } else {
            raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
        }
    } else {
        let mut rest = String::new();
        r.read_to_string(&mut rest).map_err(|e| Error::Parse(e.to_string()))?;
        let vals = rest
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_ascii_whitespace)
            .map(|s| s.parse::<u32>().map(f64::from).map_err(|_| Error::Parse(format!("bad PGM pixel {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() < count {
            return Err(Error::Parse(format!("PGM has {} pixels, header declares {count}", vals.len())));
        }
        vals.into_iter().take(count).collect()
    };
    if let Some(p) = pixels.iter().find(|&&p| p > h.maxval as f64) {
        return Err(Error::Parse(format!("PGM pixel {p} exceeds maxval {}", h.maxval)));
    }
    ImageStrip::new(h.rows, h.cols, pixels, looks)
}

pub fn read_pgm(path: &Path, looks: f64) -> Result<ImageStrip> {
    parse_pgm(&fs::read(path)?, looks)
}

/// Binary PGM with pixels rounded and clamped to `[0, maxval]`.
pub fn encode_pgm(strip: &ImageStrip, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", strip.cols(), strip.rows(), maxval).into_bytes();
    for &p in strip.pixels() {
        let v = p.round().clamp(0.0, maxval as f64) as u16;
        if maxval < 256 {
            out.push(v as u8);
        } else {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

/// `.pgm` files are read as PGM; anything else as raw f32 with a JSON sidecar.
pub fn read_image(path: &Path, looks: f64) -> Result<ImageStrip> {
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        read_pgm(path, looks)
    } else {
        read_raw_f32(path)
    }
}

/// `row,col_hat,min_p`; degenerate rows have an empty `col_hat`.
pub fn format_edges(result: &EdgeResult) -> String {
    let mut out = String::from("row,col_hat,min_p\n");
    for r in &result.rows {
        let col = r.col_hat.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{col},{}\n", r.row, r.min_p));
    }
    out
}

/// Long-format p-value profiles: `row,k,p_value,observed`.
pub fn format_profiles(result: &EdgeResult) -> String {
    let mut out = String::from("row,k,p_value,observed\n");
    for r in &result.rows {
        for s in &r.splits {
            let obs = s.observed.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{obs}\n", r.row, s.k, s.p_value));
        }
    }
    out
}
