//! Binary PGM (`P5`, 8-bit) label and depth grids.

use std::path::Path;

use super::{read_file, write_file, DataError, Result};

/// Per-pixel integer labels, row-major. Zero means invalid / unmasked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    data: Vec<u32>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize, data: Vec<u32>) -> Option<Self> {
        (width > 0 && height > 0 && data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u32) {
        self.data[y * self.width + x] = v;
    }
}

/// Per-pixel real values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FloatGrid {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(b: &[u8], name: &Path) -> Result<Header> {
    if b.len() < 2 || b[0] != b'P' {
        return Err(DataError::bytes(name, 0, "not a PGM file"));
    }
    match b[1] {
        b'5' => {}
        b'2' => return Err(DataError::bytes(name, 0, "ASCII PGM (P2) is not supported")),
        _ => return Err(DataError::bytes(name, 0, "not a binary PGM (P5) file")),
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match b.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < b.len() && b[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(DataError::bytes(name, pos as u64, "truncated header")),
            }
        }
        let start = pos;
        while pos < b.len() && b[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(DataError::bytes(name, pos as u64, "expected a number in header"));
        }
        let s = std::str::from_utf8(&b[start..pos]).expect("ascii digits");
        *field = s
            .parse()
            .map_err(|_| DataError::bytes(name, start as u64, "header number out of range"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(DataError::bytes(name, 2, format!("invalid dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(DataError::bytes(
            name,
            2,
            format!("unsupported maxval {maxval} (8-bit only)"),
        ));
    }
    match b.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(DataError::bytes(name, pos as u64, "missing whitespace after header")),
    }
    Ok(Header {
        width,
        height,
        data_start: pos,
    })
}

fn decode_payload(bytes: &[u8], name: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let h = parse_header(bytes, name)?;
    let n = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| DataError::bytes(name, 2, "dimensions overflow"))?;
    let payload = &bytes[h.data_start..];
    if payload.len() < n {
        return Err(DataError::bytes(
            name,
            bytes.len() as u64,
            format!("truncated payload: {} of {n} bytes", payload.len()),
        ));
    }
    if payload.len() > n {
        return Err(DataError::bytes(
            name,
            (h.data_start + n) as u64,
            format!(
                "dimension mismatch: {}x{} declared, {} payload bytes",
                h.width,
                h.height,
                payload.len()
            ),
        ));
    }
    Ok((h.width, h.height, payload.to_vec()))
}

pub fn decode_mask(bytes: &[u8], name: &Path) -> Result<LabelGrid> {
    let (w, h, data) = decode_payload(bytes, name)?;
    Ok(LabelGrid {
        width: w,
        height: h,
        data: data.into_iter().map(u32::from).collect(),
    })
}

pub fn read_mask(path: &Path) -> Result<LabelGrid> {
    decode_mask(&read_file(path)?, path)
}

/// Depth stored as 8-bit PGM; values are taken as-is.
pub fn read_depth(path: &Path) -> Result<FloatGrid> {
    let (width, height, data) = decode_payload(&read_file(path)?, path)?;
    Ok(FloatGrid {
        width,
        height,
        data: data.into_iter().map(f64::from).collect(),
    })
}

pub fn encode_mask(g: &LabelGrid) -> Option<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
    for &v in &g.data {
        out.push(u8::try_from(v).ok()?);
    }
    Some(out)
}

pub fn write_mask(path: &Path, g: &LabelGrid) -> Result<()> {
    let bytes = encode_mask(g).ok_or_else(|| DataError::invalid(path, "label exceeds 255"))?;
    write_file(path, &bytes)
}
