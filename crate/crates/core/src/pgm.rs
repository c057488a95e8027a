//! Binary (P5) 8-bit PGM images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encodes a `[1, H, W]` (or `[H, W]`) tensor with values in `[0, 1]`,
/// scaling by 255 and rounding. Out-of-range values are clamped.
pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match t.shape()[..] {
        [1, h, w] | [h, w] => (h, w),
        _ => return Err(Error::Shape(format!("PGM needs [1,H,W], got {:?}", t.shape()))),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(t.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    fs::write(path, encode(t)?).map_err(|e| Error::io(path, e))
}

/// Decodes a P5 image into a `[1, H, W]` tensor scaled to `[0, 1]`.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PGM", "truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or(""));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::format("PGM", format!("unsupported magic {:?}", fields[0])));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::format("PGM", format!("bad {what} {s:?}")))
    };
    let w = parse(fields[1], "width")?;
    let h = parse(fields[2], "height")?;
    let maxval = parse(fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format("PGM", format!("only 8-bit images are supported (maxval {maxval})")));
    }
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::format("PGM", "truncated raster"))?;
    let scale = 1.0 / maxval as f64;
    Tensor::new(
        vec![1, h, w],
        raster.iter().map(|&b| (b as f64 * scale).min(1.0)).collect(),
    )
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { kind, reason } => Error::Format {
            kind,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}
