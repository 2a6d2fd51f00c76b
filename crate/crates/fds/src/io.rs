//! Binary file formats: Middlebury `.flo`, PFM, binary PPM and checkpoints.

use std::fs;
use std::path::Path;

use fds_core::gaussian::{GaussianPoint, PARAM_COUNT};
use fds_core::{flow::FlowField, DepthMap, GaussianCloud, Grid, RgbImage};

use crate::error::{FdsError, Result};

pub const FLO_MAGIC: f32 = 202021.25;
/// Stored for invalid flow vectors; anything above 1e9 reads back as invalid.
pub const FLO_UNKNOWN: f32 = 1e10;
pub const CHECKPOINT_MAGIC: &[u8; 6] = b"FDSGC\0";
pub const CHECKPOINT_VERSION: u16 = 1;
const CHECKPOINT_HEADER: usize = 16;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FdsError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| FdsError::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| FdsError::io(path, e))
}

/// Little-endian cursor over a byte buffer.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let Some(end) = end else {
            return Err(FdsError::format(self.path, "truncated file"));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.shape();
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (v, ok) in flow.vectors.as_slice().iter().zip(flow.valid.as_slice()) {
        let pair = if *ok {
            [v[0] as f32, v[1] as f32]
        } else {
            [FLO_UNKNOWN; 2]
        };
        out.extend_from_slice(&pair[0].to_le_bytes());
        out.extend_from_slice(&pair[1].to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.f32()? != FLO_MAGIC {
        return Err(FdsError::format(path, "bad .flo magic"));
    }
    let (w, h) = (r.i32()?, r.i32()?);
    if w <= 0 || h <= 0 {
        return Err(FdsError::format(path, "non-positive .flo dimensions"));
    }
    let (w, h) = (w as usize, h as usize);
    let mut vectors = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let (u, v) = (r.f32()?, r.f32()?);
        let ok = u.abs() <= 1e9 && v.abs() <= 1e9 && u.is_finite() && v.is_finite();
        vectors.push(if ok { [u as f64, v as f64] } else { [0.0; 2] });
        valid.push(ok);
    }
    if r.pos != bytes.len() {
        return Err(FdsError::format(path, "trailing bytes after .flo payload"));
    }
    Ok(FlowField {
        vectors: Grid::from_vec(w, h, vectors)?,
        valid: Grid::from_vec(w, h, valid)?,
    })
}

pub fn write_flo(flow: &FlowField, path: &Path) -> Result<()> {
    write(path, &encode_flo(flow))
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&read(path)?, path)
}

/// Splits a netpbm-style header of `fields` whitespace-separated tokens
/// followed by exactly one whitespace byte. Returns tokens and payload offset.
fn pnm_header<'a>(bytes: &'a [u8], fields: usize, path: &Path) -> Result<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(fields);
    let mut i = 0;
    while tokens.len() < fields {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(FdsError::format(path, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i])
            .map_err(|_| FdsError::format(path, "non-ASCII header"))?;
        tokens.push(tok);
    }
    if i >= bytes.len() {
        return Err(FdsError::format(path, "truncated header"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, path: &Path) -> Result<usize> {
    tok.parse::<usize>()
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| FdsError::format(path, format!("bad dimension {tok:?}")))
}

/// Greyscale PFM, bottom-to-top rows, little-endian (negative scale).
pub fn encode_pfm(depth: &Grid<f64>) -> Vec<u8> {
    let (w, h) = depth.shape();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(*depth.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let (tok, start) = pnm_header(bytes, 4, path)?;
    if tok[0] != "Pf" {
        return Err(FdsError::format(
            path,
            "only greyscale PFM (Pf) is supported",
        ));
    }
    let (w, h) = (parse_dim(tok[1], path)?, parse_dim(tok[2], path)?);
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| FdsError::format(path, "bad PFM scale"))?;
    if scale >= 0.0 {
        return Err(FdsError::format(path, "big-endian PFM is not supported"));
    }
    let payload = &bytes[start..];
    if payload.len() != 4 * w * h {
        return Err(FdsError::format(
            path,
            "PFM payload size does not match header",
        ));
    }
    let mut data = vec![0.0; w * h];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let (x, row) = (k % w, k / w);
        data[(h - 1 - row) * w + x] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok(Grid::from_vec(w, h, data)?)
}

pub fn write_pfm(depth: &Grid<f64>, path: &Path) -> Result<()> {
    write(path, &encode_pfm(depth))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    decode_pfm(&read(path)?, path)
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let (w, h) = image.shape();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for p in image.as_slice() {
        out.extend(p.map(quantize));
    }
    out
}

pub fn encode_ppm_bytes(width: usize, height: usize, rgb: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for p in rgb {
        out.extend_from_slice(p);
    }
    out
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let (tok, start) = pnm_header(bytes, 4, path)?;
    if tok[0] != "P6" {
        return Err(FdsError::format(path, "only binary PPM (P6) is supported"));
    }
    let (w, h) = (parse_dim(tok[1], path)?, parse_dim(tok[2], path)?);
    if tok[3] != "255" {
        return Err(FdsError::format(path, "PPM maxval must be 255"));
    }
    let payload = &bytes[start..];
    if payload.len() != 3 * w * h {
        return Err(FdsError::format(
            path,
            "PPM payload size does not match header",
        ));
    }
    let data = payload
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]].map(|v| v as f64 / 255.0))
        .collect();
    Ok(Grid::from_vec(w, h, data)?)
}

pub fn write_ppm(image: &RgbImage, path: &Path) -> Result<()> {
    write(path, &encode_ppm(image))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&read(path)?, path)
}

pub fn encode_checkpoint(cloud: &GaussianCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHECKPOINT_HEADER + 4 * PARAM_COUNT * cloud.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in cloud.points() {
        for v in p.to_params() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<GaussianCloud> {
    if bytes.len() < CHECKPOINT_HEADER || &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(FdsError::format(path, "not a checkpoint (bad magic)"));
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != CHECKPOINT_VERSION {
        return Err(FdsError::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let record = 4 * PARAM_COUNT;
    let expected = (count as usize)
        .checked_mul(record)
        .and_then(|n| n.checked_add(CHECKPOINT_HEADER));
    if expected != Some(bytes.len()) {
        return Err(FdsError::format(
            path,
            "checkpoint size does not match its count",
        ));
    }
    let points = bytes[CHECKPOINT_HEADER..]
        .chunks_exact(record)
        .map(|rec| {
            let mut p = [0.0; PARAM_COUNT];
            for (v, c) in p.iter_mut().zip(rec.chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            }
            GaussianPoint::from_params(&p)
        })
        .collect();
    Ok(GaussianCloud::new(points))
}

pub fn write_checkpoint(cloud: &GaussianCloud, path: &Path) -> Result<()> {
    write(path, &encode_checkpoint(cloud))
}

pub fn read_checkpoint(path: &Path) -> Result<GaussianCloud> {
    decode_checkpoint(&read(path)?, path)
}

/// Rounds every parameter through `f32`, as a checkpoint would.
pub fn quantize_cloud(cloud: &GaussianCloud) -> GaussianCloud {
    GaussianCloud::new(
        cloud
            .points()
            .iter()
            .map(|p| GaussianPoint::from_params(&p.to_params().map(|v| v as f32 as f64)))
            .collect(),
    )
}

/// Colour-maps `values / vmax` with turbo. Non-finite values map to black.
pub fn turbo_image(values: &Grid<f64>, vmax: f64) -> Vec<[u8; 3]> {
    values
        .as_slice()
        .iter()
        .map(|v| {
            if !v.is_finite() {
                return [0, 0, 0];
            }
            let t = if vmax > 0.0 {
                (v / vmax).clamp(0.0, 1.0)
            } else {
                0.0
            };
            TURBO[(t * 255.0).round() as usize]
        })
        .collect()
}

pub fn write_turbo_ppm(values: &Grid<f64>, vmax: f64, path: &Path) -> Result<()> {
    let (w, h) = values.shape();
    write(path, &encode_ppm_bytes(w, h, &turbo_image(values, vmax)))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text.as_bytes())
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| FdsError::io(path, e))
}

/// Turbo colormap sampled at 256 evenly spaced points and rounded to 8 bits.
#[rustfmt::skip]
pub(crate) const TURBO: [[u8; 3]; 256] = [
    [48, 18, 59], [50, 21, 67], [51, 24, 74], [52, 27, 81], [53, 30, 88], [54, 33, 95],
    [55, 36, 102], [56, 39, 109], [57, 42, 115], [58, 45, 121], [59, 47, 128], [60, 50, 134],
    [61, 53, 139], [62, 56, 145], [63, 59, 151], [63, 62, 156], [64, 64, 162], [65, 67, 167],
    [65, 70, 172], [66, 73, 177], [66, 75, 181], [67, 78, 186], [68, 81, 191], [68, 84, 195],
    [68, 86, 199], [69, 89, 203], [69, 92, 207], [69, 94, 211], [70, 97, 214], [70, 100, 218],
    [70, 102, 221], [70, 105, 224], [70, 107, 227], [71, 110, 230], [71, 113, 233], [71, 115, 235],
    [71, 118, 238], [71, 120, 240], [71, 123, 242], [70, 125, 244], [70, 128, 246], [70, 130, 248],
    [70, 133, 250], [70, 135, 251], [69, 138, 252], [69, 140, 253], [68, 143, 254], [67, 145, 254],
    [66, 148, 255], [65, 150, 255], [64, 153, 255], [62, 155, 254], [61, 158, 254], [59, 160, 253],
    [58, 163, 252], [56, 165, 251], [55, 168, 250], [53, 171, 248], [51, 173, 247], [49, 175, 245],
    [47, 178, 244], [46, 180, 242], [44, 183, 240], [42, 185, 238], [40, 188, 235], [39, 190, 233],
    [37, 192, 231], [35, 195, 228], [34, 197, 226], [32, 199, 223], [31, 201, 221], [30, 203, 218],
    [28, 205, 216], [27, 208, 213], [26, 210, 210], [26, 212, 208], [25, 213, 205], [24, 215, 202],
    [24, 217, 200], [24, 219, 197], [24, 221, 194], [24, 222, 192], [24, 224, 189], [25, 226, 187],
    [25, 227, 185], [26, 228, 182], [28, 230, 180], [29, 231, 178], [31, 233, 175], [32, 234, 172],
    [34, 235, 170], [37, 236, 167], [39, 238, 164], [42, 239, 161], [44, 240, 158], [47, 241, 155],
    [50, 242, 152], [53, 243, 148], [56, 244, 145], [60, 245, 142], [63, 246, 138], [67, 247, 135],
    [70, 248, 132], [74, 248, 128], [78, 249, 125], [82, 250, 122], [85, 250, 118], [89, 251, 115],
    [93, 252, 111], [97, 252, 108], [101, 253, 105], [105, 253, 102], [109, 254, 98], [113, 254, 95],
    [117, 254, 92], [121, 254, 89], [125, 255, 86], [128, 255, 83], [132, 255, 81], [136, 255, 78],
    [139, 255, 75], [143, 255, 73], [146, 255, 71], [150, 254, 68], [153, 254, 66], [156, 254, 64],
    [159, 253, 63], [161, 253, 61], [164, 252, 60], [167, 252, 58], [169, 251, 57], [172, 251, 56],
    [175, 250, 55], [177, 249, 54], [180, 248, 54], [183, 247, 53], [185, 246, 53], [188, 245, 52],
    [190, 244, 52], [193, 243, 52], [195, 241, 52], [198, 240, 52], [200, 239, 52], [203, 237, 52],
    [205, 236, 52], [208, 234, 52], [210, 233, 53], [212, 231, 53], [215, 229, 53], [217, 228, 54],
    [219, 226, 54], [221, 224, 55], [223, 223, 55], [225, 221, 55], [227, 219, 56], [229, 217, 56],
    [231, 215, 57], [233, 213, 57], [235, 211, 57], [236, 209, 58], [238, 207, 58], [239, 205, 58],
    [241, 203, 58], [242, 201, 58], [244, 199, 58], [245, 197, 58], [246, 195, 58], [247, 193, 58],
    [248, 190, 57], [249, 188, 57], [250, 186, 57], [251, 184, 56], [251, 182, 55], [252, 179, 54],
    [252, 177, 54], [253, 174, 53], [253, 172, 52], [254, 169, 51], [254, 167, 50], [254, 164, 49],
    [254, 161, 48], [254, 158, 47], [254, 155, 45], [254, 153, 44], [254, 150, 43], [254, 147, 42],
    [254, 144, 41], [253, 141, 39], [253, 138, 38], [252, 135, 37], [252, 132, 35], [251, 129, 34],
    [251, 126, 33], [250, 123, 31], [249, 120, 30], [249, 117, 29], [248, 114, 28], [247, 111, 26],
    [246, 108, 25], [245, 105, 24], [244, 102, 23], [243, 99, 21], [242, 96, 20], [241, 93, 19],
    [240, 91, 18], [239, 88, 17], [237, 85, 16], [236, 83, 15], [235, 80, 14], [234, 78, 13],
    [232, 75, 12], [231, 73, 12], [229, 71, 11], [228, 69, 10], [226, 67, 10], [225, 65, 9],
    [223, 63, 8], [221, 61, 8], [220, 59, 7], [218, 57, 7], [216, 55, 6], [214, 53, 6],
    [212, 51, 5], [210, 49, 5], [208, 47, 5], [206, 45, 4], [204, 43, 4], [202, 42, 4],
    [200, 40, 3], [197, 38, 3], [195, 37, 3], [193, 35, 2], [190, 33, 2], [188, 32, 2],
    [185, 30, 2], [183, 29, 2], [180, 27, 1], [178, 26, 1], [175, 24, 1], [172, 23, 1],
    [169, 22, 1], [167, 20, 1], [164, 19, 1], [161, 18, 1], [158, 16, 1], [155, 15, 1],
    [152, 14, 1], [149, 13, 1], [146, 11, 1], [142, 10, 1], [139, 9, 2], [136, 8, 2],
    [133, 7, 2], [129, 6, 2], [126, 5, 2], [122, 4, 3],
];
