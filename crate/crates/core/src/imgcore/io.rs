//! On-disk formats.
//!
//! * `png16`: single-channel 16-bit PNG, pixel value = instance id. 8-bit
//!   greyscale PNGs are accepted on read.
//! * `lmap`: `"LMAP"`, little-endian `u32` height and width, then
//!   height×width little-endian `u32` ids, row-major.
//! * `FMAP`: `"FMAP"`, little-endian `u32` height, width, channels, then
//!   height×width×channels little-endian `f32` values, row-major with
//!   channels interleaved.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;
use std::str::FromStr;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ImageEncoder, ImageFormat, ImageReader};

use super::{FloatMap, FloatMapPair, Grid, LabelMap};
use crate::error::{Error, Result};

const LMAP_MAGIC: &[u8; 4] = b"LMAP";
const FMAP_MAGIC: &[u8; 4] = b"FMAP";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelFormat {
    Png16,
    Lmap,
}

impl LabelFormat {
    /// Guess the format from a file extension (`.png` or `.lmap`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(LabelFormat::Png16),
            "lmap" => Some(LabelFormat::Lmap),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            LabelFormat::Png16 => "png",
            LabelFormat::Lmap => "lmap",
        }
    }
}

impl FromStr for LabelFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png16" | "png" => Ok(LabelFormat::Png16),
            "lmap" => Ok(LabelFormat::Lmap),
            other => Err(Error::InvalidArgument(format!("unknown label format '{other}'"))),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            });
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn payload_len(dims: &[u32], elem: usize) -> Result<usize> {
    dims.iter()
        .try_fold(elem, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::InvalidInput(format!("dimensions {dims:?} overflow")))
}

fn check_nonzero(height: u32, width: u32) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidInput(format!("dimensions must be non-zero, got {height}x{width}")));
    }
    Ok(())
}

pub fn encode_lmap(map: &LabelMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * map.len());
    out.extend_from_slice(LMAP_MAGIC);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for &id in map.as_slice() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

pub fn decode_lmap(bytes: &[u8]) -> Result<LabelMap> {
    let mut r = Reader::new(bytes);
    r.magic(LMAP_MAGIC)?;
    let height = r.u32("height")?;
    let width = r.u32("width")?;
    check_nonzero(height, width)?;
    let payload = r.take(payload_len(&[height, width], 4)?, "payload")?;
    r.finish()?;
    let ids = payload.chunks_exact(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Grid::new(height as usize, width as usize, ids)
}

fn encode_png16(map: &LabelMap) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(2 * map.len());
    for &id in map.as_slice() {
        let v = u16::try_from(id).map_err(|_| Error::Overflow(id as u64))?;
        bytes.extend_from_slice(&v.to_ne_bytes());
    }
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&bytes, map.width() as u32, map.height() as u32, image::ExtendedColorType::L16)
        .map_err(|e| Error::Png(e.to_string()))?;
    Ok(out)
}

fn decode_png16(bytes: &[u8]) -> Result<LabelMap> {
    let img = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png)
        .decode()
        .map_err(|e| Error::Png(e.to_string()))?;
    let (w, h) = (img.width(), img.height());
    check_nonzero(h, w)?;
    let ids: Vec<u32> = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        other => return Err(Error::Png(format!("expected single-channel greyscale png, got {:?}", other.color()))),
    };
    Grid::new(h as usize, w as usize, ids)
}

pub fn read_label_map(path: impl AsRef<Path>, format: LabelFormat) -> Result<LabelMap> {
    let bytes = fs::read(path)?;
    match format {
        LabelFormat::Png16 => decode_png16(&bytes),
        LabelFormat::Lmap => decode_lmap(&bytes),
    }
}

/// Writes `map`; with [`LabelFormat::Png16`] any id above 65535 is an
/// [`Error::Overflow`] and nothing is written.
pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>, format: LabelFormat) -> Result<()> {
    let bytes = match format {
        LabelFormat::Png16 => encode_png16(map)?,
        LabelFormat::Lmap => encode_lmap(map),
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Encodes one or more equally sized channels as an FMAP byte stream.
pub fn encode_fmap(channels: &[&FloatMap]) -> Result<Vec<u8>> {
    let first = channels.first().ok_or_else(|| Error::InvalidArgument("FMAP needs at least one channel".into()))?;
    for c in &channels[1..] {
        first.same_dims(c.grid())?;
    }
    let (h, w) = first.dims();
    let mut out = Vec::with_capacity(16 + 4 * h * w * channels.len());
    out.extend_from_slice(FMAP_MAGIC);
    for v in [h as u32, w as u32, channels.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..h * w {
        for c in channels {
            out.extend_from_slice(&c.as_slice()[i].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_fmap(bytes: &[u8]) -> Result<Vec<FloatMap>> {
    let mut r = Reader::new(bytes);
    r.magic(FMAP_MAGIC)?;
    let height = r.u32("height")?;
    let width = r.u32("width")?;
    let channels = r.u32("channels")?;
    check_nonzero(height, width)?;
    if channels == 0 {
        return Err(Error::InvalidInput("FMAP with zero channels".into()));
    }
    let start = r.pos;
    let payload = r.take(payload_len(&[height, width, channels], 4)?, "payload")?;
    r.finish()?;
    let nc = channels as usize;
    let mut planes = vec![Vec::with_capacity(height as usize * width as usize); nc];
    for (i, b) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if !v.is_finite() {
            return Err(Error::Format { offset: (start + 4 * i) as u64, message: format!("non-finite value {v}") });
        }
        planes[i % nc].push(v);
    }
    planes.into_iter().map(|p| FloatMap::new(height as usize, width as usize, p)).collect()
}

pub fn read_float_maps(path: impl AsRef<Path>) -> Result<Vec<FloatMap>> {
    decode_fmap(&fs::read(path)?)
}

pub fn write_float_maps(channels: &[&FloatMap], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_fmap(channels)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    std::io::Write::write_all(&mut w, &bytes)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Reads a single-channel FMAP file.
pub fn read_float_map(path: impl AsRef<Path>) -> Result<FloatMap> {
    let mut maps = read_float_maps(path)?;
    if maps.len() != 1 {
        return Err(Error::InvalidInput(format!("expected 1 channel, found {}", maps.len())));
    }
    Ok(maps.remove(0))
}

pub fn write_float_map(map: &FloatMap, path: impl AsRef<Path>) -> Result<()> {
    write_float_maps(&[map], path)
}

/// Reads a 2-channel FMAP file: channel 0 horizontal, channel 1 vertical.
pub fn read_float_map_pair(path: impl AsRef<Path>) -> Result<FloatMapPair> {
    let maps = read_float_maps(path)?;
    if maps.len() != 2 {
        return Err(Error::InvalidInput(format!("expected 2 channels, found {}", maps.len())));
    }
    let mut it = maps.into_iter();
    FloatMapPair::new(it.next().unwrap(), it.next().unwrap())
}

pub fn write_float_map_pair(pair: &FloatMapPair, path: impl AsRef<Path>) -> Result<()> {
    write_float_maps(&[pair.horizontal(), pair.vertical()], path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn fmap_byte_layout() {
        let zeros = FloatMap::zeros(2, 2);
        let bytes = encode_fmap(&[&zeros]).unwrap();
        // magic, height, width, channels, then four f32 values
        assert_eq!(bytes.len(), 16 + 16);
        assert_eq!(&bytes[..4], b"FMAP");
        assert_eq!(bytes[4..16], [2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        let half = FloatMap::from_fn(1, 1, |_, _| 1.5).unwrap();
        assert_eq!(encode_fmap(&[&half]).unwrap()[16..], 1.5f32.to_le_bytes());
        assert_eq!(decode_fmap(&bytes).unwrap(), vec![zeros]);
    }

    #[test]
    fn png16_all_zero_round_trip() {
        let dir = tmp();
        let p = dir.path().join("z.png");
        let m = Grid::filled(4, 4, 0u32);
        write_label_map(&m, &p, LabelFormat::Png16).unwrap();
        let back = read_label_map(&p, LabelFormat::Png16).unwrap();
        assert_eq!(back.len(), 16);
        assert!(back.as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn png16_boundary_ids() {
        let dir = tmp();
        let p = dir.path().join("m.png");
        let m = Grid::new(1, 2, vec![65535u32, 1]).unwrap();
        write_label_map(&m, &p, LabelFormat::Png16).unwrap();
        assert_eq!(read_label_map(&p, LabelFormat::Png16).unwrap(), m);

        let big = Grid::new(1, 1, vec![65536u32]).unwrap();
        let err = write_label_map(&big, dir.path().join("b.png"), LabelFormat::Png16).unwrap_err();
        assert!(matches!(err, Error::Overflow(65536)));
        // lmap has no 16-bit ceiling
        let q = dir.path().join("b.lmap");
        write_label_map(&big, &q, LabelFormat::Lmap).unwrap();
        assert_eq!(read_label_map(&q, LabelFormat::Lmap).unwrap(), big);
    }

    #[test]
    fn png8_is_read_without_rescaling() {
        let dir = tmp();
        let p = dir.path().join("g8.png");
        image::GrayImage::from_raw(2, 1, vec![3, 200]).unwrap().save(&p).unwrap();
        let m = read_label_map(&p, LabelFormat::Png16).unwrap();
        assert_eq!(m.as_slice(), &[3, 200]);
    }

    #[test]
    fn lmap_errors_name_offsets() {
        let good = encode_lmap(&Grid::filled(2, 2, 7u32));
        assert_eq!(good.len(), 12 + 16);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_lmap(&bad), Err(Error::Format { offset: 0, .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(decode_lmap(truncated), Err(Error::Format { offset: 25, .. })));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(decode_lmap(&trailing), Err(Error::Format { offset: 28, .. })));

        let zero = encode_lmap_raw(0, 4, &[]);
        assert!(matches!(decode_lmap(&zero), Err(Error::InvalidInput(_))));
    }

    fn encode_lmap_raw(h: u32, w: u32, ids: &[u32]) -> Vec<u8> {
        let mut v = b"LMAP".to_vec();
        v.extend_from_slice(&h.to_le_bytes());
        v.extend_from_slice(&w.to_le_bytes());
        for id in ids {
            v.extend_from_slice(&id.to_le_bytes());
        }
        v
    }

    #[test]
    fn fmap_layout() {
        let z = FloatMap::zeros(2, 2);
        let bytes = encode_fmap(&[&z]).unwrap();
        // magic + three u32 header fields + 4 floats
        assert_eq!(bytes.len(), 4 + 12 + 16);
        assert_eq!(&bytes[..4], b"FMAP");
        assert_eq!(decode_fmap(&bytes).unwrap(), vec![z]);

        let m = FloatMap::new(1, 1, vec![1.5]).unwrap();
        let bytes = encode_fmap(&[&m]).unwrap();
        assert_eq!(&bytes[16..], &1.5f32.to_le_bytes());
    }

    #[test]
    fn fmap_channels_interleave() {
        let a = FloatMap::new(1, 2, vec![1.0, 2.0]).unwrap();
        let b = FloatMap::new(1, 2, vec![-1.0, -2.0]).unwrap();
        let bytes = encode_fmap(&[&a, &b]).unwrap();
        let vals: Vec<f32> = bytes[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals, vec![1.0, -1.0, 2.0, -2.0]);
        let pair = decode_fmap(&bytes).unwrap();
        assert_eq!(pair, vec![a, b]);
    }

    #[test]
    fn fmap_errors() {
        let bytes = encode_fmap(&[&FloatMap::zeros(2, 2)]).unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(decode_fmap(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_fmap(&bytes[..20]), Err(Error::Format { .. })));
        let mut nan = bytes.clone();
        nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_fmap(&nan), Err(Error::Format { offset: 20, .. })));
    }

    #[test]
    fn format_names() {
        assert_eq!("png16".parse::<LabelFormat>().unwrap(), LabelFormat::Png16);
        assert_eq!(LabelFormat::from_path(Path::new("a/b.LMAP")), Some(LabelFormat::Lmap));
        assert!("tiff".parse::<LabelFormat>().is_err());
    }

    proptest! {
        #[test]
        fn lmap_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let m = Grid::from_fn(h, w, |x, y| (seed.wrapping_mul(31 + (y * w + x) as u64) >> 33) as u32);
            prop_assert_eq!(decode_lmap(&encode_lmap(&m)).unwrap(), m);
        }

        #[test]
        fn fmap_round_trip(vals in proptest::collection::vec(-1e6f32..1e6, 1..64), c in 1usize..3) {
            let w = vals.len();
            let maps: Vec<FloatMap> = (0..c)
                .map(|k| FloatMap::new(1, w, vals.iter().map(|v| v * (k as f32 + 1.0)).collect()).unwrap())
                .collect();
            let refs: Vec<&FloatMap> = maps.iter().collect();
            let back = decode_fmap(&encode_fmap(&refs).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&maps) {
                prop_assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}
