//! File formats: backplanes (GEO1), correspondence fields (COR1), dense
//! feature maps (DFM1), raw grids (RAWG), per-image TOML sidecars, PNG images
//! and CSV pair manifests.
//!
//! All binary containers are little-endian and store float32 values by bit
//! pattern, so NaN payloads survive a round trip.

use crate::error::{Error, Result};
use crate::features::DenseFeatureMap;
use crate::geometry::Intrinsics;
use crate::grid::Grid;
use crate::pairing::{Backplane, CorrespondenceField, GeoImage, PairSource};
use crate::preprocess::RawImage;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const GEO1_MAGIC: &[u8; 4] = b"GEO1";
pub const COR1_MAGIC: &[u8; 4] = b"COR1";
pub const DFM1_MAGIC: &[u8; 4] = b"DFM1";
pub const RAWG_MAGIC: &[u8; 4] = b"RAWG";
pub const DFM1_VERSION: u16 = 1;

const MAX_SIDE: usize = 1 << 16;

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => e.into(),
    })?;
    Ok(b)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(read_exact::<_, 1>(r)?[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    Ok(u16::from_le_bytes(read_exact(r)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated body".into()),
        _ => e.into(),
    })?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn write_f32s<W: Write>(w: &mut W, v: impl IntoIterator<Item = f32>) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let m: [u8; 4] = read_exact(r)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_dims<R: Read>(r: &mut R) -> Result<(usize, usize)> {
    let h = read_u32(r)? as usize;
    let w = read_u32(r)? as usize;
    if w == 0 || h == 0 || w > MAX_SIDE || h > MAX_SIDE {
        return Err(Error::Format(format!("implausible grid size {w}x{h}")));
    }
    Ok((w, h))
}

fn expect_end<R: Read>(r: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after body".into())),
    }
}

fn dims_u32(w: usize, h: usize) -> Result<(u32, u32)> {
    match (u32::try_from(w), u32::try_from(h)) {
        (Ok(w), Ok(h)) => Ok((w, h)),
        _ => Err(Error::Invalid(format!("grid too large: {w}x{h}"))),
    }
}

pub fn write_geo1<W: Write>(w: &mut W, coords: &Backplane) -> Result<()> {
    let (cw, ch) = dims_u32(coords.width(), coords.height())?;
    w.write_all(GEO1_MAGIC)?;
    w.write_all(&ch.to_le_bytes())?;
    w.write_all(&cw.to_le_bytes())?;
    write_f32s(w, coords.data().iter().flatten().copied())
}

pub fn read_geo1<R: Read>(r: &mut R) -> Result<Backplane> {
    expect_magic(r, GEO1_MAGIC)?;
    let (w, h) = read_dims(r)?;
    let v = read_f32s(r, w * h * 3)?;
    expect_end(r)?;
    Ok(Grid::from_vec(w, h, v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

pub fn write_cor1<W: Write>(w: &mut W, corr: &CorrespondenceField) -> Result<()> {
    let (cw, ch) = dims_u32(corr.map.width(), corr.map.height())?;
    w.write_all(COR1_MAGIC)?;
    w.write_all(&ch.to_le_bytes())?;
    w.write_all(&cw.to_le_bytes())?;
    write_f32s(w, corr.map.data().iter().flatten().copied())
}

pub fn read_cor1<R: Read>(r: &mut R) -> Result<CorrespondenceField> {
    expect_magic(r, COR1_MAGIC)?;
    let (w, h) = read_dims(r)?;
    let v = read_f32s(r, w * h * 2)?;
    expect_end(r)?;
    Ok(CorrespondenceField { map: Grid::from_vec(w, h, v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()) })
}

pub fn write_dfm1<W: Write>(w: &mut W, map: &DenseFeatureMap) -> Result<()> {
    let (cw, ch) = dims_u32(map.width(), map.height())?;
    let dim = u16::try_from(map.dim()).map_err(|_| Error::Invalid(format!("descriptor dim {}", map.dim())))?;
    w.write_all(DFM1_MAGIC)?;
    w.write_all(&DFM1_VERSION.to_le_bytes())?;
    w.write_all(&ch.to_le_bytes())?;
    w.write_all(&cw.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&[1 + map.reliability.is_some() as u8])?;
    w.write_all(&(map.scale as f32).to_le_bytes())?;
    write_f32s(w, map.descriptors().iter().copied())?;
    write_f32s(w, map.detection.data().iter().copied())?;
    if let Some(rel) = &map.reliability {
        write_f32s(w, rel.data().iter().copied())?;
    }
    Ok(())
}

/// Reads a dense feature map. With two detection maps the second is the
/// reliability map.
pub fn read_dfm1<R: Read>(r: &mut R) -> Result<DenseFeatureMap> {
    expect_magic(r, DFM1_MAGIC)?;
    let version = read_u16(r)?;
    if version != DFM1_VERSION {
        return Err(Error::Format(format!("unsupported DFM1 version {version}")));
    }
    let (w, h) = read_dims(r)?;
    let dim = read_u16(r)? as usize;
    let n_det = read_u8(r)?;
    if dim == 0 || !(1..=2).contains(&n_det) {
        return Err(Error::Format(format!("bad DFM1 header: dim {dim}, detection maps {n_det}")));
    }
    let scale = f32::from_le_bytes(read_exact(r)?);
    let desc = read_f32s(r, w * h * dim)?;
    let det = Grid::from_vec(w, h, read_f32s(r, w * h)?);
    let rel = if n_det == 2 { Some(Grid::from_vec(w, h, read_f32s(r, w * h)?)) } else { None };
    expect_end(r)?;
    DenseFeatureMap::new(dim, desc, det, rel, scale as f64).map_err(|e| Error::Format(e.to_string()))
}

/// Raw grid sample type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawSample {
    U16 = 1,
    F32 = 2,
}

/// `"RAWG"`, u32 H, u32 W, u8 sample type (1 = u16, 2 = f32), then samples.
pub fn write_rawg<W: Write>(w: &mut W, img: &RawImage, sample: RawSample) -> Result<()> {
    let (cw, ch) = dims_u32(img.width(), img.height())?;
    w.write_all(RAWG_MAGIC)?;
    w.write_all(&ch.to_le_bytes())?;
    w.write_all(&cw.to_le_bytes())?;
    w.write_all(&[sample as u8])?;
    match sample {
        RawSample::F32 => write_f32s(w, img.data().iter().copied()),
        RawSample::U16 => {
            for &v in img.data() {
                if !(0.0..=65535.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Invalid(format!("value {v} is not a 16-bit sample")));
                }
                w.write_all(&(v as u16).to_le_bytes())?;
            }
            Ok(())
        }
    }
}

pub fn read_rawg<R: Read>(r: &mut R) -> Result<RawImage> {
    expect_magic(r, RAWG_MAGIC)?;
    let (w, h) = read_dims(r)?;
    let data = match read_u8(r)? {
        1 => {
            let mut bytes = vec![0u8; w * h * 2];
            r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated body".into()))?;
            bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as f32).collect()
        }
        2 => read_f32s(r, w * h)?,
        t => return Err(Error::Format(format!("unknown RAWG sample type {t}"))),
    };
    expect_end(r)?;
    Ok(Grid::from_vec(w, h, data))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn load_geo1(path: &Path) -> Result<Backplane> {
    with_path(path, read_geo1(&mut open(path)?))
}

pub fn save_geo1(path: &Path, coords: &Backplane) -> Result<()> {
    let mut f = create(path)?;
    write_geo1(&mut f, coords)?;
    Ok(f.flush()?)
}

pub fn load_cor1(path: &Path) -> Result<CorrespondenceField> {
    with_path(path, read_cor1(&mut open(path)?))
}

pub fn save_cor1(path: &Path, corr: &CorrespondenceField) -> Result<()> {
    let mut f = create(path)?;
    write_cor1(&mut f, corr)?;
    Ok(f.flush()?)
}

pub fn load_dfm1(path: &Path) -> Result<DenseFeatureMap> {
    with_path(path, read_dfm1(&mut open(path)?))
}

pub fn save_dfm1(path: &Path, map: &DenseFeatureMap) -> Result<()> {
    let mut f = create(path)?;
    write_dfm1(&mut f, map)?;
    Ok(f.flush()?)
}

pub fn save_rawg(path: &Path, img: &RawImage, sample: RawSample) -> Result<()> {
    let mut f = create(path)?;
    write_rawg(&mut f, img, sample)?;
    Ok(f.flush()?)
}

/// Loads a raw grayscale image: RAWG by magic, otherwise an 8 or 16-bit
/// grayscale raster.
pub fn load_raw_image(path: &Path) -> Result<RawImage> {
    let mut head = [0u8; 4];
    let n = open(path)?.read(&mut head)?;
    if n == 4 && &head == RAWG_MAGIC {
        return with_path(path, read_rawg(&mut open(path)?));
    }
    let img = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(f32::from).collect(),
        image::DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(f32::from).collect(),
        _ => return Err(Error::Format(format!("{}: not a single-channel image", path.display()))),
    };
    Ok(Grid::from_vec(w, h, data))
}

pub fn load_png_u8(path: &Path) -> Result<Grid<u8>> {
    let img = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let g = match img {
        image::DynamicImage::ImageLuma8(b) => b,
        _ => return Err(Error::Format(format!("{}: expected 8-bit grayscale", path.display()))),
    };
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok(Grid::from_vec(w, h, g.into_raw()))
}

pub fn save_png_u8(path: &Path, img: &Grid<u8>) -> Result<()> {
    let (w, h) = dims_u32(img.width(), img.height())?;
    let buf = image::GrayImage::from_raw(w, h, img.data().to_vec())
        .ok_or_else(|| Error::Invalid("image buffer size".into()))?;
    let mut f = create(path)?;
    buf.write_to(&mut f, image::ImageFormat::Png).map_err(|e| Error::Format(e.to_string()))?;
    Ok(f.flush()?)
}

/// Per-image geometry metadata stored next to the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoSidecar {
    pub intrinsics: Intrinsics,
    pub boresight: [f64; 3],
    pub cam_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_dir: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_extent_p90: Option<f64>,
}

impl GeoSidecar {
    pub fn from_image(img: &GeoImage) -> Self {
        Self {
            intrinsics: img.intrinsics,
            boresight: img.boresight.into(),
            cam_distance: img.cam_distance,
            light_dir: img.light_dir.map(Into::into),
            pixel_extent_p90: img.pixel_extent_p90,
        }
    }
}

pub fn load_sidecar(path: &Path) -> Result<GeoSidecar> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn save_sidecar(path: &Path, s: &GeoSidecar) -> Result<()> {
    let text = toml::to_string(s).map_err(|e| Error::Format(e.to_string()))?;
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(f.flush()?)
}

/// Sidecar and backplane paths for an image: `x.png` pairs with `x.toml`
/// and `x.geo`.
pub fn sidecar_paths(image: &Path) -> (PathBuf, PathBuf) {
    (image.with_extension("toml"), image.with_extension("geo"))
}

/// Loads an 8-bit image with its optional sidecar and backplane. Without a
/// sidecar the image is treated as ungeoreferenced.
pub fn load_geo_image(image: &Path) -> Result<GeoImage> {
    let img = load_png_u8(image)?;
    let id = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (meta, geo) = sidecar_paths(image);
    let mut out = GeoImage::plain(id, img);
    if meta.exists() {
        let s = load_sidecar(&meta)?;
        out.intrinsics = s.intrinsics;
        out.boresight = Vector3::from(s.boresight);
        out.cam_distance = s.cam_distance;
        out.light_dir = s.light_dir.map(Vector3::from);
        out.pixel_extent_p90 = s.pixel_extent_p90;
    }
    if geo.exists() {
        out.coords = Some(load_geo1(&geo)?);
    }
    out.validate()?;
    Ok(out)
}

/// Writes an image with its sidecar and, if present, its backplane.
pub fn save_geo_image(image: &Path, img: &GeoImage) -> Result<()> {
    save_png_u8(image, &img.image)?;
    let (meta, geo) = sidecar_paths(image);
    save_sidecar(&meta, &GeoSidecar::from_image(img))?;
    if let Some(c) = &img.coords {
        save_geo1(&geo, c)?;
    }
    Ok(())
}

/// One row of a pair manifest. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub image_a: String,
    pub image_b: String,
    pub corr_file: String,
    pub phi: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub source: PairSource,
}

impl PairRecord {
    /// Identifier used to name per-pair outputs.
    pub fn pair_id(&self) -> String {
        let stem = |s: &str| Path::new(s).file_stem().map(|v| v.to_string_lossy().into_owned()).unwrap_or_default();
        format!("{}__{}", stem(&self.image_a), stem(&self.image_b))
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<PairRecord>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_manifest(path: &Path, rows: &[PairRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if rows.is_empty() {
        w.write_record(["image_a", "image_b", "corr_file", "phi", "alpha", "beta", "source"])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
