//! Volumetric images: NIfTI-1 and raw ingestion, intensity normalization
//! and slab extraction.
//!
//! A [`Volume3D`] stores its voxels in row-major order (the last axis varies
//! fastest). NIfTI files store the first axis fastest, so the parser
//! transposes on the way in.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NIFTI1_HEADER_SIZE: usize = 348;
pub const MAGIC_NIFTI1_SINGLE: &[u8; 4] = b"n+1\0";
pub const MAGIC_NIFTI1_PAIR: &[u8; 4] = b"ni1\0";
const NIFTI2_HEADER_SIZE: i32 = 540;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Default analysis window along the slice axis (inclusive).
pub const DEFAULT_SLAB: (usize, usize) = (30, 90);

/// A dense 3D grid of finite scalar intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    data: Vec<f64>,
    slice_axis: usize,
}

impl Volume3D {
    /// Builds a volume, checking the length and finiteness invariants. The
    /// slice axis defaults to [`default_slice_axis`].
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidData(format!("empty dimension in {dims:?}")));
        }
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::InvalidData(format!(
                "data length {} does not match dims {dims:?} ({expected} voxels)",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value {} at voxel {pos}",
                data[pos]
            )));
        }
        Ok(Volume3D {
            dims,
            data,
            slice_axis: default_slice_axis(dims),
        })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Volume3D::new(dims, data)
    }

    pub fn with_slice_axis(mut self, axis: usize) -> Result<Self> {
        if axis > 2 {
            return Err(Error::OutOfRange(format!("slice axis {axis} is not in 0..=2")));
        }
        self.slice_axis = axis;
        Ok(self)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn slice_axis(&self) -> usize {
        self.slice_axis
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Maps every voxel through `f`, keeping dims and slice axis.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Volume3D::new(self.dims, data)?.with_slice_axis(self.slice_axis)
    }

    /// Negated intensities; sublevel persistence of the result is the
    /// superlevel persistence of `self`.
    pub fn inverted(&self) -> Result<Self> {
        self.map(|v| -v)
    }

    /// Applies an axis-aligned grid symmetry.
    pub fn transformed(&self, sym: &GridSymmetry) -> Volume3D {
        let src = self.dims;
        let dims = [src[sym.perm[0]], src[sym.perm[1]], src[sym.perm[2]]];
        let mut data = Vec::with_capacity(self.data.len());
        let mut old = [0usize; 3];
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    for (axis, &c) in [i, j, k].iter().enumerate() {
                        let c = if sym.flip[axis] { dims[axis] - 1 - c } else { c };
                        old[sym.perm[axis]] = c;
                    }
                    data.push(self.get(old[0], old[1], old[2]));
                }
            }
        }
        let slice_axis = sym.perm.iter().position(|&a| a == self.slice_axis).unwrap_or(0);
        Volume3D {
            dims,
            data,
            slice_axis,
        }
    }
}

/// The axis whose extent differs from the other two, or axis 0 when no
/// single axis stands out.
pub fn default_slice_axis(dims: [usize; 3]) -> usize {
    let [a, b, c] = dims;
    if b == c && a != b {
        0
    } else if a == c && b != a {
        1
    } else if a == b && c != a {
        2
    } else {
        0
    }
}

/// An axis permutation followed by per-axis reflections. Output axis `i`
/// reads input axis `perm[i]`, reversed when `flip[i]` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSymmetry {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

impl GridSymmetry {
    /// All 48 symmetries of the cube (6 permutations x 8 reflections).
    pub fn all() -> Vec<GridSymmetry> {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut out = Vec::with_capacity(48);
        for perm in PERMS {
            for bits in 0..8u8 {
                let flip = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
                out.push(GridSymmetry { perm, flip });
            }
        }
        out
    }
}

/// Element type of a raw or NIfTI payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarKind {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl ScalarKind {
    pub fn width(self) -> usize {
        match self {
            ScalarKind::U8 => 1,
            ScalarKind::I16 => 2,
            ScalarKind::I32 | ScalarKind::F32 => 4,
            ScalarKind::F64 => 8,
        }
    }

    pub fn nifti_code(self) -> i16 {
        match self {
            ScalarKind::U8 => 2,
            ScalarKind::I16 => 4,
            ScalarKind::I32 => 8,
            ScalarKind::F32 => 16,
            ScalarKind::F64 => 64,
        }
    }

    pub fn from_nifti_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => ScalarKind::U8,
            4 => ScalarKind::I16,
            8 => ScalarKind::I32,
            16 => ScalarKind::F32,
            64 => ScalarKind::F64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    fn decode<B: ByteOrder>(self, bytes: &[u8], count: usize) -> Vec<f64> {
        let w = self.width();
        let mut out = Vec::with_capacity(count);
        for chunk in bytes[..count * w].chunks_exact(w) {
            out.push(match self {
                ScalarKind::U8 => f64::from(chunk[0]),
                ScalarKind::I16 => f64::from(B::read_i16(chunk)),
                ScalarKind::I32 => f64::from(B::read_i32(chunk)),
                ScalarKind::F32 => f64::from(B::read_f32(chunk)),
                ScalarKind::F64 => B::read_f64(chunk),
            });
        }
        out
    }

    fn encode_le(self, value: f64, out: &mut Vec<u8>) {
        match self {
            ScalarKind::U8 => out.push(value.round().clamp(0.0, 255.0) as u8),
            ScalarKind::I16 => out.extend_from_slice(&(value.round() as i16).to_le_bytes()),
            ScalarKind::I32 => out.extend_from_slice(&(value.round() as i32).to_le_bytes()),
            ScalarKind::F32 => out.extend_from_slice(&(value as f32).to_le_bytes()),
            ScalarKind::F64 => out.extend_from_slice(&value.to_le_bytes()),
        }
    }
}

impl std::str::FromStr for ScalarKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "u8" | "uint8" => ScalarKind::U8,
            "i16" | "int16" => ScalarKind::I16,
            "i32" | "int32" => ScalarKind::I32,
            "f32" | "float32" => ScalarKind::F32,
            "f64" | "float64" => ScalarKind::F64,
            _ => return Err(Error::Config(format!("unknown scalar kind '{s}'"))),
        })
    }
}

fn gunzip_if_needed(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("gzip stream: {e}")))?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

/// Parses a single-frame NIfTI-1 volume, gzip-wrapped or not.
///
/// For `ni1` headers the image payload is expected to follow the header
/// (as produced by concatenating a `.hdr`/`.img` pair).
pub fn parse_nifti(bytes: &[u8]) -> Result<Volume3D> {
    let bytes = gunzip_if_needed(bytes)?;
    if bytes.len() < NIFTI1_HEADER_SIZE {
        return Err(Error::Format(format!(
            "{} bytes is too short for a NIfTI-1 header",
            bytes.len()
        )));
    }
    let hdr = &bytes[..NIFTI1_HEADER_SIZE];

    let dim0_le = LittleEndian::read_i16(&hdr[40..42]);
    if (1..=7).contains(&dim0_le) {
        decode_nifti::<LittleEndian>(&bytes)
    } else if (1..=7).contains(&BigEndian::read_i16(&hdr[40..42])) {
        decode_nifti::<BigEndian>(&bytes)
    } else {
        Err(Error::Format(format!("dim[0] = {dim0_le} is not a valid rank")))
    }
}

fn decode_nifti<B: ByteOrder>(bytes: &[u8]) -> Result<Volume3D> {
    let hdr = &bytes[..NIFTI1_HEADER_SIZE];
    let sizeof_hdr = B::read_i32(&hdr[0..4]);
    if sizeof_hdr == NIFTI2_HEADER_SIZE {
        return Err(Error::Format("NIfTI-2 files are not supported".into()));
    }
    if sizeof_hdr != NIFTI1_HEADER_SIZE as i32 {
        return Err(Error::Format(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }
    let magic = &hdr[344..348];
    if magic != MAGIC_NIFTI1_SINGLE && magic != MAGIC_NIFTI1_PAIR {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = B::read_i16(&hdr[40 + 2 * i..42 + 2 * i]);
    }
    match dim[0] {
        3 => {}
        4 if dim[4] == 1 => {}
        4 => {
            return Err(Error::Format(format!(
                "multi-frame volumes are not supported ({} frames)",
                dim[4]
            )))
        }
        n => return Err(Error::Format(format!("expected a 3D volume, dim[0] = {n}"))),
    }
    if dim[1..4].iter().any(|&d| d < 1) {
        return Err(Error::Format(format!("non-positive extent in dim {dim:?}")));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let kind = ScalarKind::from_nifti_code(B::read_i16(&hdr[70..72]))?;
    let vox_offset = B::read_f32(&hdr[108..112]);
    let slope = B::read_f32(&hdr[112..116]);
    let inter = B::read_f32(&hdr[116..120]);

    let offset = if vox_offset.is_finite() && vox_offset >= NIFTI1_HEADER_SIZE as f32 {
        vox_offset as usize
    } else {
        NIFTI1_HEADER_SIZE
    };
    let count = dims.iter().product::<usize>();
    let expected = count * kind.width();
    let payload = bytes.get(offset..).unwrap_or(&[]);
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }

    let mut raw = kind.decode::<B>(payload, count);
    if slope != 0.0 && slope.is_finite() {
        let (slope, inter) = (f64::from(slope), f64::from(inter));
        for v in &mut raw {
            *v = *v * slope + inter;
        }
    }

    // file order: first axis fastest
    let [d0, d1, d2] = dims;
    let mut data = vec![0.0; count];
    for k in 0..d2 {
        for j in 0..d1 {
            for i in 0..d0 {
                data[(i * d1 + j) * d2 + k] = raw[i + d0 * (j + d1 * k)];
            }
        }
    }
    Volume3D::new(dims, data)
}

/// Serializes a volume as an uncompressed little-endian single-file NIfTI-1.
pub fn write_nifti(v: &Volume3D, kind: ScalarKind) -> Vec<u8> {
    let mut hdr = vec![0u8; NIFTI1_HEADER_SIZE];
    LittleEndian::write_i32(&mut hdr[0..4], NIFTI1_HEADER_SIZE as i32);
    let [d0, d1, d2] = v.dims;
    let dim = [3i16, d0 as i16, d1 as i16, d2 as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut hdr[40 + 2 * i..42 + 2 * i], *d);
    }
    LittleEndian::write_i16(&mut hdr[70..72], kind.nifti_code());
    LittleEndian::write_i16(&mut hdr[72..74], (kind.width() * 8) as i16);
    for i in 0..4 {
        LittleEndian::write_f32(&mut hdr[76 + 4 * i..80 + 4 * i], 1.0); // pixdim
    }
    LittleEndian::write_f32(&mut hdr[108..112], 352.0);
    LittleEndian::write_f32(&mut hdr[112..116], 1.0);
    hdr[344..348].copy_from_slice(MAGIC_NIFTI1_SINGLE);

    let mut out = hdr;
    out.extend_from_slice(&[0u8; 4]); // empty extension block
    for k in 0..d2 {
        for j in 0..d1 {
            for i in 0..d0 {
                kind.encode_le(v.get(i, j, k), &mut out);
            }
        }
    }
    out
}

/// Parses headerless little-endian voxels in row-major order.
pub fn parse_raw(bytes: &[u8], dims: [usize; 3], kind: ScalarKind) -> Result<Volume3D> {
    let count = dims.iter().product::<usize>();
    let expected = count * kind.width();
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Volume3D::new(dims, kind.decode::<LittleEndian>(bytes, count))
}

/// Row-major little-endian serialization, the inverse of [`parse_raw`] for
/// values representable in `kind`.
pub fn to_raw(v: &Volume3D, kind: ScalarKind) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len() * kind.width());
    for &x in &v.data {
        kind.encode_le(x, &mut out);
    }
    out
}

/// Rescales intensities affinely onto [0, 255] using the global min and max.
/// A constant volume maps to all zeros.
pub fn normalize(v: &Volume3D) -> Result<Volume3D> {
    if let Some(bad) = v.data.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite intensity {bad}")));
    }
    let (lo, hi) = v.min_max();
    if hi <= lo {
        return v.map(|_| 0.0);
    }
    let span = hi - lo;
    v.map(|x| ((x - lo) / span * 255.0).clamp(0.0, 255.0))
}

/// Keeps slices `lo..=hi` along the volume's slice axis.
pub fn extract_slab(v: &Volume3D, lo: usize, hi: usize) -> Result<Volume3D> {
    let axis = v.slice_axis;
    let extent = v.dims[axis];
    if hi >= extent {
        return Err(Error::OutOfRange(format!(
            "slab end {hi} is beyond the slice axis extent {extent}"
        )));
    }
    if lo > hi {
        return Err(Error::OutOfRange(format!("empty slab window {lo}..={hi}")));
    }
    let mut dims = v.dims;
    dims[axis] = hi - lo + 1;
    let mut data = Vec::with_capacity(dims.iter().product());
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let mut c = [i, j, k];
                c[axis] += lo;
                data.push(v.get(c[0], c[1], c[2]));
            }
        }
    }
    Ok(Volume3D {
        dims,
        data,
        slice_axis: axis,
    })
}

/// The default window for an axis of `extent` slices, if it is long enough.
pub fn default_slab(extent: usize) -> Option<(usize, usize)> {
    (extent > DEFAULT_SLAB.1).then_some(DEFAULT_SLAB)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Lgg,
    Hgg,
}

impl Label {
    /// Binary class index; HGG is the positive class.
    pub fn index(self) -> usize {
        match self {
            Label::Lgg => 0,
            Label::Hgg => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Lgg
        } else {
            Label::Hgg
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Lgg => "LGG",
            Label::Hgg => "HGG",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LGG" => Ok(Label::Lgg),
            "HGG" => Ok(Label::Hgg),
            other => Err(Error::Format(format!("label must be LGG or HGG, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    Nifti,
    Raw,
}

impl VolumeFormat {
    pub fn infer(path: &Path) -> VolumeFormat {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if name.ends_with(".nii") || name.ends_with(".nii.gz") || name.ends_with(".hdr") {
            VolumeFormat::Nifti
        } else {
            VolumeFormat::Raw
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub format: VolumeFormat,
}

/// A labeled collection of volume files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(&e.path) {
                return Err(Error::Format(format!(
                    "duplicate manifest path {}",
                    e.path.display()
                )));
            }
        }
        Ok(DatasetManifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.entries.iter().map(|e| e.label).collect()
    }

    /// Reads a `path,label` CSV. Relative paths resolve against the
    /// manifest's own directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_csv(&text, base).map_err(|e| e.in_file(path))
    }

    pub fn parse_csv(text: &str, base: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
            return Err(Error::Format(format!(
                "manifest header must be 'path,label', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let rel = PathBuf::from(&rec[0]);
            let path = if rel.is_absolute() { rel } else { base.join(rel) };
            let label = rec[1].parse()?;
            let format = VolumeFormat::infer(&path);
            entries.push(ManifestEntry { path, label, format });
        }
        DatasetManifest::new(entries)
    }

    /// Writes the manifest with paths relative to `base` when possible.
    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["path", "label"])?;
        for e in &self.entries {
            let p = e.path.strip_prefix(base).unwrap_or(&e.path);
            w.write_record([p.to_string_lossy().as_ref(), e.label.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How to decode raw files, which carry no header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawSpec {
    pub dims: [usize; 3],
    pub kind: ScalarKind,
}

/// Loads one volume from disk. `.hdr` files pick up their `.img` sibling.
pub fn load_volume(path: &Path, format: VolumeFormat, raw: Option<RawSpec>) -> Result<Volume3D> {
    let read = |p: &Path| fs::read(p).map_err(|e| Error::from(e).in_file(p));
    let vol = match format {
        VolumeFormat::Nifti => {
            let mut bytes = read(path)?;
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("hdr")) {
                let mut hdr = gunzip_if_needed(&bytes)?.into_owned();
                hdr.truncate(NIFTI1_HEADER_SIZE);
                let img = read(&path.with_extension("img"))?;
                hdr.extend_from_slice(&gunzip_if_needed(&img)?);
                bytes = hdr;
            }
            parse_nifti(&bytes)
        }
        VolumeFormat::Raw => {
            let spec = raw.ok_or_else(|| {
                Error::Config("raw volumes need dims and a scalar kind".to_string())
            })?;
            parse_raw(&read(path)?, spec.dims, spec.kind)
        }
    };
    vol.map_err(|e| match e {
        Error::File { .. } => e,
        other => other.in_file(path),
    })
}
