//! File formats: an attached-payload NRRD subset and a raw payload with a
//! JSON sidecar carrying the same header fields.
//!
//! Payloads are always little-endian, x-fastest. Orientation is declared by
//! the `head axis:=` and `right axis:=` key/value pairs (NRRD) or the
//! `head_axis`/`right_axis` fields (sidecar).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Axis, AxisConvention, BinaryVolume, BranchLabel, BranchLabelVolume, Grid, IntensityVolume,
    Result, Volume, VolumeError,
};

const LABELS_KEY: &str = "labels";
const LABELS_VALUE: &str = "branch";
const PSEUDO_KEY: &str = "pseudo";

/// On-disk element type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    UChar,
    Short,
    Float,
}

impl ElementType {
    fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short => 2,
            ElementType::Float => 4,
        }
    }

    fn nrrd_name(self) -> &'static str {
        match self {
            ElementType::UChar => "uchar",
            ElementType::Short => "short",
            ElementType::Float => "float",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        match name.trim() {
            "uchar" | "unsigned char" | "uint8" | "uint8_t" => Ok(ElementType::UChar),
            "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => {
                Ok(ElementType::Short)
            }
            "float" => Ok(ElementType::Float),
            other => Err(VolumeError::UnsupportedFormat(format!(
                "element type {other:?}"
            ))),
        }
    }
}

/// Any volume that can be read from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyVolume {
    Binary(BinaryVolume),
    Intensity(IntensityVolume),
    Labels(BranchLabelVolume),
}

impl AnyVolume {
    pub fn grid(&self) -> &Grid {
        match self {
            AnyVolume::Binary(v) => v.grid(),
            AnyVolume::Intensity(v) => v.grid(),
            AnyVolume::Labels(v) => v.grid(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyVolume::Binary(_) => "binary",
            AnyVolume::Intensity(_) => "intensity",
            AnyVolume::Labels(_) => "labels",
        }
    }

    /// Foreground mask: binary as-is, labels where labeled, intensity where > 0.5.
    pub fn to_mask(&self) -> BinaryVolume {
        match self {
            AnyVolume::Binary(v) => v.clone(),
            AnyVolume::Intensity(v) => v.map(|&x| x > 0.5),
            AnyVolume::Labels(v) => v.foreground_mask(),
        }
    }
}

impl From<BinaryVolume> for AnyVolume {
    fn from(v: BinaryVolume) -> Self {
        AnyVolume::Binary(v)
    }
}

impl From<IntensityVolume> for AnyVolume {
    fn from(v: IntensityVolume) -> Self {
        AnyVolume::Intensity(v)
    }
}

impl From<BranchLabelVolume> for AnyVolume {
    fn from(v: BranchLabelVolume) -> Self {
        AnyVolume::Labels(v)
    }
}

/// Header facts that are not part of the volume value itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VolumeMeta {
    pub element: ElementType,
    pub pseudo_label: bool,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SaveOptions {
    /// Override the element type. Only intensity volumes accept a choice:
    /// `Short` requires every value to be an integer in `i16` range.
    pub element: Option<ElementType>,
    /// Flag a label volume as a pseudo-label export.
    pub pseudo_label: bool,
}

struct Header {
    element: ElementType,
    dims: [usize; 3],
    spacing: [f64; 3],
    orientation: AxisConvention,
    labels: bool,
    pseudo: bool,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    #[serde(rename = "type")]
    element: ElementType,
    sizes: Vec<usize>,
    spacing: Vec<f64>,
    head_axis: String,
    right_axis: String,
    encoding: String,
    endian: String,
    data_file: String,
    #[serde(default)]
    labels: bool,
    #[serde(default)]
    pseudo: bool,
}

fn is_sidecar(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn is_nrrd(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("nrrd"))
}

fn raw_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("raw")
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<AnyVolume> {
    load_volume_with_meta(path).map(|(v, _)| v)
}

pub fn load_volume_with_meta(path: impl AsRef<Path>) -> Result<(AnyVolume, VolumeMeta)> {
    let path = path.as_ref();
    let (header, payload) = if is_sidecar(path) {
        read_sidecar(path)?
    } else if is_nrrd(path) {
        read_nrrd(path)?
    } else {
        return Err(VolumeError::UnsupportedFormat(format!(
            "{}: expected .nrrd or .json",
            path.display()
        )));
    };
    let grid = Grid::new(header.dims, header.spacing, header.orientation)
        .map_err(|e| VolumeError::CorruptHeader(e.to_string()))?;
    let expected = grid.len() * header.element.size();
    if payload.len() != expected {
        return Err(VolumeError::SizeMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let meta = VolumeMeta {
        element: header.element,
        pseudo_label: header.pseudo,
    };
    Ok((decode(grid, &header, &payload)?, meta))
}

fn decode(grid: Grid, header: &Header, payload: &[u8]) -> Result<AnyVolume> {
    match header.element {
        ElementType::UChar if header.labels => {
            let data = payload
                .iter()
                .map(|&b| {
                    BranchLabel::from_u8(b)
                        .ok_or_else(|| VolumeError::InvalidPayload(format!("label value {b}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Volume::from_vec(grid, data)?.into())
        }
        ElementType::UChar if payload.iter().all(|&b| b <= 1) => {
            Ok(Volume::from_vec(grid, payload.iter().map(|&b| b == 1).collect())?.into())
        }
        ElementType::UChar => {
            Ok(Volume::from_vec(grid, payload.iter().map(|&b| b as f32).collect())?.into())
        }
        ElementType::Short => {
            let data = payload
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
                .collect();
            Ok(Volume::from_vec(grid, data)?.into())
        }
        ElementType::Float => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(Volume::from_vec(grid, data)?.into())
        }
    }
}

fn read_sidecar(path: &Path) -> Result<(Header, Vec<u8>)> {
    let text = fs::read_to_string(path)?;
    let car: Sidecar =
        serde_json::from_str(&text).map_err(|e| VolumeError::CorruptHeader(e.to_string()))?;
    if car.encoding != "raw" {
        return Err(VolumeError::UnsupportedFormat(format!(
            "encoding {:?}",
            car.encoding
        )));
    }
    if car.endian != "little" {
        return Err(VolumeError::UnsupportedFormat(format!(
            "endian {:?}",
            car.endian
        )));
    }
    let dims = triple(&car.sizes, "sizes")?;
    let spacing = triple(&car.spacing, "spacing")?;
    let orientation = orientation(&car.head_axis, &car.right_axis)?;
    let data_path = path.parent().unwrap_or(Path::new(".")).join(&car.data_file);
    let payload = fs::read(data_path)?;
    let header = Header {
        element: car.element,
        dims,
        spacing,
        orientation,
        labels: car.labels,
        pseudo: car.pseudo,
    };
    Ok((header, payload))
}

fn triple<T: Copy>(values: &[T], what: &str) -> Result<[T; 3]> {
    match values {
        &[a, b, c] => Ok([a, b, c]),
        _ => Err(VolumeError::CorruptHeader(format!(
            "{what} needs 3 entries, found {}",
            values.len()
        ))),
    }
}

fn orientation(head: &str, right: &str) -> Result<AxisConvention> {
    let head: Axis = head
        .parse()
        .map_err(|e: VolumeError| VolumeError::CorruptHeader(e.to_string()))?;
    let right: Axis = right
        .parse()
        .map_err(|e: VolumeError| VolumeError::CorruptHeader(e.to_string()))?;
    AxisConvention::new(head, right).map_err(|e| VolumeError::CorruptHeader(e.to_string()))
}

fn read_nrrd(path: &Path) -> Result<(Header, Vec<u8>)> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(b"NRRD000") {
        return Err(VolumeError::UnsupportedFormat(format!(
            "{}: missing NRRD magic",
            path.display()
        )));
    }
    // The header ends at the first empty line.
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(VolumeError::CorruptHeader(
                "header is not terminated by a blank line".into(),
            ));
        };
        let line = std::str::from_utf8(&bytes[pos..pos + nl])
            .map_err(|_| VolumeError::CorruptHeader("header is not UTF-8".into()))?
            .trim_end_matches('\r');
        pos += nl + 1;
        if line.is_empty() {
            break;
        }
        lines.push(line.to_string());
    }
    let header = parse_nrrd_header(&lines[1..])?;
    Ok((header, bytes[pos..].to_vec()))
}

fn parse_nrrd_header(lines: &[String]) -> Result<Header> {
    let mut element = None;
    let mut dimension = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut spacing: Option<[f64; 3]> = None;
    let mut encoding = None;
    let mut endian = None;
    let (mut head, mut right) = (None, None);
    let mut labels = false;
    let mut pseudo = false;

    for line in lines {
        if line.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = line.split_once(":=") {
            match key.trim() {
                "head axis" => head = Some(value.trim().to_string()),
                "right axis" => right = Some(value.trim().to_string()),
                LABELS_KEY => labels = value.trim() == LABELS_VALUE,
                PSEUDO_KEY => pseudo = value.trim() == "true",
                _ => {}
            }
            continue;
        }
        let Some((field, value)) = line.split_once(": ") else {
            return Err(VolumeError::CorruptHeader(format!(
                "malformed line {line:?}"
            )));
        };
        let value = value.trim();
        match field.trim() {
            "type" => element = Some(ElementType::parse(value)?),
            "dimension" => {
                dimension = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| VolumeError::CorruptHeader(format!("dimension {value:?}")))?,
                )
            }
            "sizes" => {
                sizes = Some(
                    value
                        .split_whitespace()
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| VolumeError::CorruptHeader(format!("sizes {value:?}")))?,
                )
            }
            "spacings" => {
                let v: Vec<f64> = value
                    .split_whitespace()
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| VolumeError::CorruptHeader(format!("spacings {value:?}")))?;
                spacing = Some(triple(&v, "spacings")?);
            }
            "space directions" => spacing = Some(parse_space_directions(value)?),
            "encoding" => encoding = Some(value.to_string()),
            "endian" => endian = Some(value.to_string()),
            "data file" | "datafile" => {
                return Err(VolumeError::UnsupportedFormat(
                    "detached NRRD payloads".into(),
                ));
            }
            _ => {}
        }
    }

    let element = element.ok_or_else(|| VolumeError::CorruptHeader("missing type".into()))?;
    match dimension {
        Some(3) => {}
        Some(d) => return Err(VolumeError::UnsupportedFormat(format!("dimension {d}"))),
        None => return Err(VolumeError::CorruptHeader("missing dimension".into())),
    }
    let sizes = sizes.ok_or_else(|| VolumeError::CorruptHeader("missing sizes".into()))?;
    let dims = triple(&sizes, "sizes")?;
    match encoding.as_deref() {
        Some("raw") => {}
        Some(other) => {
            return Err(VolumeError::UnsupportedFormat(format!(
                "encoding {other:?}"
            )))
        }
        None => return Err(VolumeError::CorruptHeader("missing encoding".into())),
    }
    match endian.as_deref() {
        Some("little") => {}
        None if element == ElementType::UChar => {}
        Some(other) => return Err(VolumeError::UnsupportedFormat(format!("endian {other:?}"))),
        None => return Err(VolumeError::CorruptHeader("missing endian".into())),
    }
    let spacing =
        spacing.ok_or_else(|| VolumeError::CorruptHeader("missing space directions".into()))?;
    let (Some(head), Some(right)) = (head, right) else {
        return Err(VolumeError::CorruptHeader(
            "missing head axis / right axis".into(),
        ));
    };
    let orientation = orientation(&head, &right)?;
    Ok(Header {
        element,
        dims,
        spacing,
        orientation,
        labels,
        pseudo,
    })
}

fn parse_space_directions(value: &str) -> Result<[f64; 3]> {
    let vectors: Vec<&str> = value.split_whitespace().collect();
    if vectors.len() != 3 {
        return Err(VolumeError::CorruptHeader(format!(
            "space directions {value:?}"
        )));
    }
    let mut spacing = [0.0; 3];
    for (axis, v) in vectors.iter().enumerate() {
        if *v == "none" {
            return Err(VolumeError::UnsupportedFormat(
                "space directions containing none".into(),
            ));
        }
        let inner = v
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| VolumeError::CorruptHeader(format!("space direction {v:?}")))?;
        let comps: Vec<f64> = inner
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| VolumeError::CorruptHeader(format!("space direction {v:?}")))?;
        let comps = triple(&comps, "space direction")?;
        for (k, &c) in comps.iter().enumerate() {
            if k != axis && c != 0.0 {
                return Err(VolumeError::UnsupportedFormat(
                    "non-diagonal space directions".into(),
                ));
            }
        }
        spacing[axis] = comps[axis];
    }
    Ok(spacing)
}

pub fn save_volume(volume: &AnyVolume, path: impl AsRef<Path>) -> Result<()> {
    save_volume_with(volume, path, SaveOptions::default())
}

pub fn save_volume_with(
    volume: &AnyVolume,
    path: impl AsRef<Path>,
    options: SaveOptions,
) -> Result<()> {
    let path = path.as_ref();
    let (element, payload) = encode(volume, options.element)?;
    let grid = volume.grid();
    let labels = matches!(volume, AnyVolume::Labels(_));
    let pseudo = options.pseudo_label && labels;
    if is_sidecar(path) {
        let raw = raw_path(path);
        let car = Sidecar {
            element,
            sizes: grid.dims().to_vec(),
            spacing: grid.spacing().to_vec(),
            head_axis: grid.orientation().head().to_string(),
            right_axis: grid.orientation().right().to_string(),
            encoding: "raw".into(),
            endian: "little".into(),
            data_file: raw
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string(),
            labels,
            pseudo,
        };
        let text = serde_json::to_string_pretty(&car).map_err(|e| VolumeError::Io(e.into()))?;
        fs::write(path, text + "\n")?;
        fs::write(raw, payload)?;
        return Ok(());
    }
    if !is_nrrd(path) {
        return Err(VolumeError::UnsupportedFormat(format!(
            "{}: expected .nrrd or .json",
            path.display()
        )));
    }
    let [nx, ny, nz] = grid.dims();
    let [sx, sy, sz] = grid.spacing();
    let mut out = Vec::with_capacity(payload.len() + 256);
    writeln!(out, "NRRD0004")?;
    writeln!(out, "type: {}", element.nrrd_name())?;
    writeln!(out, "dimension: 3")?;
    writeln!(out, "sizes: {nx} {ny} {nz}")?;
    writeln!(out, "space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})")?;
    writeln!(out, "encoding: raw")?;
    writeln!(out, "endian: little")?;
    writeln!(out, "head axis:={}", grid.orientation().head())?;
    writeln!(out, "right axis:={}", grid.orientation().right())?;
    if labels {
        writeln!(out, "{LABELS_KEY}:={LABELS_VALUE}")?;
    }
    if pseudo {
        writeln!(out, "{PSEUDO_KEY}:=true")?;
    }
    writeln!(out)?;
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

fn encode(volume: &AnyVolume, element: Option<ElementType>) -> Result<(ElementType, Vec<u8>)> {
    match volume {
        AnyVolume::Binary(v) => {
            expect_element(element, ElementType::UChar)?;
            Ok((
                ElementType::UChar,
                v.data().iter().map(|&b| b as u8).collect(),
            ))
        }
        AnyVolume::Labels(v) => {
            expect_element(element, ElementType::UChar)?;
            Ok((
                ElementType::UChar,
                v.data().iter().map(|&l| l as u8).collect(),
            ))
        }
        AnyVolume::Intensity(v) => match element.unwrap_or(ElementType::Float) {
            ElementType::Float => Ok((
                ElementType::Float,
                v.data().iter().flat_map(|x| x.to_le_bytes()).collect(),
            )),
            ElementType::Short => {
                let mut out = Vec::with_capacity(v.data().len() * 2);
                for &x in v.data() {
                    if x.fract() != 0.0 || x < i16::MIN as f32 || x > i16::MAX as f32 {
                        return Err(VolumeError::InvalidPayload(format!(
                            "{x} is not representable as short"
                        )));
                    }
                    out.extend_from_slice(&(x as i16).to_le_bytes());
                }
                Ok((ElementType::Short, out))
            }
            ElementType::UChar => Err(VolumeError::UnsupportedFormat(
                "intensity volumes are written as short or float".into(),
            )),
        },
    }
}

fn expect_element(requested: Option<ElementType>, actual: ElementType) -> Result<()> {
    match requested {
        Some(e) if e != actual => Err(VolumeError::UnsupportedFormat(format!(
            "this volume kind is always written as {}",
            actual.nrrd_name()
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, header: &str, payload: &[u8]) -> PathBuf {
        let p = dir.join(name);
        let mut bytes = header.as_bytes().to_vec();
        bytes.extend_from_slice(payload);
        fs::write(&p, bytes).unwrap();
        p
    }

    const AXES: &str = "head axis:=+z\nright axis:=-x\n";

    #[test]
    fn all_ones_cube_loads_as_binary() {
        let dir = tempfile::tempdir().unwrap();
        let header = format!(
            "NRRD0004\ntype: uchar\ndimension: 3\nsizes: 4 4 4\nspace directions: (1,0,0) (0,1,0) (0,0,1)\nencoding: raw\n{AXES}\n"
        );
        let p = write(dir.path(), "ones.nrrd", &header, &[1u8; 64]);
        match load_volume(&p).unwrap() {
            AnyVolume::Binary(v) => assert_eq!(v.count(), 64),
            other => panic!("expected binary, got {}", other.kind()),
        }
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let header = format!(
            "NRRD0004\ntype: uchar\ndimension: 3\nsizes: 2 2 2\nspace directions: (1,0,0) (0,1,0) (0,0,1)\nencoding: raw\n{AXES}\n"
        );
        let p = write(dir.path(), "short.nrrd", &header, &[0u8; 7]);
        assert!(matches!(
            load_volume(&p),
            Err(VolumeError::SizeMismatch {
                expected: 8,
                actual: 7
            })
        ));
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let base = "NRRD0004\ntype: uchar\ndimension: 3\nencoding: raw\n";
        type Check = fn(&VolumeError) -> bool;
        let cases: [(&str, Check); 6] = [
            (
                "sizes: 2 2 2\nspace directions: (1,0.5,0) (0,1,0) (0,0,1)\n",
                |e| matches!(e, VolumeError::UnsupportedFormat(_)),
            ),
            (
                "sizes: 2 2\nspace directions: (1,0,0) (0,1,0) (0,0,1)\n",
                |e| matches!(e, VolumeError::CorruptHeader(_)),
            ),
            (
                "sizes: 2 2 2\nspace directions: (1,0,0) (0,-1,0) (0,0,1)\n",
                |e| matches!(e, VolumeError::CorruptHeader(_)),
            ),
            (
                "sizes: 2 0 2\nspace directions: (1,0,0) (0,1,0) (0,0,1)\n",
                |e| matches!(e, VolumeError::CorruptHeader(_)),
            ),
            ("sizes: 2 2 2\n", |e| {
                matches!(e, VolumeError::CorruptHeader(_))
            }),
            (
                "sizes: 2 2 2\nspace directions: none (0,1,0) (0,0,1)\n",
                |e| matches!(e, VolumeError::UnsupportedFormat(_)),
            ),
        ];
        for (i, (extra, check)) in cases.iter().enumerate() {
            let p = write(
                dir.path(),
                &format!("h{i}.nrrd"),
                &format!("{base}{extra}{AXES}\n"),
                &[0u8; 8],
            );
            let err = load_volume(&p).unwrap_err();
            assert!(check(&err), "case {i}: {err}");
        }
        let gz = format!(
            "NRRD0004\ntype: uchar\ndimension: 3\nsizes: 2 2 2\nspace directions: (1,0,0) (0,1,0) (0,0,1)\nencoding: gzip\n{AXES}\n"
        );
        let p = write(dir.path(), "gz.nrrd", &gz, &[0u8; 8]);
        assert!(matches!(
            load_volume(&p),
            Err(VolumeError::UnsupportedFormat(_))
        ));
        let no_axes =
            "NRRD0004\ntype: uchar\ndimension: 3\nsizes: 2 2 2\nspace directions: (1,0,0) (0,1,0) (0,0,1)\nencoding: raw\n\n";
        let p = write(dir.path(), "noaxes.nrrd", no_axes, &[0u8; 8]);
        assert!(matches!(
            load_volume(&p),
            Err(VolumeError::CorruptHeader(_))
        ));
        let p = write(dir.path(), "x.mha", "", &[]);
        assert!(matches!(
            load_volume(&p),
            Err(VolumeError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn empty_unit_mask_has_one_zero_byte() {
        let dir = tempfile::tempdir().unwrap();
        let v = BinaryVolume::empty(Grid::unit([1, 1, 1]).unwrap());
        let p = dir.path().join("e.nrrd");
        save_volume(&v.clone().into(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.ends_with(b"\n\n\0"));
        let sc = dir.path().join("e.json");
        save_volume(&v.clone().into(), &sc).unwrap();
        assert_eq!(fs::read(dir.path().join("e.raw")).unwrap(), vec![0u8]);
        assert_eq!(load_volume(&sc).unwrap(), AnyVolume::Binary(v));
    }

    #[test]
    fn header_echoes_spacing() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new([3, 2, 2], [0.7, 0.7, 1.0], AxisConvention::default()).unwrap();
        let v = IntensityVolume::filled(g, 0.25);
        let p = dir.path().join("i.nrrd");
        save_volume(&v.clone().into(), &p).unwrap();
        let text = String::from_utf8_lossy(&fs::read(&p).unwrap()).to_string();
        assert!(
            text.contains("space directions: (0.7,0,0) (0,0.7,0) (0,0,1)\n"),
            "{text}"
        );
        assert_eq!(load_volume(&p).unwrap(), AnyVolume::Intensity(v));
    }

    #[test]
    fn labels_and_pseudo_flag() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit([2, 2, 2]).unwrap();
        let v = BranchLabelVolume::from_fn(g, |i| BranchLabel::from_u8((i % 8) as u8).unwrap());
        for name in ["l.nrrd", "l.json"] {
            let p = dir.path().join(name);
            save_volume_with(
                &v.clone().into(),
                &p,
                SaveOptions {
                    pseudo_label: true,
                    ..Default::default()
                },
            )
            .unwrap();
            let (back, meta) = load_volume_with_meta(&p).unwrap();
            assert_eq!(back, AnyVolume::Labels(v.clone()));
            assert!(meta.pseudo_label);
        }
    }

    #[test]
    fn short_requires_integers() {
        let dir = tempfile::tempdir().unwrap();
        let v = IntensityVolume::filled(Grid::unit([2, 1, 1]).unwrap(), 0.5);
        let opts = SaveOptions {
            element: Some(ElementType::Short),
            ..Default::default()
        };
        assert!(matches!(
            save_volume_with(&v.into(), dir.path().join("s.nrrd"), opts),
            Err(VolumeError::InvalidPayload(_))
        ));
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let v = BinaryVolume::empty(Grid::unit([1, 1, 1]).unwrap());
        let err = save_volume(&v.into(), "/nonexistent-dir/x/y.nrrd").unwrap_err();
        assert!(matches!(err, VolumeError::Io(_)));
    }
}
