//! Correspondence data for one view pair, its centering, and the JSON file
//! format.
//!
//! The file is a single JSON object:
//!
//! ```json
//! {
//!   "pixels":      [[u1, v1, u2, v2], ...],
//!   "normals":     [[n1x, n1y, n1z, n2x, n2y, n2z, u1, v1, u2, v2], ...],
//!   "reflections": [[n1x, n1y, n1z, n2x, n2y, n2z], ...],
//!   "centered":    false
//! }
//! ```

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UnitVec3;

/// Normals off unit length by more than this are renormalized on load.
pub const UNIT_WARN_TOL: f64 = 1e-6;
/// Normals off unit length by more than this are rejected on load.
pub const UNIT_REJECT_TOL: f64 = 1e-3;

/// Matched image locations of the same surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCorr {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl PixelCorr {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        Self { u1, v1, u2, v2 }
    }
}

/// Observed (GBR-distorted) normals at matched image locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalCorr {
    pub n1: UnitVec3,
    pub n2: UnitVec3,
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl NormalCorr {
    pub fn new(n1: UnitVec3, n2: UnitVec3) -> Self {
        Self { n1, n2, u1: 0.0, v1: 0.0, u2: 0.0, v2: 0.0 }
    }

    pub fn with_pixels(mut self, u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        self.u1 = u1;
        self.v1 = v1;
        self.u2 = u2;
        self.v2 = v2;
        self
    }

    /// The same correspondence seen from the other view.
    pub fn swapped(&self) -> Self {
        Self {
            n1: self.n2,
            n2: self.n1,
            u1: self.u2,
            v1: self.v2,
            u2: self.u1,
            v2: self.v1,
        }
    }
}

/// Reflectance-map normals whose reflected rays come from the same world
/// direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionCorr {
    pub n1: UnitVec3,
    pub n2: UnitVec3,
}

impl ReflectionCorr {
    pub fn new(n1: UnitVec3, n2: UnitVec3) -> Self {
        Self { n1, n2 }
    }
}

/// All correspondences of one view pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pixels: Vec<PixelCorr>,
    pub normals: Vec<NormalCorr>,
    pub reflections: Vec<ReflectionCorr>,
    /// Set once pixel coordinates have been shifted to zero mean per view.
    pub centered: bool,
}

/// Per-view mean image location removed by [`center`]: `(u1, v1, u2, v2)`.
pub type CenterOffsets = [f64; 4];

impl CorrespondenceSet {
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty() && self.normals.is_empty() && self.reflections.is_empty()
    }

    /// The pair seen with views 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pixels: self
                .pixels
                .iter()
                .map(|p| PixelCorr::new(p.u2, p.v2, p.u1, p.v1))
                .collect(),
            normals: self.normals.iter().map(NormalCorr::swapped).collect(),
            reflections: self
                .reflections
                .iter()
                .map(|r| ReflectionCorr::new(r.n2, r.n1))
                .collect(),
            centered: self.centered,
        }
    }

    /// Keeps only the entries whose mask value is `true`.
    pub fn filtered(&self, pixels: &[bool], normals: &[bool], reflections: &[bool]) -> Self {
        fn pick<T: Copy>(v: &[T], m: &[bool]) -> Vec<T> {
            v.iter().zip(m).filter(|(_, &k)| k).map(|(x, _)| *x).collect()
        }
        Self {
            pixels: pick(&self.pixels, pixels),
            normals: pick(&self.normals, normals),
            reflections: pick(&self.reflections, reflections),
            centered: false,
        }
    }

    /// Mean pixel location per view.
    pub fn pixel_means(&self) -> Option<CenterOffsets> {
        let n = self.pixels.len();
        if n == 0 {
            return None;
        }
        let mut m = [0.0; 4];
        for p in &self.pixels {
            m[0] += p.u1;
            m[1] += p.v1;
            m[2] += p.u2;
            m[3] += p.v2;
        }
        Some(m.map(|x| x / n as f64))
    }

    /// Shifts every stored pixel coordinate by `-offsets`.
    pub fn shifted(&self, offsets: &CenterOffsets) -> Self {
        let [du1, dv1, du2, dv2] = *offsets;
        Self {
            pixels: self
                .pixels
                .iter()
                .map(|p| PixelCorr::new(p.u1 - du1, p.v1 - dv1, p.u2 - du2, p.v2 - dv2))
                .collect(),
            normals: self
                .normals
                .iter()
                .map(|c| c.with_pixels(c.u1 - du1, c.v1 - dv1, c.u2 - du2, c.v2 - dv2))
                .collect(),
            reflections: self.reflections.clone(),
            centered: self.centered,
        }
    }
}

/// Translates the pixel coordinates so that each view has zero mean over the
/// pixel correspondences. Normal correspondences shift by the same offsets.
///
/// A set already flagged as centered is returned unchanged with zero offsets.
pub fn center(set: &CorrespondenceSet) -> Result<(CorrespondenceSet, CenterOffsets)> {
    let offsets = set.pixel_means().ok_or(Error::EmptySet)?;
    if set.centered {
        return Ok((set.clone(), [0.0; 4]));
    }
    let mut out = set.shifted(&offsets);
    out.centered = true;
    Ok((out, offsets))
}

#[derive(Serialize, Deserialize)]
struct RawSet {
    #[serde(default)]
    pixels: Vec<Vec<f64>>,
    #[serde(default)]
    normals: Vec<Vec<f64>>,
    #[serde(default)]
    reflections: Vec<Vec<f64>>,
    #[serde(default)]
    centered: bool,
}

fn field_err(field: String, message: impl Into<String>) -> Error {
    Error::InvalidField { field, message: message.into() }
}

fn check_len(row: &[f64], want: usize, field: &str, i: usize) -> Result<()> {
    if row.len() != want {
        return Err(field_err(
            format!("{field}[{i}]"),
            format!("expected {want} numbers, got {}", row.len()),
        ));
    }
    if let Some(k) = row.iter().position(|x| !x.is_finite()) {
        return Err(field_err(format!("{field}[{i}][{k}]"), "not finite"));
    }
    Ok(())
}

fn unit_from(xyz: &[f64], field: String) -> Result<UnitVec3> {
    let v = Vector3::new(xyz[0], xyz[1], xyz[2]);
    let len = v.norm();
    let dev = (len - 1.0).abs();
    if dev > UNIT_REJECT_TOL {
        return Err(field_err(field, format!("normal has length {len}, not unit")));
    }
    if v.z <= 0.0 {
        return Err(field_err(field, format!("normal z = {} is not front-facing", v.z)));
    }
    if dev > UNIT_WARN_TOL {
        log::warn!("{field}: normal length {len} renormalized");
        return UnitVec3::new(v);
    }
    // Within tolerance: keep the stored numbers bit-exact.
    Ok(UnitVec3::new_unchecked(v))
}

impl CorrespondenceSet {
    /// Parses the JSON document format described in the module docs.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawSet = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;

        let mut pixels = Vec::with_capacity(raw.pixels.len());
        for (i, row) in raw.pixels.iter().enumerate() {
            check_len(row, 4, "pixels", i)?;
            pixels.push(PixelCorr::new(row[0], row[1], row[2], row[3]));
        }
        let mut normals = Vec::with_capacity(raw.normals.len());
        for (i, row) in raw.normals.iter().enumerate() {
            check_len(row, 10, "normals", i)?;
            let n1 = unit_from(&row[0..3], format!("normals[{i}].n1"))?;
            let n2 = unit_from(&row[3..6], format!("normals[{i}].n2"))?;
            normals.push(NormalCorr::new(n1, n2).with_pixels(row[6], row[7], row[8], row[9]));
        }
        let mut reflections = Vec::with_capacity(raw.reflections.len());
        for (i, row) in raw.reflections.iter().enumerate() {
            check_len(row, 6, "reflections", i)?;
            let n1 = unit_from(&row[0..3], format!("reflections[{i}].n1"))?;
            let n2 = unit_from(&row[3..6], format!("reflections[{i}].n2"))?;
            reflections.push(ReflectionCorr::new(n1, n2));
        }
        Ok(Self { pixels, normals, reflections, centered: raw.centered })
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawSet {
            pixels: self.pixels.iter().map(|p| vec![p.u1, p.v1, p.u2, p.v2]).collect(),
            normals: self
                .normals
                .iter()
                .map(|c| {
                    let mut row = Vec::with_capacity(10);
                    row.extend(c.n1.to_array());
                    row.extend(c.n2.to_array());
                    row.extend([c.u1, c.v1, c.u2, c.v2]);
                    row
                })
                .collect(),
            reflections: self
                .reflections
                .iter()
                .map(|c| {
                    let mut row = Vec::with_capacity(6);
                    row.extend(c.n1.to_array());
                    row.extend(c.n2.to_array());
                    row
                })
                .collect(),
            centered: self.centered,
        };
        serde_json::to_string_pretty(&raw).expect("plain numeric data serializes")
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<CorrespondenceSet> {
    CorrespondenceSet::from_json_str(&fs::read_to_string(path)?)
}

pub fn save(set: &CorrespondenceSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, set.to_json_string())?;
    Ok(())
}

impl Serialize for CorrespondenceSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: serde_json::Value =
            serde_json::from_str(&self.to_json_string()).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CorrespondenceSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        CorrespondenceSet::from_json_str(&v.to_string()).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn unit(x: f64, y: f64, z: f64) -> UnitVec3 {
        UnitVec3::from_xyz(x, y, z).unwrap()
    }

    #[test]
    fn center_single() {
        let set = CorrespondenceSet {
            pixels: vec![PixelCorr::new(3.0, 4.0, 1.0, 2.0)],
            ..Default::default()
        };
        let (c, off) = center(&set).unwrap();
        assert_eq!(off, [3.0, 4.0, 1.0, 2.0]);
        assert_eq!(c.pixels[0], PixelCorr::new(0.0, 0.0, 0.0, 0.0));
        assert!(c.centered);
    }

    #[test]
    fn center_already_centered_is_noop() {
        let set = CorrespondenceSet {
            pixels: vec![PixelCorr::new(1.0, -1.0, 2.0, 0.5), PixelCorr::new(-1.0, 1.0, -2.0, -0.5)],
            ..Default::default()
        };
        let (c, off) = center(&set).unwrap();
        assert_eq!(off, [0.0; 4]);
        assert_eq!(c.pixels, set.pixels);
        let (c2, off2) = center(&c).unwrap();
        assert_eq!(off2, [0.0; 4]);
        assert_eq!(c2, c);
    }

    #[test]
    fn center_empty_is_error() {
        assert!(matches!(center(&CorrespondenceSet::default()), Err(Error::EmptySet)));
    }

    #[test]
    fn center_random_ten() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut set = CorrespondenceSet::default();
        for _ in 0..10 {
            set.pixels.push(PixelCorr::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ));
        }
        set.normals.push(NormalCorr::new(unit(0.0, 0.0, 1.0), unit(0.1, 0.0, 1.0)).with_pixels(1.0, 2.0, 3.0, 4.0));
        let (c, off) = center(&set).unwrap();
        // Arithmetic-mean oracle.
        let mean = |f: fn(&PixelCorr) -> f64| c.pixels.iter().map(f).sum::<f64>() / 10.0;
        assert!(mean(|p| p.u1).abs() < 1e-12);
        assert!(mean(|p| p.v1).abs() < 1e-12);
        assert!(mean(|p| p.u2).abs() < 1e-12);
        assert!(mean(|p| p.v2).abs() < 1e-12);
        assert_eq!(c.normals[0].u1, 1.0 - off[0]);
        assert_eq!(c.normals[0].v2, 4.0 - off[3]);
        assert_eq!(c.normals[0].n1, set.normals[0].n1);
    }

    #[test]
    fn load_rejects_short_normal() {
        let s = r#"{"pixels": [], "normals": [[0,0,0.5, 0,0,1, 0,0,0,0]], "reflections": [], "centered": false}"#;
        let err = CorrespondenceSet::from_json_str(s).unwrap_err();
        assert!(matches!(err, Error::InvalidField { ref field, .. } if field == "normals[0].n1"), "{err}");
    }

    #[test]
    fn load_renormalizes_slightly_off_normal() {
        let s = r#"{"reflections": [[0,0,1.0005, 0,0.6,0.8]]}"#;
        let set = CorrespondenceSet::from_json_str(s).unwrap();
        assert_eq!(set.reflections[0].n1.to_array(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn load_empty_lists() {
        let s = r#"{"pixels": [], "normals": [], "reflections": [], "centered": false}"#;
        let set = CorrespondenceSet::from_json_str(s).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn load_reports_position() {
        let err = CorrespondenceSet::from_json_str("{\n  \"pixels\": [[1, 2, 3,]]\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let err = CorrespondenceSet::from_json_str(r#"{"pixels": [[1, 2, 3]]}"#).unwrap_err();
        assert!(err.to_string().contains("pixels[0]"));
    }

    fn arb_unit() -> impl Strategy<Value = UnitVec3> {
        (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64).prop_map(|(x, y, z)| unit(x, y, z))
    }

    fn arb_set() -> impl Strategy<Value = CorrespondenceSet> {
        let px = prop::collection::vec(
            prop::array::uniform4(-10.0..10.0f64).prop_map(|a| PixelCorr::new(a[0], a[1], a[2], a[3])),
            0..6,
        );
        let nm = prop::collection::vec(
            (arb_unit(), arb_unit(), prop::array::uniform4(-2.0..2.0f64))
                .prop_map(|(a, b, p)| NormalCorr::new(a, b).with_pixels(p[0], p[1], p[2], p[3])),
            0..6,
        );
        let rf = prop::collection::vec((arb_unit(), arb_unit()).prop_map(|(a, b)| ReflectionCorr::new(a, b)), 0..6);
        (px, nm, rf, any::<bool>()).prop_map(|(pixels, normals, reflections, centered)| CorrespondenceSet {
            pixels,
            normals,
            reflections,
            centered,
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_exact(set in arb_set()) {
            let back = CorrespondenceSet::from_json_str(&set.to_json_string()).unwrap();
            prop_assert_eq!(back, set);
        }

        #[test]
        fn center_is_idempotent(mut set in arb_set()) {
            set.centered = false;
            prop_assume!(!set.pixels.is_empty());
            let (once, _) = center(&set).unwrap();
            let (twice, _) = center(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.json");
        let set = CorrespondenceSet {
            pixels: vec![PixelCorr::new(0.1, 0.2, 0.3, 0.4)],
            normals: vec![NormalCorr::new(unit(0.2, 0.1, 1.0), unit(0.0, 0.3, 0.9))],
            reflections: vec![ReflectionCorr::new(unit(0.0, 0.0, 1.0), unit(0.5, 0.5, 0.5))],
            centered: true,
        };
        save(&set, &path).unwrap();
        assert_eq!(load(&path).unwrap(), set);
    }
}
