//! Regular-grid scalar and vector fields, plus their CSV and binary dumps.
//!
//! Layout is row-major with z fastest: axis 0 is ρ (axisymmetric) or x,
//! axis 1 is y (length 1 for axisymmetric fields), axis 2 is z.
//!
//! Binary format, little-endian, 64-byte header followed by `f64` samples:
//!
//! | offset | size | content                                        |
//! |--------|------|------------------------------------------------|
//! | 0      | 3    | magic `RTG`                                    |
//! | 3      | 1    | symmetry tag: 0 axisymmetric, 1 cartesian3d    |
//! | 4      | 12   | shape, 3 × u32                                 |
//! | 16     | 24   | spacing in m, 3 × f64                          |
//! | 40     | 24   | origin in m, 3 × f64                           |
//! | 64     | 8·N  | samples                                        |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 64;
const MAGIC: &[u8; 3] = b"RTG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Axisymmetric,
    Cartesian3d,
}

impl Symmetry {
    fn tag(self) -> u8 {
        match self {
            Symmetry::Axisymmetric => 0,
            Symmetry::Cartesian3d => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Symmetry::Axisymmetric),
            1 => Ok(Symmetry::Cartesian3d),
            t => Err(Error::Format(format!("unknown symmetry tag {t}"))),
        }
    }
}

/// Samples of a scalar on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub symmetry: Symmetry,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub values: Vec<f64>,
    /// Conductor nodes (excluded from minimum searches), when known.
    pub mask: Option<Vec<bool>>,
}

impl ScalarField {
    /// Axisymmetric field over (ρ, z) with ρ starting on the axis and z on the mirror plane.
    pub fn axisymmetric(n_rho: usize, n_z: usize, h: f64, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_rho * n_z);
        ScalarField {
            symmetry: Symmetry::Axisymmetric,
            shape: [n_rho, 1, n_z],
            spacing: [h, 0.0, h],
            origin: [0.0; 3],
            values,
            mask: None,
        }
    }

    pub fn cartesian(shape: [usize; 3], spacing: [f64; 3], origin: [f64; 3], values: Vec<f64>) -> Self {
        assert_eq!(values.len(), shape[0] * shape[1] * shape[2]);
        ScalarField {
            symmetry: Symmetry::Cartesian3d,
            shape,
            spacing,
            origin,
            values,
            mask: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    /// Axisymmetric accessor (ρ index, z index).
    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.shape[2] + k]
    }

    pub fn coord(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    pub fn is_masked(&self, idx: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[idx])
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), self.values.len());
        self.mask = Some(mask);
        self
    }

    /// Same layout, values mapped pointwise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// CSV with a header row; `value_label` names the last column.
    pub fn write_csv<W: Write>(&self, mut w: W, value_label: &str) -> Result<()> {
        match self.symmetry {
            Symmetry::Axisymmetric => {
                writeln!(w, "rho_m,z_m,{value_label}")?;
                for i in 0..self.shape[0] {
                    for k in 0..self.shape[2] {
                        let c = self.coord(i, 0, k);
                        writeln!(w, "{:e},{:e},{:e}", c[0], c[2], self.at(i, k))?;
                    }
                }
            }
            Symmetry::Cartesian3d => {
                writeln!(w, "x_m,y_m,z_m,{value_label}")?;
                for i in 0..self.shape[0] {
                    for j in 0..self.shape[1] {
                        for k in 0..self.shape[2] {
                            let c = self.coord(i, j, k);
                            let v = self.values[self.index(i, j, k)];
                            writeln!(w, "{:e},{:e},{:e},{:e}", c[0], c[1], c[2], v)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[..3].copy_from_slice(MAGIC);
        header[3] = self.symmetry.tag();
        for (n, &s) in self.shape.iter().enumerate() {
            let s = u32::try_from(s).map_err(|_| Error::Format(format!("axis {n} too long")))?;
            header[4 + 4 * n..8 + 4 * n].copy_from_slice(&s.to_le_bytes());
        }
        for n in 0..3 {
            header[16 + 8 * n..24 + 8 * n].copy_from_slice(&self.spacing[n].to_le_bytes());
            header[40 + 8 * n..48 + 8 * n].copy_from_slice(&self.origin[n].to_le_bytes());
        }
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[..3] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let symmetry = Symmetry::from_tag(header[3])?;
        let mut shape = [0usize; 3];
        let mut spacing = [0f64; 3];
        let mut origin = [0f64; 3];
        for n in 0..3 {
            shape[n] = u32::from_le_bytes(header[4 + 4 * n..8 + 4 * n].try_into().unwrap()) as usize;
            spacing[n] = f64::from_le_bytes(header[16 + 8 * n..24 + 8 * n].try_into().unwrap());
            origin[n] = f64::from_le_bytes(header[40 + 8 * n..48 + 8 * n].try_into().unwrap());
        }
        let n = shape.iter().product::<usize>();
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != n * 8 {
            return Err(Error::Format(format!(
                "expected {} sample bytes, found {}",
                n * 8,
                raw.len()
            )));
        }
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ScalarField {
            symmetry,
            shape,
            spacing,
            origin,
            values,
            mask: None,
        })
    }
}

/// Per-axis components sharing one grid layout: (E_ρ, E_z) for axisymmetric
/// fields, (E_x, E_y, E_z) for Cartesian ones.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub symmetry: Symmetry,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn magnitude_squared(&self) -> ScalarField {
        let n = self.components[0].len();
        let values = (0..n)
            .map(|p| self.components.iter().map(|c| c[p] * c[p]).sum())
            .collect();
        ScalarField {
            symmetry: self.symmetry,
            shape: self.shape,
            spacing: self.spacing,
            origin: self.origin,
            values,
            mask: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_64_bytes() {
        let f = ScalarField::axisymmetric(3, 4, 5e-8, (0..12).map(f64::from).collect());
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 12 * 8);
        assert_eq!(&buf[..3], b"RTG");
        assert_eq!(buf[3], 0);
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 4);
    }

    #[test]
    fn truncated_file_rejected() {
        let f = ScalarField::axisymmetric(2, 2, 1.0, vec![0.0; 4]);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(ScalarField::read_binary(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let f = ScalarField::axisymmetric(2, 2, 1e-6, vec![0.0, 1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf, "phi_V").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "rho_m,z_m,phi_V");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("1e-6,1e-6,3e0"));
    }

    proptest! {
        #[test]
        fn binary_round_trip(nx in 1usize..6, ny in 1usize..4, nz in 1usize..6,
                             h in 1e-9f64..1e-5, ox in -1e-5f64..1e-5, seed in 0u64..1000) {
            let values: Vec<f64> = (0..nx * ny * nz)
                .map(|p| ((p as u64 * 2654435761 + seed) % 1000) as f64 * 1.37e-3 - 0.5)
                .collect();
            let f = ScalarField::cartesian([nx, ny, nz], [h, 2.0 * h, h], [ox, 0.0, 0.0], values);
            let mut buf = Vec::new();
            f.write_binary(&mut buf).unwrap();
            let g = ScalarField::read_binary(&buf[..]).unwrap();
            prop_assert_eq!(f, g);
        }
    }
}
