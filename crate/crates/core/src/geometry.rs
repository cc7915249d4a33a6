//! Device geometry: disk, stem, lead, optional compensation pad, and the
//! simulation domain that encloses them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empty space kept above the disk top surface, m.
pub const MIN_HEADROOM: f64 = 8e-6;

/// A pad patterned above the lead, separated by a thin insulating gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompPad {
    /// Width across the lead direction, m.
    pub width: f64,
    /// Gap between the lead top and the pad underside, m.
    pub gap_above_lead: f64,
    /// Pad voltage, V.
    pub voltage: f64,
    /// Pad thickness, m.
    #[serde(default = "default_thickness")]
    pub thickness: f64,
}

fn default_thickness() -> f64 {
    50e-9
}

/// A conducting disk of radius `disk_radius` whose underside sits
/// `disk_height` above the grounded mirror plane z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskGeometry {
    pub disk_radius: f64,
    pub disk_height: f64,
    pub disk_thickness: f64,
    pub stem_radius: f64,
    pub lead_width: f64,
    /// Height of the lead top surface above the mirror, m.
    pub lead_height: f64,
    pub lead_thickness: f64,
    pub comp_pad: Option<CompPad>,
    pub domain_radius: f64,
    pub domain_height: f64,
}

impl DiskGeometry {
    /// Disk of radius `r` at height `d` with the default 50 nm thickness, a
    /// 1 μm lead whose top is 0.25 μm above the mirror, a 0.5 μm stem, and
    /// the smallest domain satisfying the closure rule.
    pub fn new(r: f64, d: f64) -> Self {
        let thickness = 50e-9;
        let extent = Self::min_extent(r, d, thickness);
        DiskGeometry {
            disk_radius: r,
            disk_height: d,
            disk_thickness: thickness,
            stem_radius: 0.5e-6,
            lead_width: 1e-6,
            lead_height: 0.25e-6,
            lead_thickness: 50e-9,
            comp_pad: None,
            domain_radius: extent,
            domain_height: extent,
        }
    }

    /// Default domain extent (radius and height). Validation only demands
    /// max(2r, 10d) plus headroom; 4r keeps closure error at the trap below 1%.
    pub fn min_extent(r: f64, d: f64, thickness: f64) -> f64 {
        (4.0 * r).max(10.0 * d).max(d + thickness + MIN_HEADROOM)
    }

    pub fn without_lead(mut self) -> Self {
        self.lead_width = 0.0;
        self.stem_radius = 0.0;
        self.comp_pad = None;
        self
    }

    pub fn has_lead(&self) -> bool {
        self.lead_width > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("disk_radius", self.disk_radius),
            ("disk_height", self.disk_height),
            ("disk_thickness", self.disk_thickness),
            ("domain_radius", self.domain_radius),
            ("domain_height", self.domain_height),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("stem_radius", self.stem_radius),
            ("lead_width", self.lead_width),
            ("lead_height", self.lead_height),
            ("lead_thickness", self.lead_thickness),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        let d = self.disk_height;
        let r = self.disk_radius;
        if self.domain_height <= d + self.disk_thickness {
            return Err(Error::invalid("domain_height", "must exceed the disk top"));
        }
        if self.domain_radius <= r {
            return Err(Error::invalid("domain_radius", "must exceed disk_radius"));
        }
        let need = (2.0 * r).max(10.0 * d);
        let tol = 1e-12;
        if self.domain_radius < need * (1.0 - tol) {
            return Err(Error::invalid(
                "domain_radius",
                format!("{:.3e} m is below max(2r, 10d) = {need:.3e} m", self.domain_radius),
            ));
        }
        let need_h = need.max(d + self.disk_thickness + MIN_HEADROOM);
        if self.domain_height < need_h * (1.0 - tol) {
            return Err(Error::invalid(
                "domain_height",
                format!("{:.3e} m is below the closure minimum {need_h:.3e} m", self.domain_height),
            ));
        }
        if self.has_lead() && self.lead_height >= d {
            return Err(Error::invalid("lead_height", "lead must sit below the disk underside"));
        }
        if let Some(pad) = self.comp_pad {
            if !(pad.width > 0.0 && pad.gap_above_lead > 0.0 && pad.thickness > 0.0) {
                return Err(Error::invalid("comp_pad", "width, gap and thickness must be positive"));
            }
            if self.lead_height + pad.gap_above_lead + pad.thickness >= d {
                return Err(Error::invalid("comp_pad", "pad must sit below the disk underside"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_domain_closure() {
        let g = DiskGeometry::new(20e-6, 0.6e-6);
        assert!((g.domain_radius - 80e-6).abs() < 1e-15);
        assert!((g.domain_height - 80e-6).abs() < 1e-15);
        g.validate().unwrap();
        // small disks are bounded by the headroom rule
        let small = DiskGeometry::new(1e-6, 0.6e-6);
        assert!((small.domain_height - 8.65e-6).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut g = DiskGeometry::new(10e-6, 0.6e-6);
        g.disk_radius = -1.0;
        assert!(g.validate().is_err());
        let mut g = DiskGeometry::new(10e-6, 0.6e-6);
        g.domain_radius = 15e-6;
        assert!(g.validate().is_err());
        let mut g = DiskGeometry::new(10e-6, 0.6e-6);
        g.lead_height = 0.7e-6;
        assert!(g.validate().is_err());
    }
}
