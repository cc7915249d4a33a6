//! C¹ bicubic Hermite interpolation on a uniform 2D grid.
//!
//! Node derivatives are centered differences (one-sided second order at the
//! outer edges). With `axis_symmetric` set, the first axis is mirrored about
//! index 0 so ∂/∂x vanishes there, which is what an axisymmetric ρ axis needs.
//! The scheme reproduces any quadratic exactly.

/// Precomputed values and node derivatives for Hermite patches.
#[derive(Debug, Clone)]
pub struct Bicubic {
    n0: usize,
    n1: usize,
    h0: f64,
    h1: f64,
    origin: [f64; 2],
    f: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fxy: Vec<f64>,
}

/// Interpolated value and first derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub d0: f64,
    pub d1: f64,
}

fn diff(v: &dyn Fn(isize) -> f64, n: usize, idx: usize, h: f64, mirror: bool) -> f64 {
    let i = idx as isize;
    if n < 2 {
        return 0.0;
    }
    if idx == 0 {
        if mirror {
            return 0.0;
        }
        if n == 2 {
            return (v(1) - v(0)) / h;
        }
        return (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h);
    }
    if idx == n - 1 {
        if n == 2 {
            return (v(1) - v(0)) / h;
        }
        return (3.0 * v(i) - 4.0 * v(i - 1) + v(i - 2)) / (2.0 * h);
    }
    (v(i + 1) - v(i - 1)) / (2.0 * h)
}

impl Bicubic {
    /// `values` is row-major with the second axis fastest.
    pub fn new(n0: usize, n1: usize, h: [f64; 2], origin: [f64; 2], values: &[f64], axis_symmetric: bool) -> Self {
        assert_eq!(values.len(), n0 * n1);
        assert!(n0 >= 2 && n1 >= 2);
        let at = |i: usize, j: usize| values[i * n1 + j];
        let mut fx = vec![0.0; values.len()];
        let mut fy = vec![0.0; values.len()];
        for i in 0..n0 {
            for j in 0..n1 {
                let p = i * n1 + j;
                fx[p] = diff(&|a| at(a as usize, j), n0, i, h[0], axis_symmetric);
                fy[p] = diff(&|b| at(i, b as usize), n1, j, h[1], false);
            }
        }
        let mut fxy = vec![0.0; values.len()];
        for i in 0..n0 {
            for j in 0..n1 {
                fxy[i * n1 + j] = diff(&|a| fy[a as usize * n1 + j], n0, i, h[0], axis_symmetric);
            }
        }
        Bicubic {
            n0,
            n1,
            h0: h[0],
            h1: h[1],
            origin,
            f: values.to_vec(),
            fx,
            fy,
            fxy,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let u = (x - self.origin[0]) / self.h0;
        let v = (y - self.origin[1]) / self.h1;
        let eps = 1e-9;
        u >= -eps && v >= -eps && u <= (self.n0 - 1) as f64 + eps && v <= (self.n1 - 1) as f64 + eps
    }

    /// Value and gradient at (x, y); coordinates are clamped into the grid.
    pub fn sample(&self, x: f64, y: f64) -> Sample {
        let u = ((x - self.origin[0]) / self.h0).clamp(0.0, (self.n0 - 1) as f64);
        let v = ((y - self.origin[1]) / self.h1).clamp(0.0, (self.n1 - 1) as f64);
        let i = (u.floor() as usize).min(self.n0 - 2);
        let j = (v.floor() as usize).min(self.n1 - 2);
        let (t, s) = (u - i as f64, v - j as f64);

        let (h00, h10, h01, h11) = basis(t);
        let (g00, g10, g01, g11) = basis(s);
        let (dh00, dh10, dh01, dh11) = basis_deriv(t);
        let (dg00, dg10, dg01, dg11) = basis_deriv(s);

        let mut value = 0.0;
        let mut du = 0.0;
        let mut dv = 0.0;
        for (a, (ha, hb, dha, dhb)) in [(0usize, (h00, h10, dh00, dh10)), (1, (h01, h11, dh01, dh11))] {
            for (b, (ga, gb, dga, dgb)) in [(0usize, (g00, g10, dg00, dg10)), (1, (g01, g11, dg01, dg11))] {
                let p = (i + a) * self.n1 + (j + b);
                // derivatives in index units
                let f = self.f[p];
                let fu = self.fx[p] * self.h0;
                let fv = self.fy[p] * self.h1;
                let fuv = self.fxy[p] * self.h0 * self.h1;
                value += f * ha * ga + fu * hb * ga + fv * ha * gb + fuv * hb * gb;
                du += f * dha * ga + fu * dhb * ga + fv * dha * gb + fuv * dhb * gb;
                dv += f * ha * dga + fu * hb * dga + fv * ha * dgb + fuv * hb * dgb;
            }
        }
        Sample {
            value,
            d0: du / self.h0,
            d1: dv / self.h1,
        }
    }
}

#[inline]
fn basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

#[inline]
fn basis_deriv(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    (6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_of(f: impl Fn(f64, f64) -> f64, n0: usize, n1: usize, h: f64, origin: [f64; 2]) -> Vec<f64> {
        let mut v = Vec::with_capacity(n0 * n1);
        for i in 0..n0 {
            for j in 0..n1 {
                v.push(f(origin[0] + i as f64 * h, origin[1] + j as f64 * h));
            }
        }
        v
    }

    proptest! {
        #[test]
        fn reproduces_quadratics(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0,
                                 d in -1.0f64..1.0, e in -1.0f64..1.0,
                                 x in 0.05f64..0.95, y in 0.05f64..0.95) {
            let f = |x: f64, y: f64| a * x * x + b * x * y + c * y * y + d * x + e * y + 0.3;
            let h = 0.1;
            let vals = grid_of(f, 11, 11, h, [0.0, 0.0]);
            let bc = Bicubic::new(11, 11, [h, h], [0.0, 0.0], &vals, false);
            let s = bc.sample(x, y);
            prop_assert!((s.value - f(x, y)).abs() < 1e-12);
            prop_assert!((s.d0 - (2.0 * a * x + b * y + d)).abs() < 1e-10);
            prop_assert!((s.d1 - (b * x + 2.0 * c * y + e)).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_is_continuous_across_cells() {
        let f = |x: f64, y: f64| (3.0 * x).sin() * (2.0 * y).cos();
        let h = 0.05;
        let vals = grid_of(f, 21, 21, h, [0.0, 0.0]);
        let bc = Bicubic::new(21, 21, [h, h], [0.0, 0.0], &vals, false);
        let x = 5.0 * h;
        let l = bc.sample(x - 1e-12, 0.31);
        let r = bc.sample(x + 1e-12, 0.31);
        assert!((l.d0 - r.d0).abs() < 1e-8);
        assert!((l.value - r.value).abs() < 1e-10);
    }

    #[test]
    fn axis_mirror_kills_radial_slope() {
        let f = |x: f64, y: f64| x * x + y;
        let h = 0.1;
        let vals = grid_of(f, 8, 8, h, [0.0, 0.0]);
        let bc = Bicubic::new(8, 8, [h, h], [0.0, 0.0], &vals, true);
        assert_eq!(bc.sample(0.0, 0.35).d0, 0.0);
    }
}
