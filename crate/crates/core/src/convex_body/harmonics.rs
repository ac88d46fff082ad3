//! Real spherical harmonics evaluated through Cartesian solid-harmonic recurrences.
//!
//! The recurrences are generic over [`Scalar`] so the same code produces plain values
//! (`f64`) and second-order jets ([`Jet2`]) of the 1-homogeneous extension
//! `H(x) = |x| h(x/|x|)` used by the convexity certificate and the contact-point map.
//!
//! Harmonics are orthonormal on the unit sphere without the Condon-Shortley phase.
//! Index layout: `k = l*l + l + m` for `m in -l..=l`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
}

/// Number of real harmonics up to and including degree `lmax`.
pub fn harmonic_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

pub fn harmonic_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

/// Inverse of [`harmonic_index`].
pub fn degree_order(k: usize) -> (usize, i64) {
    let l = (k as f64).sqrt() as usize;
    let l = if (l + 1) * (l + 1) <= k { l + 1 } else { l };
    (l, k as i64 - (l * l + l) as i64)
}

fn factorial_ratio(lo: usize, hi: usize) -> f64 {
    // (lo)! / (hi)! with lo <= hi
    (lo + 1..=hi).fold(1.0, |acc, n| acc / n as f64)
}

fn normalization(l: usize, m: usize) -> f64 {
    let base = (2 * l + 1) as f64 / (4.0 * PI) * factorial_ratio(l - m, l + m);
    if m == 0 {
        base.sqrt()
    } else {
        (2.0 * base).sqrt()
    }
}

/// Regular solid harmonics `r^l Y_lm(x/r)` for all `l <= lmax`.
///
/// `r2` must equal `x*x + y*y + z*z`; it is passed in so callers on the unit sphere can
/// supply an exact one.
pub fn solid_harmonics<T: Scalar>(x: T, y: T, z: T, r2: T, lmax: usize) -> Vec<T> {
    let mut out = vec![T::constant(0.0); harmonic_count(lmax)];
    // cos/sin parts of (x + iy)^m
    let mut cm = T::constant(1.0);
    let mut sm = T::constant(0.0);
    let mut double_factorial = 1.0;
    for m in 0..=lmax {
        if m > 0 {
            let c_next = x * cm - y * sm;
            let s_next = x * sm + y * cm;
            cm = c_next;
            sm = s_next;
            double_factorial *= (2 * m - 1) as f64;
        }
        let mut prev2 = T::constant(0.0);
        let mut prev1 = T::constant(double_factorial);
        for l in m..=lmax {
            let pi_lm = if l == m {
                prev1
            } else if l == m + 1 {
                let v = z * prev1 * ((2 * m + 1) as f64);
                prev2 = prev1;
                prev1 = v;
                v
            } else {
                let v = (z * prev1 * ((2 * l - 1) as f64) - r2 * prev2 * ((l + m - 1) as f64))
                    * (1.0 / (l - m) as f64);
                prev2 = prev1;
                prev1 = v;
                v
            };
            let norm = normalization(l, m);
            if m == 0 {
                out[harmonic_index(l, 0)] = pi_lm * norm;
            } else {
                out[harmonic_index(l, m as i64)] = pi_lm * cm * norm;
                out[harmonic_index(l, -(m as i64))] = pi_lm * sm * norm;
            }
        }
    }
    out
}

/// Real spherical harmonics at a unit direction.
pub fn spherical_harmonics(dir: [f64; 3], lmax: usize) -> Vec<f64> {
    solid_harmonics(dir[0], dir[1], dir[2], 1.0, lmax)
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
}

impl Jet2 {
    pub fn variable(value: f64, axis: usize) -> Self {
        let mut g = [0.0; 3];
        g[axis] = 1.0;
        Jet2 {
            v: value,
            g,
            h: [[0.0; 3]; 3],
        }
    }

    /// Chain rule for a scalar function with value `f`, first derivative `df` and second
    /// derivative `d2f` at `self.v`.
    pub fn map(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Jet2 {
            v: f,
            g: [0.0; 3],
            h: [[0.0; 3]; 3],
        };
        for i in 0..3 {
            out.g[i] = df * self.g[i];
            for j in 0..3 {
                out.h[i][j] = df * self.h[i][j] + d2f * self.g[i] * self.g[j];
            }
        }
        out
    }

    pub fn powf(self, p: f64) -> Self {
        let s = self.v;
        self.map(
            s.powf(p),
            p * s.powf(p - 1.0),
            p * (p - 1.0) * s.powf(p - 2.0),
        )
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, rhs: Jet2) -> Jet2 {
        self.v += rhs.v;
        for i in 0..3 {
            self.g[i] += rhs.g[i];
            for j in 0..3 {
                self.h[i][j] += rhs.h[i][j];
            }
        }
        self
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self * -1.0
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(mut self, c: f64) -> Jet2 {
        self.v *= c;
        for i in 0..3 {
            self.g[i] *= c;
            for j in 0..3 {
                self.h[i][j] *= c;
            }
        }
        self
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        let mut out = Jet2 {
            v: self.v * rhs.v,
            g: [0.0; 3],
            h: [[0.0; 3]; 3],
        };
        for i in 0..3 {
            out.g[i] = self.v * rhs.g[i] + rhs.v * self.g[i];
            for j in 0..3 {
                out.h[i][j] = self.v * rhs.h[i][j]
                    + rhs.v * self.h[i][j]
                    + self.g[i] * rhs.g[j]
                    + rhs.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64) -> Self {
        Jet2 {
            v: c,
            g: [0.0; 3],
            h: [[0.0; 3]; 3],
        }
    }
}

/// Jets of the 1-homogeneous extensions `|x| Y_lm(x/|x|)` at a unit direction.
pub fn homogeneous_jets(dir: [f64; 3], lmax: usize) -> Vec<Jet2> {
    let x = Jet2::variable(dir[0], 0);
    let y = Jet2::variable(dir[1], 1);
    let z = Jet2::variable(dir[2], 2);
    let r2 = x * x + y * y + z * z;
    let solid = solid_harmonics(x, y, z, r2, lmax);
    let mut out = Vec::with_capacity(solid.len());
    for l in 0..=lmax {
        let radial = r2.powf((1.0 - l as f64) / 2.0);
        for m in -(l as i64)..=(l as i64) {
            out.push(solid[harmonic_index(l, m)] * radial);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fibonacci(n: usize) -> Vec<[f64; 3]> {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                [r * phi.cos(), r * phi.sin(), z]
            })
            .collect()
    }

    #[test]
    fn index_roundtrip() {
        for k in 0..harmonic_count(12) {
            let (l, m) = degree_order(k);
            assert_eq!(harmonic_index(l, m), k);
        }
    }

    #[test]
    fn low_degree_closed_forms() {
        let d = [0.48, -0.6, 0.64];
        let y = spherical_harmonics(d, 2);
        let c0 = 0.5 / PI.sqrt();
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((y[0] - c0).abs() < 1e-14);
        assert!((y[harmonic_index(1, 1)] - c1 * d[0]).abs() < 1e-14);
        assert!((y[harmonic_index(1, -1)] - c1 * d[1]).abs() < 1e-14);
        assert!((y[harmonic_index(1, 0)] - c1 * d[2]).abs() < 1e-14);
        let c20 = (5.0 / (16.0 * PI)).sqrt();
        assert!((y[harmonic_index(2, 0)] - c20 * (3.0 * d[2] * d[2] - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_on_dense_rule() {
        let n = 40_000;
        let pts = fibonacci(n);
        let lmax = 4;
        let kk = harmonic_count(lmax);
        let mut gram = vec![0.0; kk * kk];
        for p in &pts {
            let y = spherical_harmonics(*p, lmax);
            for a in 0..kk {
                for b in 0..kk {
                    gram[a * kk + b] += y[a] * y[b] * 4.0 * PI / n as f64;
                }
            }
        }
        for a in 0..kk {
            for b in 0..kk {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram[a * kk + b] - expect).abs() < 2e-3,
                    "{a} {b} {}",
                    gram[a * kk + b]
                );
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let lmax = 5;
        let d = [0.3, 0.5, (1.0f64 - 0.34).sqrt()];
        let jets = homogeneous_jets(d, lmax);
        let ext = |p: [f64; 3]| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            let y = spherical_harmonics([p[0] / r, p[1] / r, p[2] / r], lmax);
            y.into_iter().map(|v| v * r).collect::<Vec<_>>()
        };
        let eps = 1e-4;
        for axis in 0..3 {
            let mut p = d;
            p[axis] += eps;
            let plus = ext(p);
            p[axis] -= 2.0 * eps;
            let minus = ext(p);
            let base = ext(d);
            for k in 0..jets.len() {
                let g = (plus[k] - minus[k]) / (2.0 * eps);
                let h = (plus[k] - 2.0 * base[k] + minus[k]) / (eps * eps);
                assert!((jets[k].v - base[k]).abs() < 1e-12);
                assert!((jets[k].g[axis] - g).abs() < 1e-6, "k={k} axis={axis}");
                assert!(
                    (jets[k].h[axis][axis] - h).abs() < 1e-4,
                    "k={k} axis={axis}"
                );
            }
        }
    }
}
