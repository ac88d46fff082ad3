use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use super::harmonics::{harmonic_count, homogeneous_jets};

pub const DEFAULT_DIRECTIONS: usize = 2048;

/// Equal-weight direction set on the unit sphere, closed under `v -> -v`.
///
/// Directions `0..n/2` are a Fibonacci spiral on the upper hemisphere and direction
/// `i + n/2` is the antipode of direction `i`.
#[derive(Debug)]
pub struct SphereQuadrature {
    directions: Vec<[f64; 3]>,
    weights: Vec<f64>,
    tables: Mutex<HashMap<usize, Arc<HarmonicTable>>>,
}

impl Clone for SphereQuadrature {
    fn clone(&self) -> Self {
        SphereQuadrature {
            directions: self.directions.clone(),
            weights: self.weights.clone(),
            tables: Mutex::new(HashMap::new()),
        }
    }
}

impl Default for SphereQuadrature {
    fn default() -> Self {
        Self::fibonacci(DEFAULT_DIRECTIONS)
    }
}

impl SphereQuadrature {
    /// `n` is rounded up to an even count.
    pub fn fibonacci(n: usize) -> Self {
        let half = n.div_ceil(2).max(1);
        let golden = PI * (3.0 - 5f64.sqrt());
        let mut directions = Vec::with_capacity(2 * half);
        for i in 0..half {
            let z = 1.0 - (i as f64 + 0.5) / half as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            directions.push(normalize([r * phi.cos(), r * phi.sin(), z]));
        }
        for i in 0..half {
            let d = directions[i];
            directions.push([-d[0], -d[1], -d[2]]);
        }
        let w = 4.0 * PI / directions.len() as f64;
        let weights = vec![w; directions.len()];
        SphereQuadrature {
            directions,
            weights,
            tables: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the antipode of direction `i`.
    pub fn antipode(&self, i: usize) -> usize {
        let half = self.directions.len() / 2;
        if i < half {
            i + half
        } else {
            i - half
        }
    }

    /// Harmonic basis tabulated on this rule, cached per degree.
    pub fn table(&self, lmax: usize) -> Arc<HarmonicTable> {
        let mut cache = self.tables.lock().expect("harmonic table cache poisoned");
        cache
            .entry(lmax)
            .or_insert_with(|| Arc::new(HarmonicTable::build(&self.directions, lmax)))
            .clone()
    }
}

/// Per-direction basis data for support functions of degree `<= lmax`.
///
/// For every direction and harmonic `k`: the value of `Y_k`, the gradient of its
/// 1-homogeneous extension (which maps coefficients to the contact point) and the
/// tangential block `[aa, ab, bb]` of its Hessian in the frame `tangents[i]`.
#[derive(Debug)]
pub struct HarmonicTable {
    pub lmax: usize,
    pub count: usize,
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
    pub tangential_hessians: Vec<[f64; 3]>,
    pub tangents: Vec<[[f64; 3]; 2]>,
}

impl HarmonicTable {
    fn build(directions: &[[f64; 3]], lmax: usize) -> Self {
        let count = harmonic_count(lmax);
        let n = directions.len();
        let mut values = Vec::with_capacity(n * count);
        let mut gradients = Vec::with_capacity(n * count);
        let mut tangential_hessians = Vec::with_capacity(n * count);
        let mut tangents = Vec::with_capacity(n);
        for d in directions {
            let (e1, e2) = tangent_frame(*d);
            tangents.push([e1, e2]);
            for jet in homogeneous_jets(*d, lmax) {
                values.push(jet.v);
                gradients.push(jet.g);
                let quad = |a: [f64; 3], b: [f64; 3]| {
                    let mut s = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            s += a[i] * jet.h[i][j] * b[j];
                        }
                    }
                    s
                };
                tangential_hessians.push([quad(e1, e1), quad(e1, e2), quad(e2, e2)]);
            }
        }
        HarmonicTable {
            lmax,
            count,
            values,
            gradients,
            tangential_hessians,
            tangents,
        }
    }

    /// Row of basis values at direction `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.count..(i + 1) * self.count]
    }
}

pub(crate) fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub(crate) fn tangent_frame(d: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    // pick the coordinate axis least aligned with d
    let axis = if d[0].abs() <= d[1].abs() && d[0].abs() <= d[2].abs() {
        [1.0, 0.0, 0.0]
    } else if d[1].abs() <= d[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let e1 = normalize(cross(d, axis));
    let e2 = cross(d, e1);
    (e1, e2)
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_directions_and_weights() {
        let q = SphereQuadrature::fibonacci(2048);
        assert_eq!(q.len(), 2048);
        for d in q.directions() {
            assert!((dot(*d, *d).sqrt() - 1.0).abs() < 1e-12);
        }
        let total: f64 = q.weights().iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-10);
        assert!(q.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn antipodal_closure() {
        let q = SphereQuadrature::fibonacci(100);
        for i in 0..q.len() {
            let a = q.directions()[i];
            let b = q.directions()[q.antipode(i)];
            for c in 0..3 {
                assert_eq!(a[c], -b[c]);
            }
        }
    }

    #[test]
    fn odd_count_rounds_up() {
        assert_eq!(SphereQuadrature::fibonacci(7).len(), 8);
    }
}
