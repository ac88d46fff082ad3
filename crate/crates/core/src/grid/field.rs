use super::GridSpec;

/// Normal components on every face of a grid (entries off the domain stay zero).
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    values: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &GridSpec) -> Self {
        FaceField {
            values: vec![0.0; grid.face_count()],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        FaceField { values }
    }

    /// Samples `f` at face centres: each face takes the component of `f` along its axis.
    pub fn sample(grid: &GridSpec, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let values = (0..grid.face_count())
            .map(|face| {
                let (axis, _) = grid.face_axis_ijk(face);
                f(grid.face_center(face))[axis]
            })
            .collect();
        FaceField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        FaceField {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &FaceField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One vector per occupied cell, in the domain's cell order.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    values: Vec<[f64; 3]>,
}

impl CellField {
    pub fn zeros(cells: usize) -> Self {
        CellField {
            values: vec![[0.0; 3]; cells],
        }
    }

    pub fn from_vec(values: Vec<[f64; 3]>) -> Self {
        CellField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [[f64; 3]] {
        &mut self.values
    }

    /// `sum |u|^2` over cells (multiply by the cell volume for the L2 norm squared).
    pub fn sum_sq(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}
