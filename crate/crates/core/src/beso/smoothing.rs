use crate::fem::Mesh;
use crate::fvsa::{SensitivityVector, Status};

/// Conic sensitivity filter with weights `max(0, r - distance)` between centroids.
#[derive(Debug, Clone)]
pub struct ConicFilter {
    weights: Vec<Vec<(usize, f64)>>,
}

impl ConicFilter {
    /// Precomputes neighbour weights. A radius of zero (or less) gives the identity.
    pub fn new(mesh: &Mesh, radius: f64) -> Self {
        let n = mesh.n_elements();
        if !(radius > 0.0) {
            return Self { weights: (0..n).map(|e| vec![(e, 1.0)]).collect() };
        }
        let ri = (radius / mesh.elem_w()).ceil() as isize;
        let rj = (radius / mesh.elem_h()).ceil() as isize;
        let weights = (0..n)
            .map(|e| {
                let (i, j) = mesh.element_cell(e);
                let (cx, cy) = mesh.centroid(e);
                let mut w = Vec::new();
                for di in -ri..=ri {
                    for dj in -rj..=rj {
                        let (a, b) = (i as isize + di, j as isize + dj);
                        if a < 0 || b < 0 {
                            continue;
                        }
                        if let Some(o) = mesh.element_at(a as usize, b as usize) {
                            let (ox, oy) = mesh.centroid(o);
                            let d = ((cx - ox).powi(2) + (cy - oy).powi(2)).sqrt();
                            if radius > d {
                                w.push((o, radius - d));
                            }
                        }
                    }
                }
                w.sort_by_key(|&(o, _)| o);
                w
            })
            .collect();
        Self { weights }
    }

    /// Weighted averages over unmasked neighbours; masked entries pass through.
    pub fn apply(&self, s: &SensitivityVector) -> SensitivityVector {
        let mut out = s.clone();
        for (e, w) in self.weights.iter().enumerate() {
            if s.is_masked(e) {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &(o, wt) in w {
                if !s.is_masked(o) {
                    num += wt * s.alpha[o];
                    den += wt;
                }
            }
            out.alpha[e] = num / den;
            out.status[e] = Status::Computed;
        }
        out
    }
}

/// Averages each sensitivity vector with the previous blended one.
#[derive(Debug, Clone, Default)]
pub struct Momentum {
    buffer: Option<Vec<f64>>,
}

impl Momentum {
    pub fn new() -> Self {
        Self::default()
    }

    /// First call passes through; afterwards `(α̂ + previous)/2`. Masked entries pass
    /// through and leave zero in the buffer.
    pub fn blend(&mut self, s: &SensitivityVector) -> SensitivityVector {
        let mut out = s.clone();
        if let Some(prev) = &self.buffer {
            for e in 0..s.len() {
                if !s.is_masked(e) {
                    out.alpha[e] = 0.5 * (s.alpha[e] + prev[e]);
                }
            }
        }
        self.buffer = Some((0..s.len()).map(|e| if s.is_masked(e) { 0.0 } else { out.alpha[e] }).collect());
        out
    }

    pub fn reset(&mut self) {
        self.buffer = None;
    }
}
