//! Diagram to vector map: Gaussian-type kernel mass around each centroid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persistence::PersistenceDiagram;
use crate::quantization::{CentroidSet, Point};

/// `sup |d/du exp(-u^2)| = sqrt(2 / e)`.
pub const KERNEL_LIPSCHITZ: f64 = 0.857_763_884_960_706_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectorizer {
    pub centers: Vec<Point>,
    pub bandwidths: Vec<f64>,
    pub homology_order: usize,
}

impl Vectorizer {
    /// `sigma_j = min_{l != j} |c_l - c_j| / 2`. A single center uses
    /// `single_center_bandwidth` instead (falling back to 1 if that is not
    /// positive). No centers gives an empty embedding.
    pub fn new(centers: Vec<Point>, homology_order: usize, single_center_bandwidth: f64) -> Result<Self> {
        let k = centers.len();
        let bandwidths = if k == 0 {
            Vec::new()
        } else if k == 1 {
            let s = single_center_bandwidth;
            vec![if s > 0.0 && s.is_finite() { s } else { 1.0 }]
        } else {
            let mut bw = Vec::with_capacity(k);
            for j in 0..k {
                let mut m = f64::INFINITY;
                for l in 0..k {
                    if l == j {
                        continue;
                    }
                    let d = ((centers[l][0] - centers[j][0]).powi(2) + (centers[l][1] - centers[j][1]).powi(2)).sqrt();
                    if d == 0.0 {
                        return Err(Error::DuplicateCenter(j.min(l), j.max(l)));
                    }
                    m = m.min(d);
                }
                bw.push(m / 2.0);
            }
            bw
        };
        Ok(Self {
            centers,
            bandwidths,
            homology_order,
        })
    }

    pub fn from_centroids(c: &CentroidSet) -> Result<Self> {
        Self::new(c.centers.clone(), c.homology_order, c.support_radius)
    }

    pub fn dim(&self) -> usize {
        self.centers.len()
    }

    /// `v_j = sum_x w(x) exp(-(|x - c_j| / sigma_j)^2)`.
    pub fn vectorize(&self, diagram: &PersistenceDiagram) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.vectorize_into(diagram, &mut v);
        v
    }

    pub fn vectorize_into(&self, diagram: &PersistenceDiagram, out: &mut [f64]) {
        for ((slot, c), s) in out.iter_mut().zip(&self.centers).zip(&self.bandwidths) {
            *slot = diagram
                .points
                .iter()
                .map(|p| {
                    let d2 = (p.birth - c[0]).powi(2) + (p.death - c[1]).powi(2);
                    p.weight * (-d2 / (s * s)).exp()
                })
                .fold(0.0, |a, b| a + b);
        }
    }
}
