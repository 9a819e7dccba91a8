//! Coil geometry: single circular coils and arrays with anti-Helmholtz pairs.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoilError {
    #[error("coil {name}: radius must be positive, got {value}")]
    BadRadius { name: String, value: f64 },
    #[error("coil {name}: windings must be >= 1")]
    BadWindings { name: String },
    #[error("coil {name}: axis must have unit norm (|axis| = {norm})")]
    BadAxis { name: String, norm: f64 },
    #[error("coil {name}: max_current must be positive, got {value}")]
    BadMaxCurrent { name: String, value: f64 },
    #[error("coil {name}: polarity must be +1 or -1")]
    BadPolarity { name: String },
    #[error("pair ({a}, {b}): {reason}")]
    BadPair { a: String, b: String, reason: String },
    #[error("coil index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("unknown coil name {0:?}")]
    UnknownCoil(String),
}

/// One circular multi-winding coil.
///
/// The field contribution of the coil at channel current `I` is
/// `polarity * windings * I` times the unit-current single-loop field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoilSpec {
    pub name: String,
    /// Center position (m).
    pub center: Vector3<f64>,
    /// Unit normal of the coil plane.
    pub axis: Vector3<f64>,
    /// Loop radius (m).
    pub radius: f64,
    /// Number of windings.
    pub windings: u32,
    /// Winding sense relative to `axis`: +1 or -1.
    pub polarity: i8,
    /// Channel current limit (A).
    pub max_current: f64,
}

impl CoilSpec {
    pub fn validate(&self) -> Result<(), CoilError> {
        if !(self.radius > 0.0) {
            return Err(CoilError::BadRadius {
                name: self.name.clone(),
                value: self.radius,
            });
        }
        if self.windings < 1 {
            return Err(CoilError::BadWindings {
                name: self.name.clone(),
            });
        }
        let norm = self.axis.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(CoilError::BadAxis {
                name: self.name.clone(),
                norm,
            });
        }
        if !(self.max_current > 0.0) {
            return Err(CoilError::BadMaxCurrent {
                name: self.name.clone(),
                value: self.max_current,
            });
        }
        if self.polarity != 1 && self.polarity != -1 {
            return Err(CoilError::BadPolarity {
                name: self.name.clone(),
            });
        }
        Ok(())
    }

    /// Signed ampere-turns per ampere of channel current.
    pub fn turns(&self) -> f64 {
        f64::from(self.polarity) * f64::from(self.windings)
    }
}

/// An ordered collection of coils plus an optional grouping into
/// anti-Helmholtz pairs that share one current channel.
#[derive(Debug, Clone)]
pub struct CoilArray {
    coils: Vec<CoilSpec>,
    pairs: Vec<[usize; 2]>,
}

impl CoilArray {
    pub fn new(coils: Vec<CoilSpec>, pairs: Vec<[usize; 2]>) -> Result<Self, CoilError> {
        for c in &coils {
            c.validate()?;
        }
        let mut seen = vec![false; coils.len()];
        for &[a, b] in &pairs {
            for idx in [a, b] {
                if idx >= coils.len() {
                    return Err(CoilError::IndexOutOfRange(idx));
                }
            }
            let (ca, cb) = (&coils[a], &coils[b]);
            let reason = if seen[a] || seen[b] {
                Some("coil belongs to more than one pair")
            } else if ca.radius != cb.radius {
                Some("paired coils must have equal radius")
            } else if ca.windings != cb.windings {
                Some("paired coils must have equal windings")
            } else if ca.polarity == cb.polarity {
                Some("paired coils must have opposite polarity")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(CoilError::BadPair {
                    a: ca.name.clone(),
                    b: cb.name.clone(),
                    reason: reason.to_string(),
                });
            }
            seen[a] = true;
            seen[b] = true;
        }
        Ok(Self { coils, pairs })
    }

    pub fn coils(&self) -> &[CoilSpec] {
        &self.coils
    }

    pub fn pairs(&self) -> &[[usize; 2]] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.coils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coils.is_empty()
    }

    pub fn coil(&self, idx: usize) -> &CoilSpec {
        &self.coils[idx]
    }

    pub fn index_of(&self, name: &str) -> Result<usize, CoilError> {
        self.coils
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| CoilError::UnknownCoil(name.to_string()))
    }

    /// First coil whose channel current exceeds its limit, if any.
    pub fn over_limit(&self, currents: &[f64]) -> Option<usize> {
        self.coils
            .iter()
            .zip(currents)
            .position(|(c, &i)| i.abs() > c.max_current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coil(name: &str, z: f64, polarity: i8) -> CoilSpec {
        CoilSpec {
            name: name.into(),
            center: Vector3::new(0.0, 0.0, z),
            axis: Vector3::z(),
            radius: 0.05,
            windings: 40,
            polarity,
            max_current: 100.0,
        }
    }

    #[test]
    fn pair_validation() {
        let coils = vec![coil("a", -0.025, 1), coil("b", 0.025, -1)];
        assert!(CoilArray::new(coils, vec![[0, 1]]).is_ok());

        let coils = vec![coil("a", -0.025, 1), coil("b", 0.025, 1)];
        assert!(matches!(
            CoilArray::new(coils, vec![[0, 1]]),
            Err(CoilError::BadPair { .. })
        ));
    }

    #[test]
    fn rejects_non_unit_axis() {
        let mut c = coil("a", 0.0, 1);
        c.axis = Vector3::new(0.0, 0.0, 1.0 + 1e-9);
        assert!(matches!(c.validate(), Err(CoilError::BadAxis { .. })));
    }

    #[test]
    fn rejects_double_pairing() {
        let coils = vec![coil("a", -0.025, 1), coil("b", 0.025, -1), coil("c", 0.075, 1)];
        let r = CoilArray::new(coils, vec![[0, 1], [1, 2]]);
        assert!(matches!(r, Err(CoilError::BadPair { .. })));
    }
}
