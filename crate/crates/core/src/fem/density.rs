use crate::error::{Error, Result};

/// Binary element states: `true` is solid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DensityVector(Vec<bool>);

impl DensityVector {
    pub fn new(x: Vec<bool>) -> Self {
        Self(x)
    }

    pub fn solid(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn void(n: usize) -> Self {
        Self(vec![false; n])
    }

    /// Accepts only 0 and 1 entries.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::InvalidInput(format!("density entry {i} is {b}, expected 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_solid(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, solid: bool) {
        self.0[i] = solid;
    }

    /// Copy with element `i` switched to the other state.
    pub fn flipped(&self, i: usize) -> Self {
        let mut x = self.clone();
        x.0[i] = !x.0[i];
        x
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&s| s as u8).collect()
    }

    /// Number of solid elements.
    pub fn volume(&self) -> usize {
        self.0.iter().filter(|&&s| s).count()
    }

    pub fn volume_fraction(&self) -> f64 {
        self.volume() as f64 / self.len() as f64
    }
}

/// Number of solid elements in `x`.
pub fn volume(x: &DensityVector) -> usize {
    x.volume()
}

/// Element-wise switch relative to a base topology: `+1` adds, `-1` removes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariationVector(Vec<i8>);

impl VariationVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// Checks `+1` only on voids and `-1` only on solids of `base`.
    pub fn new(base: &DensityVector, y: Vec<i8>) -> Result<Self> {
        if y.len() != base.len() {
            return Err(Error::InvalidInput(format!("variation has {} entries, topology {}", y.len(), base.len())));
        }
        for (i, &v) in y.iter().enumerate() {
            let ok = match v {
                0 => true,
                1 => !base.is_solid(i),
                -1 => base.is_solid(i),
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidInput(format!("variation entry {i} = {v} is not admissible")));
            }
        }
        Ok(Self(y))
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    /// Net volume change.
    pub fn volume_variation(&self) -> i64 {
        self.0.iter().map(|&v| v as i64).sum()
    }

    /// Number of switched elements.
    pub fn topological_variation(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0).count()
    }

    pub fn apply(&self, base: &DensityVector) -> DensityVector {
        DensityVector(base.0.iter().zip(&self.0).map(|(&s, &v)| if v == 0 { s } else { v > 0 }).collect())
    }

    /// Switched elements with their direction.
    pub fn switches(&self) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.0.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, &v)| (i, v))
    }
}
