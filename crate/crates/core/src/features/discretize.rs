use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BINS: usize = 5;

/// Five bins of equal width in `ln(1 + x)` space, spanning the range of the
/// fitting data. Values outside that range fall into the edge bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    lo: f64,
    hi: f64,
}

impl Discretizer {
    pub const BINS: usize = BINS;

    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("cannot fit a discretizer on no values"));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!(
                    "discretizer values must be finite and non-negative, got {v}"
                )));
            }
            let x = v.ln_1p();
            lo = lo.min(x);
            hi = hi.max(x);
        }
        Ok(Discretizer { lo, hi })
    }

    /// All training values were equal; every input maps to bin 0.
    pub fn is_degenerate(&self) -> bool {
        !(self.hi > self.lo)
    }

    /// The six bin boundaries in `ln(1 + x)` space.
    pub fn edges(&self) -> [f64; BINS + 1] {
        let width = (self.hi - self.lo) / BINS as f64;
        std::array::from_fn(|i| {
            if i == BINS {
                self.hi
            } else {
                self.lo + width * i as f64
            }
        })
    }

    pub fn bin(&self, value: f64) -> usize {
        if self.is_degenerate() {
            return 0;
        }
        let x = value.max(0.0).ln_1p();
        let edges = self.edges();
        edges[1..BINS].iter().take_while(|&&e| x >= e).count()
    }
}
