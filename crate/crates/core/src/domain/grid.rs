use serde::Deserialize;

use super::DomainError;

/// `n` equal bands over `[lo, hi]`, each represented by its center.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinGrid {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

/// Altitude bands in km.
pub type AltitudeGrid = BinGrid;
/// Fuel bands, in kg or (altitude-budget mode) km of cumulative raise.
pub type FuelGrid = BinGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bin {
    Index(usize),
    /// Below the grid floor; for altitude this is the deorbited state.
    Below,
}

impl BinGrid {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self, DomainError> {
        let g = BinGrid { lo, hi, bins };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo >= 0.0 && self.hi > self.lo) {
            return Err(DomainError::Config(format!("grid bounds [{}, {}] must satisfy 0 <= lo < hi", self.lo, self.hi)));
        }
        if self.bins == 0 || self.bins > u32::MAX as usize / 2 {
            return Err(DomainError::Config(format!("grid bin count {} out of range", self.bins)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    /// Lower edge of band `j`; `edge(bins) == hi`.
    pub fn edge(&self, j: usize) -> f64 {
        self.lo + (self.hi - self.lo) * j as f64 / self.bins as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        0.5 * (self.edge(j) + self.edge(j + 1))
    }

    /// Band containing `x`. A value on an edge belongs to the upper band;
    /// values at or above `hi` clamp to the top band.
    pub fn bin(&self, x: f64) -> Bin {
        if x < self.lo {
            return Bin::Below;
        }
        if x >= self.hi {
            return Bin::Index(self.bins - 1);
        }
        let mut j = (((x - self.lo) / self.width()).floor() as usize).min(self.bins - 1);
        // the quotient can land one band off next to an edge
        if j + 1 < self.bins && x >= self.edge(j + 1) {
            j += 1;
        } else if j > 0 && x < self.edge(j) {
            j -= 1;
        }
        Bin::Index(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_grid_examples() {
        let g = BinGrid::new(300.0, 500.0, 1500).unwrap();
        assert_eq!(g.bin(g.center(0)), Bin::Index(0));
        assert_eq!(g.bin(490.0), Bin::Index(1425));
        assert_eq!(g.bin(299.9), Bin::Below);
        assert_eq!(g.bin(300.0), Bin::Index(0));
        assert_eq!(g.bin(500.0), Bin::Index(1499));
        assert_eq!(g.bin(612.0), Bin::Index(1499));
        assert!((g.width() - 0.2 / 1.5).abs() < 1e-15);
        assert!((g.center(1499) - (500.0 - g.width() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn every_edge_goes_up() {
        let g = BinGrid::new(300.0, 500.0, 1500).unwrap();
        for j in 1..1500 {
            assert_eq!(g.bin(g.edge(j)), Bin::Index(j));
            assert_eq!(g.bin(g.edge(j).next_down()), Bin::Index(j - 1));
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(BinGrid::new(5.0, 5.0, 3).is_err());
        assert!(BinGrid::new(0.0, 5.0, 0).is_err());
        assert!(BinGrid::new(-1.0, 5.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn binning_is_consistent_with_edges(lo in 0.0..400.0f64, span in 1.0..300.0f64, n in 1usize..3000, t in 0.0..1.0f64) {
            let g = BinGrid::new(lo, lo + span, n).unwrap();
            let x = lo + t * span;
            match g.bin(x) {
                Bin::Index(j) => {
                    prop_assert!(j < n);
                    prop_assert!(g.edge(j) <= x);
                    prop_assert!(x < g.edge(j + 1) || j == n - 1);
                }
                Bin::Below => prop_assert!(false),
            }
        }
    }
}
