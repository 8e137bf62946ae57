use crate::error::{Error, Result};

/// Uniform frequency axis: bin `k` sits at `f_start + k·f_step`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrequencyGrid {
    pub f_start: f64,
    pub f_step: f64,
    pub n_bins: usize,
}

impl FrequencyGrid {
    pub fn new(f_start: f64, f_step: f64, n_bins: usize) -> Result<Self> {
        if !(f_step > 0.0) || !f_step.is_finite() || !f_start.is_finite() {
            return Err(Error::param("grid step must be positive and finite"));
        }
        if n_bins < 2 {
            return Err(Error::param("grid needs at least two bins"));
        }
        Ok(FrequencyGrid {
            f_start,
            f_step,
            n_bins,
        })
    }

    /// Two-sided grid of an `n`-point transform at `sample_rate`, ordered from
    /// the most negative frequency upwards (DC at index `n/2`, rounded down).
    pub fn centered(n: usize, sample_rate: f64) -> Self {
        let step = sample_rate / n as f64;
        FrequencyGrid {
            f_start: -((n / 2) as f64) * step,
            f_step: step,
            n_bins: n,
        }
    }

    #[inline]
    pub fn freq(&self, k: usize) -> f64 {
        self.f_start + k as f64 * self.f_step
    }

    pub fn freqs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_bins).map(move |k| self.freq(k))
    }

    /// Lowest and highest bin centers.
    pub fn span(&self) -> (f64, f64) {
        (self.f_start, self.freq(self.n_bins - 1))
    }

    /// Index of the bin whose center is nearest to `f`, if `f` lies within
    /// half a bin of the grid.
    pub fn index_of(&self, f: f64) -> Option<usize> {
        let x = (f - self.f_start) / self.f_step;
        let k = libm::round(x);
        if k < -0.0 || k > (self.n_bins - 1) as f64 || libm::fabs(x - k) > 0.5 + 1e-9 {
            return None;
        }
        Some(k as usize)
    }

    /// Same spacing and the same bin centers, up to floating-point noise.
    pub fn same_as(&self, other: &FrequencyGrid) -> bool {
        self.n_bins == other.n_bins
            && libm::fabs(self.f_step - other.f_step) <= 1e-9 * self.f_step
            && libm::fabs(self.f_start - other.f_start) <= 1e-6 * self.f_step
    }

    /// Bin-position offset of `other` relative to `self` when both share a
    /// step and their centers line up (sub-grids).
    pub fn offset_of(&self, other: &FrequencyGrid) -> Option<usize> {
        if libm::fabs(self.f_step - other.f_step) > 1e-9 * self.f_step {
            return None;
        }
        let x = (other.f_start - self.f_start) / self.f_step;
        let k = libm::round(x);
        if libm::fabs(x - k) > 1e-6 || k < 0.0 || k as usize + other.n_bins > self.n_bins {
            return None;
        }
        Some(k as usize)
    }
}

/// Frequency interval `(lo, hi]`, in Hz.
///
/// The half-open convention matches the region definition of a notch; band
/// edges produced by snapping always fall between bin centers, so for snapped
/// bands the convention never decides membership.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Geometry(alloc::format!(
                "band must satisfy lo < hi, got ({lo}, {hi}]"
            )));
        }
        Ok(Band { lo, hi })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    #[inline]
    pub fn contains(&self, f: f64) -> bool {
        f > self.lo && f <= self.hi
    }

    /// Closed-interval membership, used for averaging regions.
    #[inline]
    pub fn contains_closed(&self, f: f64) -> bool {
        f >= self.lo && f <= self.hi
    }

    pub fn mirrored(&self) -> Band {
        Band {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    /// Distance from `f` to the nearest point of the band (0 inside).
    pub fn distance(&self, f: f64) -> f64 {
        if f < self.lo {
            self.lo - f
        } else if f > self.hi {
            f - self.hi
        } else {
            0.0
        }
    }

    /// The band shrunk by `margin` on both sides, if anything remains.
    pub fn shrink(&self, margin: f64) -> Option<Band> {
        let (lo, hi) = (self.lo + margin, self.hi - margin);
        (lo < hi).then_some(Band { lo, hi })
    }
}
