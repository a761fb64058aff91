use crate::numerics::mix64;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

/// Standard normal value attached to `(seed, index)` by hashing, so it can
/// be regenerated in any order.
pub fn hashed_normal(seed: u64, index: i64) -> f64 {
    let k = mix64(seed ^ mix64((index as u64) ^ 0x6a09_e667_f3bc_c909));
    let u1 = ((k >> 11) as f64 + 0.5) / TWO_POW_53;
    let u2 = (mix64(k) >> 11) as f64 / TWO_POW_53;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// One-dimensional lattice potential whose bond increments
/// `V(b+1) − V(b)` are i.i.d. `N(0, increment_std²)`, with `V(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinaiPotential {
    pub seed: u64,
    pub increment_std: f64,
}

impl SinaiPotential {
    pub fn new(seed: u64, increment_std: f64) -> Self {
        SinaiPotential { seed, increment_std }
    }

    /// `V(b+1) − V(b)`.
    pub fn increment(&self, bond: i64) -> f64 {
        if self.increment_std == 0.0 {
            return 0.0;
        }
        self.increment_std * hashed_normal(self.seed, bond)
    }

    /// `V(x)` as a sum of the increments between `0` and `x`.
    pub fn value(&self, x: i64) -> f64 {
        if x >= 0 {
            (0..x).map(|b| self.increment(b)).sum()
        } else {
            -(x..0).map(|b| self.increment(b)).sum::<f64>()
        }
    }

    /// `V(y) − V(x)`.
    pub fn difference(&self, x: i64, y: i64) -> f64 {
        if y >= x {
            (x..y).map(|b| self.increment(b)).sum()
        } else {
            -(y..x).map(|b| self.increment(b)).sum::<f64>()
        }
    }
}

/// Metropolis acceptance `min(1, exp(−ΔV/T))` scaled to a 53-bit threshold.
fn threshold(delta: f64, temperature: f64) -> u64 {
    if delta <= 0.0 || temperature.is_infinite() {
        return 1 << 53;
    }
    ((-delta / temperature).exp() * TWO_POW_53) as u64
}

/// Acceptance thresholds of the bonds a walker has reached, grown on demand.
#[derive(Clone, Debug)]
pub(crate) struct BondCache {
    potential: SinaiPotential,
    temperature: f64,
    lo: i64,
    /// Threshold for crossing bond `b` from `b` to `b+1`.
    right: Vec<u64>,
    /// Threshold for crossing bond `b` from `b+1` to `b`.
    left: Vec<u64>,
}

impl BondCache {
    pub(crate) fn new(potential: SinaiPotential, temperature: f64) -> Self {
        let mut cache = BondCache {
            potential,
            temperature,
            lo: 0,
            right: Vec::new(),
            left: Vec::new(),
        };
        cache.cover(-64, 64);
        cache
    }

    fn cover(&mut self, lo: i64, hi: i64) {
        let (old_lo, old_hi) = (self.lo, self.lo + self.right.len() as i64);
        if !self.right.is_empty() && lo >= old_lo && hi <= old_hi {
            return;
        }
        let (new_lo, new_hi) = if self.right.is_empty() {
            (lo, hi)
        } else {
            let span = old_hi - old_lo;
            (lo.min(old_lo - span / 2), hi.max(old_hi + span / 2))
        };
        let mut right = Vec::with_capacity((new_hi - new_lo) as usize);
        let mut left = Vec::with_capacity((new_hi - new_lo) as usize);
        for b in new_lo..new_hi {
            if b >= old_lo && b < old_hi && !self.right.is_empty() {
                right.push(self.right[(b - old_lo) as usize]);
                left.push(self.left[(b - old_lo) as usize]);
            } else {
                let inc = self.potential.increment(b);
                right.push(threshold(inc, self.temperature));
                left.push(threshold(-inc, self.temperature));
            }
        }
        self.lo = new_lo;
        self.right = right;
        self.left = left;
    }

    /// Applies one Metropolis move drawn from `bits`: the lowest bit picks
    /// the direction, the top 53 bits the acceptance test.
    #[inline]
    pub(crate) fn step(&mut self, x: i64, bits: u64) -> i64 {
        let (bond, next) = if bits & 1 == 1 { (x, x + 1) } else { (x - 1, x - 1) };
        let mut i = bond - self.lo;
        if i < 0 || i >= self.right.len() as i64 {
            self.cover(bond - 1, bond + 2);
            i = bond - self.lo;
        }
        let t = if next > x {
            self.right[i as usize]
        } else {
            self.left[i as usize]
        };
        if (bits >> 11) < t {
            next
        } else {
            x
        }
    }
}
