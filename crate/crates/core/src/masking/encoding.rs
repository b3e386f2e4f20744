use serde::{Deserialize, Serialize};

use super::MaskingError;

/// Modulus and fixed-point parameters of the secure sum.
///
/// The modulus is `R = 2^modulus_bits`, so all arithmetic is native
/// wrapping `u64` arithmetic followed by a bit mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusConfig {
    pub modulus_bits: u32,
    pub frac_bits: u32,
    pub max_abs_component: f64,
    pub max_count: u64,
    pub max_clients: u64,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        Self {
            modulus_bits: 64,
            frac_bits: 24,
            max_abs_component: 256.0,
            max_count: 1 << 16,
            max_clients: 1 << 10,
        }
    }
}

impl ModulusConfig {
    /// Config with unbounded inputs, for hand-worked arithmetic on tiny moduli.
    pub fn raw(modulus_bits: u32, frac_bits: u32) -> Self {
        Self {
            modulus_bits,
            frac_bits,
            max_abs_component: f64::MAX,
            max_count: u64::MAX,
            max_clients: u64::MAX,
        }
    }

    /// Checks the no-wraparound rule
    /// `max_count * max_clients * round(max_abs * 2^f) < R/2` and `f >= 1`.
    pub fn validate(&self) -> Result<(), MaskingError> {
        if self.modulus_bits == 0 || self.modulus_bits > 64 {
            return Err(MaskingError::Config(format!(
                "modulus_bits={} must be in 1..=64",
                self.modulus_bits
            )));
        }
        if self.frac_bits < 1 {
            return Err(MaskingError::Config("frac_bits must be >= 1".into()));
        }
        if !(self.max_abs_component.is_finite() && self.max_abs_component > 0.0) {
            return Err(MaskingError::Config(
                "max_abs_component must be positive and finite".into(),
            ));
        }
        if self.max_count == 0 || self.max_clients == 0 {
            return Err(MaskingError::Config(
                "max_count and max_clients must be positive".into(),
            ));
        }
        let scaled = (self.max_abs_component * self.scale()).round();
        let worst = self.max_count as f64 * self.max_clients as f64 * scaled;
        let half = 2f64.powi(self.modulus_bits as i32 - 1);
        if worst >= half {
            return Err(MaskingError::Config(format!(
                "headroom violated: max_count({}) * max_clients({}) * max_abs_component({}) * 2^{} = {worst:e} >= R/2 = 2^{}",
                self.max_count,
                self.max_clients,
                self.max_abs_component,
                self.frac_bits,
                self.modulus_bits - 1
            )));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        2f64.powi(self.frac_bits as i32)
    }

    #[inline]
    pub fn bitmask(&self) -> u64 {
        if self.modulus_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.modulus_bits) - 1
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.bitmask()
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.bitmask()
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        a.wrapping_mul(b) & self.bitmask()
    }

    /// Maps a residue to its signed representative in `[-R/2, R/2)`.
    #[inline]
    pub fn centered(&self, v: u64) -> i128 {
        let v = v & self.bitmask();
        let r = 1i128 << self.modulus_bits;
        if (v as i128) >= r / 2 {
            v as i128 - r
        } else {
            v as i128
        }
    }
}

/// Embeds `x` as `round(x * 2^f) mod R`.
pub fn encode(x: f64, cfg: &ModulusConfig) -> Result<u64, MaskingError> {
    if !x.is_finite() || x.abs() > cfg.max_abs_component {
        return Err(MaskingError::OutOfRange {
            value: x,
            bound: cfg.max_abs_component,
        });
    }
    let scaled = (x * cfg.scale()).round() as i128;
    let r = 1i128 << cfg.modulus_bits;
    Ok(scaled.rem_euclid(r) as u64)
}

pub fn decode(v: u64, cfg: &ModulusConfig) -> f64 {
    cfg.centered(v) as f64 / cfg.scale()
}
