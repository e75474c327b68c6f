//! Integer genome encoding a four-bladed turbine prototype.
//!
//! Ten base alleles each set the blade height of one tenth of a blade. An
//! optional block of five z-alleles shifts the whole base vector for each
//! successive sixth of the vertical axis.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GenomeError;

pub const BASE_LEN: usize = 10;
pub const Z_LEN: usize = 5;
pub const BASE_MIN: i16 = 1;
pub const BASE_MAX: i16 = 42;
pub const Z_MIN: i16 = -42;
pub const Z_MAX: i16 = 42;

/// Source of the two random primitives the genome operators need.
///
/// Every [`rand::Rng`] implements it; tests substitute deterministic stubs to
/// force boundary draws.
pub trait Sampler {
    /// Uniform integer in `lo..=hi`.
    fn uniform_inclusive(&mut self, lo: i32, hi: i32) -> i32;
    /// Bernoulli trial with success probability `p`.
    fn chance(&mut self, p: f64) -> bool;
}

impl<R: Rng + ?Sized> Sampler for R {
    fn uniform_inclusive(&mut self, lo: i32, hi: i32) -> i32 {
        self.gen_range(lo..=hi)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.gen_bool(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    base: [i16; BASE_LEN],
    z: Option<[i16; Z_LEN]>,
}

impl Genome {
    pub fn new(base: [i16; BASE_LEN], z: Option<[i16; Z_LEN]>) -> Result<Self, GenomeError> {
        for (index, &value) in base.iter().enumerate() {
            if !(BASE_MIN..=BASE_MAX).contains(&value) {
                return Err(GenomeError::BaseOutOfRange { index, value: value.into() });
            }
        }
        if let Some(z) = &z {
            for (index, &value) in z.iter().enumerate() {
                if !(Z_MIN..=Z_MAX).contains(&value) {
                    return Err(GenomeError::ZOutOfRange { index, value: value.into() });
                }
            }
        }
        Ok(Self { base, z })
    }

    /// Builds a genome from a flat allele list: 10 base alleles, optionally
    /// followed by 5 z-alleles.
    pub fn from_alleles(alleles: &[i64]) -> Result<Self, GenomeError> {
        if alleles.len() != BASE_LEN && alleles.len() != BASE_LEN + Z_LEN {
            return Err(GenomeError::Length(alleles.len()));
        }
        let narrow = |index: usize, v: i64| -> Result<i16, GenomeError> {
            i16::try_from(v).map_err(|_| {
                if index < BASE_LEN {
                    GenomeError::BaseOutOfRange { index, value: v }
                } else {
                    GenomeError::ZOutOfRange { index: index - BASE_LEN, value: v }
                }
            })
        };
        let mut base = [0i16; BASE_LEN];
        for (i, slot) in base.iter_mut().enumerate() {
            *slot = narrow(i, alleles[i])?;
        }
        let z = if alleles.len() > BASE_LEN {
            let mut z = [0i16; Z_LEN];
            for (j, slot) in z.iter_mut().enumerate() {
                *slot = narrow(BASE_LEN + j, alleles[BASE_LEN + j])?;
            }
            Some(z)
        } else {
            None
        };
        Self::new(base, z)
    }

    pub fn base(&self) -> &[i16; BASE_LEN] {
        &self.base
    }

    pub fn z_alleles(&self) -> Option<&[i16; Z_LEN]> {
        self.z.as_ref()
    }

    pub fn is_z_mode(&self) -> bool {
        self.z.is_some()
    }

    /// Number of alleles, 10 or 15.
    pub fn len(&self) -> usize {
        BASE_LEN + if self.z.is_some() { Z_LEN } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Base alleles followed by the z block, widened to `i64`.
    pub fn alleles(&self) -> Vec<i64> {
        self.base.iter().chain(self.z.iter().flatten()).map(|&a| i64::from(a)).collect()
    }

    /// Canonical serialization: every allele as signed 16-bit little-endian,
    /// base block first.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.base.iter().chain(self.z.iter().flatten()).flat_map(|a| a.to_le_bytes()).collect()
    }

    /// SHA-256 of [`Genome::canonical_bytes`], lowercase hex.
    pub fn hash_hex(&self) -> String {
        genome_hash(self)
    }
}

pub fn genome_hash(g: &Genome) -> String {
    hex::encode(Sha256::digest(g.canonical_bytes()))
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.alleles().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Genome {
    type Err = GenomeError;

    /// Accepts `[2,2,3,...]`, `2,2,3,...` or whitespace-separated integers.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim().trim_start_matches('[').trim_end_matches(']');
        let alleles = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|tok| !tok.is_empty())
            .map(|tok| tok.parse::<i64>().map_err(|_| GenomeError::Parse(tok.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_alleles(&alleles)
    }
}

impl Serialize for Genome {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.base.iter().chain(self.z.iter().flatten()))
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let alleles = Vec::<i64>::deserialize(deserializer)?;
        Genome::from_alleles(&alleles).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MutationConfig {
    pub per_allele_rate: f64,
    pub max_step: i16,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self { per_allele_rate: 0.25, max_step: 10 }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), GenomeError> {
        if !(0.0..=1.0).contains(&self.per_allele_rate) {
            return Err(GenomeError::MutationRate(self.per_allele_rate));
        }
        if self.max_step < 1 {
            return Err(GenomeError::MutationStep(self.max_step));
        }
        Ok(())
    }
}

/// Uniform random genome; z-alleles are drawn only when `z_mode` is set.
pub fn random_genome<S: Sampler + ?Sized>(rng: &mut S, z_mode: bool) -> Genome {
    let mut base = [0i16; BASE_LEN];
    for a in base.iter_mut() {
        *a = rng.uniform_inclusive(BASE_MIN.into(), BASE_MAX.into()) as i16;
    }
    let z = z_mode.then(|| {
        let mut z = [0i16; Z_LEN];
        for v in z.iter_mut() {
            *v = rng.uniform_inclusive(Z_MIN.into(), Z_MAX.into()) as i16;
        }
        z
    });
    Genome { base, z }
}

/// Per-allele creep mutation with clamping at the allele bounds.
///
/// Each allele is visited in order (base then z). A selected allele receives a
/// uniform step from `[-max_step, max_step]`, zero included.
pub fn mutate<S: Sampler + ?Sized>(g: &Genome, cfg: &MutationConfig, rng: &mut S) -> Genome {
    let max_step = i32::from(cfg.max_step);
    let mut step = |value: i16, lo: i16, hi: i16| -> i16 {
        if rng.chance(cfg.per_allele_rate) {
            let delta = rng.uniform_inclusive(-max_step, max_step);
            (i32::from(value) + delta).clamp(lo.into(), hi.into()) as i16
        } else {
            value
        }
    };
    let mut base = g.base;
    for a in base.iter_mut() {
        *a = step(*a, BASE_MIN, BASE_MAX);
    }
    let z = g.z.map(|mut z| {
        for v in z.iter_mut() {
            *v = step(*v, Z_MIN, Z_MAX);
        }
        z
    });
    Genome { base, z }
}

/// Affine map of every allele onto `[-1, 1]` for the surrogate input layer.
pub fn scale_for_model(g: &Genome) -> Vec<f64> {
    let span = f64::from(BASE_MAX - BASE_MIN);
    g.base
        .iter()
        .map(|&a| 2.0 * f64::from(a - BASE_MIN) / span - 1.0)
        .chain(g.z.iter().flatten().map(|&v| f64::from(v) / f64::from(Z_MAX)))
        .collect()
}
