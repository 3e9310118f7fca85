//! Single-hash count sketch.
//!
//! Tokens are pre-hashed to 64 bits with seeded XXH3, then mapped to one of
//! `J` buckets by the Carter–Wegman family `((a·x + b) mod p) mod J` with the
//! Mersenne prime `p = 2^61 - 1`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::rng::stream_rng;

pub const MERSENNE_61: u64 = (1 << 61) - 1;
pub const MAX_WIDTH: u32 = 1 << 24;

const MAGIC: &[u8; 4] = b"BNPS";
const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 8 + 8 + 8 + 8;

/// One draw from the strongly universal family. Two sketches can be merged
/// only when their specs are identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HashSpec {
    a: u64,
    b: u64,
    width: u32,
    symbol_seed: u64,
}

#[inline]
fn reduce_mersenne(x: u128) -> u64 {
    // x < 2^122 here, two folds suffice
    let folded = (x & MERSENNE_61 as u128) + (x >> 61);
    let folded = (folded & MERSENNE_61 as u128) + (folded >> 61);
    let mut r = folded as u64;
    if r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

impl HashSpec {
    pub fn new(a: u64, b: u64, width: u32, symbol_seed: u64) -> Result<Self> {
        if a == 0 || a >= MERSENNE_61 {
            return Err(Error::Domain(format!("hash multiplier a={a} not in [1, p)")));
        }
        if b >= MERSENNE_61 {
            return Err(Error::Domain(format!("hash offset b={b} not in [0, p)")));
        }
        if width == 0 || width > MAX_WIDTH {
            return Err(Error::Domain(format!(
                "sketch width {width} not in [1, {MAX_WIDTH}]"
            )));
        }
        Ok(Self {
            a,
            b,
            width,
            symbol_seed,
        })
    }

    /// Draws `(a, b, symbol_seed)` uniformly from `seed`.
    pub fn random(width: u32, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, 0x4a53);
        let a = rng.random_range(1..MERSENNE_61);
        let b = rng.random_range(0..MERSENNE_61);
        let symbol_seed = rng.random();
        Self::new(a, b, width, symbol_seed)
    }

    pub fn a(&self) -> u64 {
        self.a
    }
    pub fn b(&self) -> u64 {
        self.b
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn symbol_seed(&self) -> u64 {
        self.symbol_seed
    }

    /// Seeded 64-bit pre-hash of a raw token.
    #[inline]
    pub fn prehash(&self, token: &[u8]) -> u64 {
        xxhash_rust::xxh3::xxh3_64_with_seed(token, self.symbol_seed)
    }

    /// Bucket of an already pre-hashed key. The key is reduced mod p first.
    #[inline]
    pub fn bucket_of_prehash(&self, x: u64) -> usize {
        let x = x % MERSENNE_61;
        let v = reduce_mersenne(self.a as u128 * x as u128 + self.b as u128);
        (v % self.width as u64) as usize
    }

    #[inline]
    pub fn bucket(&self, token: &[u8]) -> usize {
        self.bucket_of_prehash(self.prehash(token))
    }
}

/// Bucket counts `C_n` together with `n` and the hash that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sketch {
    spec: HashSpec,
    counts: Vec<u64>,
    n: u64,
}

impl Sketch {
    pub fn new(spec: HashSpec) -> Self {
        Self {
            counts: vec![0; spec.width as usize],
            spec,
            n: 0,
        }
    }

    /// A sketch from explicit counts, mainly for fixtures and simulations that
    /// generate bucket counts directly.
    pub fn from_counts(spec: HashSpec, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != spec.width as usize {
            return Err(Error::Domain(format!(
                "{} counts for a width-{} hash",
                counts.len(),
                spec.width
            )));
        }
        let mut n = 0u64;
        for (j, c) in counts.iter().enumerate() {
            n = n.checked_add(*c).ok_or(Error::Overflow(j))?;
        }
        Ok(Self { spec, counts, n })
    }

    pub fn spec(&self) -> &HashSpec {
        &self.spec
    }
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn width(&self) -> usize {
        self.counts.len()
    }
    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn insert(&mut self, token: &[u8]) -> Result<()> {
        let j = self.spec.bucket(token);
        self.bump(j)
    }

    pub fn insert_prehashed(&mut self, x: u64) -> Result<()> {
        let j = self.spec.bucket_of_prehash(x);
        self.bump(j)
    }

    fn bump(&mut self, j: usize) -> Result<()> {
        let slot = &mut self.counts[j];
        *slot = slot.checked_add(1).ok_or(Error::Overflow(j))?;
        self.n += 1;
        Ok(())
    }

    pub fn extend<I, T>(&mut self, tokens: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        for t in tokens {
            self.insert(t.as_ref())?;
        }
        Ok(())
    }

    pub fn merge(&self, other: &Sketch) -> Result<Sketch> {
        let mut out = self.clone();
        out.merge_in(other)?;
        Ok(out)
    }

    pub fn merge_in(&mut self, other: &Sketch) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Incompatible(format!(
                "hash specs differ ({:?} vs {:?})",
                self.spec, other.spec
            )));
        }
        for (j, (c, o)) in self.counts.iter_mut().zip(&other.counts).enumerate() {
            *c = c.checked_add(*o).ok_or(Error::Overflow(j))?;
        }
        self.n = self
            .n
            .checked_add(other.n)
            .ok_or(Error::Overflow(usize::MAX))?;
        Ok(())
    }

    /// Little-endian wire format:
    /// `"BNPS" | u8 version | u32 J | u64 a | u64 b | u64 seed | u64 n | J×u64 | u32 CRC-32C`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.counts.len() + 4);
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&self.spec.width.to_le_bytes());
        out.extend_from_slice(&self.spec.a.to_le_bytes());
        out.extend_from_slice(&self.spec.b.to_le_bytes());
        out.extend_from_slice(&self.spec.symbol_seed.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        let crc = crc32c::crc32c(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ParseError> {
        if bytes.len() < 5 {
            return Err(ParseError::Truncated {
                expected: HEADER_LEN + 4,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(ParseError::BadMagic);
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(ParseError::BadVersion(bytes[4]));
        }
        if bytes.len() < HEADER_LEN {
            return Err(ParseError::Truncated {
                expected: HEADER_LEN + 4,
                found: bytes.len(),
            });
        }
        let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let width = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let expected = HEADER_LEN + 8 * width as usize + 4;
        if bytes.len() < expected {
            return Err(ParseError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(ParseError::InvalidField("trailing bytes"));
        }
        let body = &bytes[..expected - 4];
        let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
        let computed = crc32c::crc32c(body);
        if stored != computed {
            return Err(ParseError::Checksum { stored, computed });
        }
        let spec = HashSpec::new(u64_at(9), u64_at(17), width, u64_at(25))
            .map_err(|_| ParseError::InvalidField("hash parameters"))?;
        let n = u64_at(33);
        let counts: Vec<u64> = (0..width as usize)
            .map(|j| u64_at(HEADER_LEN + 8 * j))
            .collect();
        let sum = counts
            .iter()
            .try_fold(0u64, |acc, c| acc.checked_add(*c))
            .ok_or(ParseError::InvalidField("count overflow"))?;
        if sum != n {
            return Err(ParseError::CountMismatch { sum, n });
        }
        Ok(Self { spec, counts, n })
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec16() -> HashSpec {
        HashSpec::new(1, 0, 16, 7).unwrap()
    }

    #[test]
    fn identity_parameters_map_prehash_directly() {
        assert_eq!(spec16().bucket_of_prehash(5), 5);
        assert_eq!(spec16().bucket_of_prehash(21), 5);
    }

    #[test]
    fn hash_is_deterministic() {
        let spec = HashSpec::random(128, 3).unwrap();
        assert_eq!(spec.bucket(b"hello"), spec.bucket(b"hello"));
        assert_eq!(spec, HashSpec::random(128, 3).unwrap());
        assert_ne!(spec, HashSpec::random(128, 4).unwrap());
    }

    #[test]
    fn mersenne_reduction_matches_modulo() {
        for &(a, x, b) in &[
            (MERSENNE_61 - 1, MERSENNE_61 - 1, MERSENNE_61 - 1),
            (12345, 987654321, 5),
            (1 << 60, (1 << 61) - 2, 0),
        ] {
            let wide = a as u128 * x as u128 + b as u128;
            assert_eq!(reduce_mersenne(wide) as u128, wide % MERSENNE_61 as u128);
        }
    }

    #[test]
    fn insert_updates_counts() {
        let mut s = Sketch::new(HashSpec::random(8, 1).unwrap());
        assert_eq!(s.n(), 0);
        assert!(s.counts().iter().all(|c| *c == 0));
        s.extend(["a", "b", "a"]).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.counts().iter().sum::<u64>(), 3);
        let j = s.spec().bucket(b"a");
        assert!(s.counts()[j] >= 2);
    }

    #[test]
    fn counter_overflow_is_an_error() {
        let spec = HashSpec::new(1, 0, 1, 0).unwrap();
        let mut s = Sketch::from_counts(spec, vec![u64::MAX]).unwrap();
        assert!(matches!(s.insert(b"x"), Err(Error::Overflow(0))));
    }

    #[test]
    fn merge_rules() {
        let spec = HashSpec::random(8, 1).unwrap();
        let mut s = Sketch::new(spec);
        s.extend(["x", "y"]).unwrap();
        assert_eq!(s.merge(&Sketch::new(spec)).unwrap(), s);
        let other = Sketch::new(HashSpec::random(16, 1).unwrap());
        assert!(matches!(s.merge(&other), Err(Error::Incompatible(_))));
    }

    #[test]
    fn wire_format_layout() {
        let spec = HashSpec::new(3, 4, 2, 5).unwrap();
        let s = Sketch::from_counts(spec, vec![6, 1]).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(bytes.len(), 41 + 16 + 4);
        assert_eq!(&bytes[..4], b"BNPS");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[33..41], &7u64.to_le_bytes());
        assert_eq!(Sketch::from_bytes(&bytes).unwrap(), s);
    }

    #[test]
    fn parse_errors_are_distinct() {
        let spec = HashSpec::random(4, 9).unwrap();
        let mut s = Sketch::new(spec);
        s.extend(["p", "q", "r"]).unwrap();
        let good = s.to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(Sketch::from_bytes(&bad), Err(ParseError::BadMagic));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(Sketch::from_bytes(&bad), Err(ParseError::BadVersion(2)));

        let bad = &good[..good.len() - 3];
        assert!(matches!(
            Sketch::from_bytes(bad),
            Err(ParseError::Truncated { .. })
        ));

        let mut bad = good.clone();
        bad[HEADER_LEN + 3] ^= 0x10;
        assert!(matches!(
            Sketch::from_bytes(&bad),
            Err(ParseError::Checksum { .. })
        ));
    }
}
