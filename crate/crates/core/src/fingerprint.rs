//! Fixed-width bit fingerprints and Tanimoto similarity.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

/// A fixed-width bit vector. Bit `i` is stored in word `i / 64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
}

impl Fingerprint {
    pub fn zeros(width: usize) -> Result<Self> {
        if width == 0 {
            return Err(CoreError::InvalidPayload("fingerprint width must be > 0".into()));
        }
        Ok(Self {
            words: vec![0; width.div_ceil(64)],
            width,
        })
    }

    pub fn from_bits(width: usize, set: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut fp = Self::zeros(width)?;
        for i in set {
            fp.set(i)?;
        }
        Ok(fp)
    }

    /// Parse a big-endian hex string (most significant nibble first) holding
    /// `width` bits. Leading `0x` is accepted.
    pub fn from_hex(hex: &str, width: usize) -> Result<Self> {
        let hex = hex.trim();
        let hex = hex.strip_prefix("0x").unwrap_or(hex);
        let mut fp = Self::zeros(width)?;
        let nibbles = width.div_ceil(4);
        if hex.len() > nibbles {
            return Err(CoreError::InvalidPayload(format!(
                "hex fingerprint has {} digits, width {} allows {}",
                hex.len(),
                width,
                nibbles
            )));
        }
        for (k, c) in hex.bytes().rev().enumerate() {
            let v = (c as char)
                .to_digit(16)
                .ok_or_else(|| CoreError::InvalidPayload(format!("bad hex digit {:?}", c as char)))?;
            for bit in 0..4 {
                if v & (1 << bit) != 0 {
                    fp.set(4 * k + bit)?;
                }
            }
        }
        Ok(fp)
    }

    pub fn to_hex(&self) -> String {
        let nibbles = self.width.div_ceil(4);
        (0..nibbles)
            .rev()
            .map(|k| {
                let mut v = 0u32;
                for bit in 0..4 {
                    if self.get(4 * k + bit) {
                        v |= 1 << bit;
                    }
                }
                std::char::from_digit(v, 16).unwrap()
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, i: usize) -> Result<()> {
        if i >= self.width {
            return Err(CoreError::InvalidPayload(format!(
                "bit {} outside width {}",
                i, self.width
            )));
        }
        self.words[i / 64] |= 1 << (i % 64);
        Ok(())
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.width && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// `|a ∧ b| / |a ∨ b|`, with two all-zero fingerprints defined as identical (1.0).
pub fn tanimoto_similarity(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.width != b.width {
        return Err(CoreError::LengthMismatch(format!(
            "fingerprint widths {} and {}",
            a.width, b.width
        )));
    }
    let (inter, union) = a.words.iter().zip(&b.words).fold((0u32, 0u32), |(i, u), (x, y)| {
        (i + (x & y).count_ones(), u + (x | y).count_ones())
    });
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Serialize, Deserialize)]
struct FingerprintRepr {
    bits: String,
    width: usize,
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FingerprintRepr {
            bits: self.to_hex(),
            width: self.width,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = FingerprintRepr::deserialize(d)?;
        Fingerprint::from_hex(&r.bits, r.width).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fp(bits: &[usize]) -> Fingerprint {
        Fingerprint::from_bits(16, bits.iter().copied()).unwrap()
    }

    #[test]
    fn tanimoto_examples() {
        let a = fp(&[1, 2, 3]);
        assert_eq!(tanimoto_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(tanimoto_similarity(&fp(&[0, 1]), &fp(&[5, 6])).unwrap(), 0.0);
        assert_eq!(tanimoto_similarity(&a, &fp(&[2, 3, 4])).unwrap(), 0.5);
        assert_eq!(tanimoto_similarity(&fp(&[]), &fp(&[])).unwrap(), 1.0);
    }

    #[test]
    fn width_mismatch_is_error() {
        let a = Fingerprint::zeros(8).unwrap();
        let b = Fingerprint::zeros(16).unwrap();
        assert!(tanimoto_similarity(&a, &b).is_err());
        assert!(Fingerprint::zeros(0).is_err());
    }

    #[test]
    fn hex_parsing() {
        let f = Fingerprint::from_hex("0x0e", 8).unwrap();
        assert!(f.get(1) && f.get(2) && f.get(3) && !f.get(0));
        assert_eq!(f.to_hex(), "0e");
        assert!(Fingerprint::from_hex("fff", 8).is_err());
    }

    proptest! {
        #[test]
        fn tanimoto_symmetric_and_identity(
            a in proptest::collection::btree_set(0usize..100, 1..30),
            b in proptest::collection::btree_set(0usize..100, 1..30),
        ) {
            let fa = Fingerprint::from_bits(100, a.iter().copied()).unwrap();
            let fb = Fingerprint::from_bits(100, b.iter().copied()).unwrap();
            let ab = tanimoto_similarity(&fa, &fb).unwrap();
            prop_assert_eq!(ab, tanimoto_similarity(&fb, &fa).unwrap());
            prop_assert_eq!(ab == 1.0, a == b);
            prop_assert_eq!(Fingerprint::from_hex(&fa.to_hex(), 100).unwrap(), fa);
        }
    }
}
