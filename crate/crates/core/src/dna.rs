//! Nucleotide sequences over the `{A, C, G, T}` alphabet.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

/// Base order used for every 4-row matrix in the crate.
pub const BASES: [u8; 4] = *b"ACGT";

/// Index of a base in `A, C, G, T` order.
#[inline]
pub fn base_index(b: u8) -> Option<usize> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

/// Index of the complementary base (`A<->T`, `C<->G`).
#[inline]
pub fn complement_index(i: usize) -> usize {
    3 - i
}

/// A validated, non-empty DNA sequence.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DnaSequence(String);

impl DnaSequence {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(CoreError::InvalidPayload("empty sequence".into()));
        }
        if let Some((pos, c)) = text.bytes().enumerate().find(|(_, b)| base_index(*b).is_none()) {
            return Err(CoreError::InvalidPayload(format!(
                "character {:?} at position {} is not in {{A,C,G,T}}",
                c as char, pos
            )));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Base indices in `A, C, G, T` order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        // validated at construction
        self.0.bytes().map(|b| base_index(b).unwrap())
    }

    pub fn reverse_complement(&self) -> Self {
        let rc: String = self
            .0
            .bytes()
            .rev()
            .map(|b| BASES[complement_index(base_index(b).unwrap())] as char)
            .collect();
        Self(rc)
    }

    /// Number of differing positions; errors on unequal length.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        if self.len() != other.len() {
            return Err(CoreError::LengthMismatch(format!("{} vs {}", self.len(), other.len())));
        }
        Ok(self
            .as_bytes()
            .iter()
            .zip(other.as_bytes())
            .filter(|(a, b)| a != b)
            .count())
    }
}

impl fmt::Debug for DnaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DnaSequence({})", self.0)
    }
}

impl fmt::Display for DnaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for DnaSequence {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

impl Serialize for DnaSequence {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for DnaSequence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        DnaSequence::new(s).map_err(serde::de::Error::custom)
    }
}
