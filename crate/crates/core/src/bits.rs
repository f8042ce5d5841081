//! Fixed-length bit sets backing the binary masks.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitMask {
    len: usize,
    words: Vec<u64>,
}

impl BitMask {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut m = Self {
            len,
            words: vec![u64::MAX; len.div_ceil(64)],
        };
        m.clear_tail();
        m
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut m = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                m.set(i, true);
            }
        }
        m
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::zeros(len);
        for i in indices {
            m.set(i, true);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_zeros(&self) -> usize {
        self.len - self.count_ones()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Logical not, restricted to the first `len` bits.
    pub fn not(&self) -> Self {
        let mut m = Self {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        m.clear_tail();
        m
    }

    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        Self {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        Self {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.words.len() * 16);
        for w in &self.words {
            s.push_str(&format!("{w:016x}"));
        }
        s
    }
}

impl fmt::Debug for BitMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitMask[")?;
        for (i, b) in self.iter().enumerate() {
            if i == 64 {
                write!(f, "…")?;
                break;
            }
            write!(f, "{}", b as u8)?;
        }
        write!(f, "; {} of {}]", self.count_ones(), self.len)
    }
}

#[derive(Serialize, Deserialize)]
struct PackedBits {
    len: usize,
    hex: String,
}

impl Serialize for BitMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PackedBits {
            len: self.len,
            hex: self.to_hex(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BitMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let packed = PackedBits::deserialize(deserializer)?;
        let n_words = packed.len.div_ceil(64);
        if packed.hex.len() != n_words * 16 {
            return Err(D::Error::custom("hex length does not match bit length"));
        }
        let words = (0..n_words)
            .map(|i| u64::from_str_radix(&packed.hex[i * 16..(i + 1) * 16], 16))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        let mut m = BitMask { len: packed.len, words };
        m.clear_tail();
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ones_respects_length() {
        let m = BitMask::ones(70);
        assert_eq!(m.count_ones(), 70);
        assert_eq!(m.not().count_ones(), 0);
        assert_eq!(m.iter_ones().last(), Some(69));
    }

    #[test]
    fn xor_and_subset() {
        let a = BitMask::from_bools(&[true, true, false, false]);
        let b = BitMask::from_bools(&[false, true, true, false]);
        assert_eq!(a.xor(&b), BitMask::from_bools(&[true, false, true, false]));
        assert!(a.and(&b).is_subset_of(&a));
        assert!(!b.is_subset_of(&a));
    }

    proptest! {
        #[test]
        fn serde_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let m = BitMask::from_bools(&bits);
            let json = serde_json::to_string(&m).unwrap();
            let back: BitMask = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(m.iter_ones().count(), m.count_ones());
        }
    }
}
