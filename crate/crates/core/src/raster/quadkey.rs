use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Serialized size of every key.
pub const QUADKEY_BYTES: usize = 16;

/// Maximum level for untimed keys: 14 path bytes hold 56 two-bit digits.
pub const MAX_LEVEL_UNTIMED: u8 = 56;

/// Maximum level for timed keys: 10 path bytes once 4 bytes hold the
/// timestamp.
pub const MAX_LEVEL_TIMED: u8 = 40;

const FLAG_TIMED: u8 = 0x01;

/// A quadtree tile address with an optional acquisition timestamp.
///
/// The 16-byte wire form is `[level | packed path | (timestamp) | flags]`
/// with quadrant digits packed two bits each from the high bit down, so
/// lexicographic byte order groups keys that share a path prefix. Untimed
/// keys (`timestamp == 0`) devote 14 bytes to the path (level <= 56); timed
/// keys trade 4 path bytes for a big-endian seconds field (level <= 40).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuadKey {
    level: u8,
    path: Vec<u8>,
    timestamp: u64,
}

impl QuadKey {
    /// The level-0 key covering the whole extent, untimed.
    pub fn root() -> Self {
        Self {
            level: 0,
            path: Vec::new(),
            timestamp: 0,
        }
    }

    pub fn new(path: Vec<u8>, timestamp: u64) -> Result<Self> {
        let max_level = if timestamp == 0 {
            MAX_LEVEL_UNTIMED
        } else {
            MAX_LEVEL_TIMED
        };
        if path.len() > max_level as usize {
            return Err(Error::LevelOverflow {
                level: path.len().min(u8::MAX as usize) as u8,
                max: max_level,
            });
        }
        for (index, &digit) in path.iter().enumerate() {
            if digit > 3 {
                return Err(Error::InvalidQuadrantDigit { digit, index });
            }
        }
        if timestamp > u64::from(u32::MAX) {
            return Err(Error::TimestampOverflow { timestamp });
        }
        Ok(Self {
            level: path.len() as u8,
            path,
            timestamp,
        })
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn path(&self) -> &[u8] {
        &self.path
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn is_timed(&self) -> bool {
        self.timestamp != 0
    }

    /// Append one quadrant digit, producing the child key.
    pub fn child(&self, digit: u8) -> Result<Self> {
        let mut path = self.path.clone();
        path.push(digit);
        Self::new(path, self.timestamp)
    }

    /// Encode into the fixed 16-byte form.
    pub fn encode(&self) -> [u8; QUADKEY_BYTES] {
        let mut key = [0u8; QUADKEY_BYTES];
        key[0] = self.level;
        for (i, &digit) in self.path.iter().enumerate() {
            let bit = i * 2;
            key[1 + bit / 8] |= digit << (6 - bit % 8);
        }
        if self.is_timed() {
            key[11..15].copy_from_slice(&(self.timestamp as u32).to_be_bytes());
            key[15] = FLAG_TIMED;
        }
        key
    }

    /// Decode a 16-byte key, rejecting non-canonical forms so that
    /// `decode(encode(k)) == k` and distinct keys map to distinct bytes.
    pub fn decode(key: &[u8; QUADKEY_BYTES]) -> Result<Self> {
        let flags = key[15];
        let (max_level, path_bytes) = match flags {
            0 => (MAX_LEVEL_UNTIMED, 14usize),
            FLAG_TIMED => (MAX_LEVEL_TIMED, 10usize),
            other => {
                return Err(Error::MalformedKey {
                    reason: format!("unknown flags byte 0x{other:02x}"),
                })
            }
        };
        let level = key[0];
        if level > max_level {
            return Err(Error::LevelOverflow {
                level,
                max: max_level,
            });
        }
        let mut path = Vec::with_capacity(level as usize);
        for i in 0..level as usize {
            let bit = i * 2;
            path.push((key[1 + bit / 8] >> (6 - bit % 8)) & 0b11);
        }
        // Bits past the path and bytes past the payload must be zero.
        for bit in level as usize * 2..path_bytes * 8 {
            if (key[1 + bit / 8] >> (7 - bit % 8)) & 1 != 0 {
                return Err(Error::MalformedKey {
                    reason: "nonzero bits beyond the encoded path".to_string(),
                });
            }
        }
        let timestamp = if flags == FLAG_TIMED {
            let ts = u32::from_be_bytes(key[11..15].try_into().expect("4 bytes"));
            if ts == 0 {
                return Err(Error::MalformedKey {
                    reason: "timed key with zero timestamp".to_string(),
                });
            }
            u64::from(ts)
        } else {
            0
        };
        Ok(Self {
            level,
            path,
            timestamp,
        })
    }
}

/// Keys print as their quadrant digit string, e.g. `"0231"`; the root key
/// prints as the empty string.
impl fmt::Display for QuadKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for digit in &self.path {
            write!(f, "{digit}")?;
        }
        Ok(())
    }
}

impl FromStr for QuadKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut path = Vec::with_capacity(s.len());
        for (index, ch) in s.chars().enumerate() {
            let digit = ch.to_digit(10).filter(|d| *d <= 3).ok_or(
                Error::InvalidQuadrantDigit {
                    digit: ch.to_digit(36).unwrap_or(99) as u8,
                    index,
                },
            )?;
            path.push(digit as u8);
        }
        Self::new(path, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn root_round_trips() {
        let key = QuadKey::root();
        assert_eq!(QuadKey::decode(&key.encode()).unwrap(), key);
        assert_eq!(key.encode().len(), QUADKEY_BYTES);
    }

    #[test]
    fn random_keys_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let timed = rng.gen_bool(0.5);
            let max = if timed { MAX_LEVEL_TIMED } else { MAX_LEVEL_UNTIMED };
            let level = rng.gen_range(0..=max) as usize;
            let path: Vec<u8> = (0..level).map(|_| rng.gen_range(0..4)).collect();
            let timestamp = if timed {
                u64::from(rng.gen_range(1..=u32::MAX))
            } else {
                0
            };
            let key = QuadKey::new(path, timestamp).unwrap();
            assert_eq!(QuadKey::decode(&key.encode()).unwrap(), key);
        }
    }

    #[test]
    fn distinct_keys_encode_distinctly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let mut seen = std::collections::HashMap::new();
        for _ in 0..2000 {
            let level = rng.gen_range(0..=12) as usize;
            let path: Vec<u8> = (0..level).map(|_| rng.gen_range(0..4)).collect();
            let timestamp = if rng.gen_bool(0.3) {
                u64::from(rng.gen_range(1..1000u32))
            } else {
                0
            };
            let key = QuadKey::new(path, timestamp).unwrap();
            let encoded = key.encode();
            if let Some(previous) = seen.insert(encoded, key.clone()) {
                assert_eq!(previous, key, "two keys shared one encoding");
            }
        }
    }

    // Enumerate every level-5 key pair: the common byte prefix of the
    // encodings is exactly 1 + d/4 bytes, where d is the common digit
    // prefix (digits pack four per byte). Keys sharing four or more digits
    // therefore compare strictly closer than keys differing at digit 1,
    // and byte order equals digit order, which keeps prefix groups
    // contiguous under lexicographic sort.
    #[test]
    fn byte_order_groups_path_prefixes() {
        let level = 5usize;
        let mut keys = Vec::new();
        for index in 0..4usize.pow(level as u32) {
            let path: Vec<u8> = (0..level)
                .map(|d| ((index >> (2 * (level - 1 - d))) & 0b11) as u8)
                .collect();
            keys.push(QuadKey::new(path, 0).unwrap());
        }

        for a in &keys {
            for b in &keys {
                if a == b {
                    continue;
                }
                let (ea, eb) = (a.encode(), b.encode());
                let digit_prefix = a
                    .path()
                    .iter()
                    .zip(b.path())
                    .take_while(|(x, y)| x == y)
                    .count();
                let byte_prefix = ea.iter().zip(&eb).take_while(|(x, y)| x == y).count();
                assert_eq!(byte_prefix, 1 + digit_prefix / 4);
                assert_eq!(
                    ea.cmp(&eb),
                    a.path().cmp(b.path()),
                    "byte order must equal path order"
                );
            }
        }

        let sharing = |p: &[u8]| QuadKey::new(p.to_vec(), 0).unwrap().encode();
        let deep_a = sharing(&[2, 1, 3, 0, 1, 2]);
        let deep_b = sharing(&[2, 1, 3, 0, 3, 1]);
        let far = sharing(&[0, 1, 3, 0, 1, 2]);
        let prefix_len =
            |x: &[u8; 16], y: &[u8; 16]| x.iter().zip(y).take_while(|(a, b)| a == b).count();
        assert!(prefix_len(&deep_a, &deep_b) > prefix_len(&deep_a, &far));
    }

    #[test]
    fn level_overflow_and_bad_digits_are_rejected() {
        assert!(matches!(
            QuadKey::new(vec![0; 57], 0),
            Err(Error::LevelOverflow { max: 56, .. })
        ));
        assert!(matches!(
            QuadKey::new(vec![0; 41], 99),
            Err(Error::LevelOverflow { max: 40, .. })
        ));
        assert!(matches!(
            QuadKey::new(vec![0, 4], 0),
            Err(Error::InvalidQuadrantDigit { digit: 4, index: 1 })
        ));
        assert!(matches!(
            QuadKey::new(vec![], u64::from(u32::MAX) + 1),
            Err(Error::TimestampOverflow { .. })
        ));
    }

    #[test]
    fn noncanonical_bytes_are_rejected() {
        let mut key = QuadKey::new(vec![1, 2], 0).unwrap().encode();
        key[10] = 0xff; // junk beyond the 2-digit path
        assert!(QuadKey::decode(&key).is_err());

        let mut flagged = QuadKey::root().encode();
        flagged[15] = 0x80;
        assert!(QuadKey::decode(&flagged).is_err());

        let mut timed_zero = QuadKey::new(vec![1], 7).unwrap().encode();
        timed_zero[11..15].copy_from_slice(&[0, 0, 0, 0]);
        assert!(QuadKey::decode(&timed_zero).is_err());
    }

    #[test]
    fn display_and_parse_round_trip() {
        let key = QuadKey::new(vec![0, 2, 3, 1], 0).unwrap();
        assert_eq!(key.to_string(), "0231");
        assert_eq!("0231".parse::<QuadKey>().unwrap(), key);
        assert_eq!("".parse::<QuadKey>().unwrap(), QuadKey::root());
        assert!("0x1".parse::<QuadKey>().is_err());
        assert!("04".parse::<QuadKey>().is_err());
    }
}
