//! Identifiers, keypoints, and binary descriptors.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeyFrameId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MapPointId(pub u64);

impl std::fmt::Display for KeyFrameId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "kf{}", self.0)
    }
}

impl std::fmt::Display for MapPointId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "mp{}", self.0)
    }
}

/// Detected image feature. The angle is informational only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPoint {
    pub u: f64,
    pub v: f64,
    pub octave: u8,
    pub angle: f64,
}

/// 256-bit binary descriptor, serialized as 64 hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u8; 32]);

impl Descriptor {
    pub const BITS: u32 = 256;

    pub fn zero() -> Self {
        Self([0u8; 32])
    }

    pub fn bit(&self, index: usize) -> bool {
        debug_assert!(index < 256);
        (self.0[index / 8] >> (index % 8)) & 1 == 1
    }

    pub fn set_bit(&mut self, index: usize, value: bool) {
        let byte = index / 8;
        let mask = 1u8 << (index % 8);
        if value {
            self.0[byte] |= mask;
        } else {
            self.0[byte] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, index: usize) {
        self.0[index / 8] ^= 1u8 << (index % 8);
    }

    pub fn not(&self) -> Self {
        let mut out = [0u8; 32];
        for (o, b) in out.iter_mut().zip(self.0.iter()) {
            *o = !b;
        }
        Self(out)
    }
}

impl std::fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Descriptor({})", hex::encode(self.0))
    }
}

impl Serialize for Descriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Descriptor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes = hex::decode(&s).map_err(D::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| D::Error::custom("descriptor must be 32 bytes"))?;
        Ok(Descriptor(arr))
    }
}
