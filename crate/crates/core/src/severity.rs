use std::fmt;

use crate::error::{Error, Result};

pub const N_CLASSES: usize = 5;

/// A severity grade, 1 (most severe) to 5 (healthy control).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Severity(u8);

impl Severity {
    pub const ALL: [Severity; N_CLASSES] = [
        Severity(1),
        Severity(2),
        Severity(3),
        Severity(4),
        Severity(5),
    ];

    pub fn new(label: u8) -> Result<Self> {
        Self::try_from_i64(i64::from(label))
    }

    pub fn try_from_i64(label: i64) -> Result<Self> {
        if (1..=N_CLASSES as i64).contains(&label) {
            Ok(Severity(label as u8))
        } else {
            Err(Error::LabelOutOfRange(label))
        }
    }

    /// Zero-based position, for indexing per-class arrays.
    pub fn from_index(index: usize) -> Self {
        assert!(index < N_CLASSES, "class index {index} out of range");
        Severity(index as u8 + 1)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_enforced() {
        assert!(Severity::new(0).is_err());
        assert!(Severity::new(6).is_err());
        assert_eq!(Severity::new(3).unwrap().index(), 2);
        assert_eq!(Severity::from_index(4).get(), 5);
    }
}
