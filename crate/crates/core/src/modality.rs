use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Evidence channel that can contribute a score vector.
///
/// The declaration order (img, ocr, assoc) is the canonical order used in
/// every audit file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Img,
    Ocr,
    Assoc,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Img, Modality::Ocr, Modality::Assoc];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Img => "img",
            Modality::Ocr => "ocr",
            Modality::Assoc => "assoc",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "img" => Ok(Modality::Img),
            "ocr" => Ok(Modality::Ocr),
            "assoc" => Ok(Modality::Assoc),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

/// Ordered set of modalities, rendered as `img+ocr+assoc`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ModalitySet(BTreeSet<Modality>);

impl ModalitySet {
    pub fn new() -> Self {
        ModalitySet(BTreeSet::new())
    }

    pub fn insert(&mut self, modality: Modality) -> bool {
        self.0.insert(modality)
    }

    pub fn remove(&mut self, modality: Modality) -> bool {
        self.0.remove(&modality)
    }

    pub fn contains(&self, modality: Modality) -> bool {
        self.0.contains(&modality)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Modality> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &ModalitySet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<Modality> for ModalitySet {
    fn from_iter<T: IntoIterator<Item = Modality>>(iter: T) -> Self {
        ModalitySet(iter.into_iter().collect())
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            f.write_str(m.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for ModalitySet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Ok(ModalitySet::new());
        }
        s.split('+').map(str::parse).collect()
    }
}
