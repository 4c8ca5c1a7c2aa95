use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class index reserved for the CTC blank.
pub const BLANK: usize = 0;

/// Ordered gloss vocabulary. Gloss ids run `1..size()`; id 0 is the blank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct GlossVocab {
    glosses: Vec<String>,
    index: HashMap<String, usize>,
}

impl GlossVocab {
    pub fn new<S: Into<String>>(glosses: impl IntoIterator<Item = S>) -> Result<Self> {
        let glosses: Vec<String> = glosses.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(glosses.len());
        for (i, g) in glosses.iter().enumerate() {
            if index.insert(g.clone(), i + 1).is_some() {
                return Err(Error::Config(format!("duplicate gloss {g:?}")));
            }
        }
        Ok(Self { glosses, index })
    }

    /// Number of classes including the blank.
    pub fn size(&self) -> usize {
        self.glosses.len() + 1
    }

    pub fn glosses(&self) -> &[String] {
        &self.glosses
    }

    pub fn id(&self, gloss: &str) -> Result<usize> {
        self.index
            .get(gloss)
            .copied()
            .ok_or_else(|| Error::UnknownGloss(gloss.to_string()))
    }

    pub fn lookup(&self, id: usize) -> Option<&str> {
        id.checked_sub(1).and_then(|i| self.glosses.get(i)).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, sentence: &[S]) -> Result<Vec<usize>> {
        sentence.iter().map(|g| self.id(g.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.lookup(i).unwrap_or("<unk>").to_string())
            .collect()
    }
}

impl TryFrom<Vec<String>> for GlossVocab {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GlossVocab> for Vec<String> {
    fn from(v: GlossVocab) -> Self {
        v.glosses
    }
}

/// Checks that every label is a non-blank id below `classes`.
pub fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l == BLANK || l >= classes) {
        Some(&id) => Err(Error::InvalidLabel { id, size: classes }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        let v = GlossVocab::new(["A", "B", "C"]).unwrap();
        assert_eq!(v.size(), 4);
        for g in v.glosses() {
            assert_eq!(v.lookup(v.id(g).unwrap()), Some(g.as_str()));
        }
        assert_eq!(v.lookup(BLANK), None);
        assert!(matches!(v.id("Z"), Err(Error::UnknownGloss(_))));
        assert!(GlossVocab::new(["A", "A"]).is_err());
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<GlossVocab>(&json).unwrap(), v);
    }
}
