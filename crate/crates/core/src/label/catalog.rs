use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ClassId;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
    pub color: [u8; 3],
}

/// Ordered class roster with display colours and a single lesion class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog", into = "RawCatalog")]
pub struct ClassCatalog {
    entries: Vec<ClassEntry>,
    lesion: ClassId,
}

#[derive(Serialize, Deserialize)]
struct RawCatalog {
    classes: Vec<ClassEntry>,
    lesion: ClassId,
}

impl TryFrom<RawCatalog> for ClassCatalog {
    type Error = Error;

    fn try_from(raw: RawCatalog) -> Result<Self> {
        ClassCatalog::new(raw.classes, raw.lesion)
    }
}

impl From<ClassCatalog> for RawCatalog {
    fn from(c: ClassCatalog) -> Self {
        RawCatalog {
            classes: c.entries,
            lesion: c.lesion,
        }
    }
}

impl ClassCatalog {
    pub fn new(entries: Vec<ClassEntry>, lesion: ClassId) -> Result<Self> {
        if entries.is_empty() || entries.len() > 256 {
            return Err(Error::Catalog(format!(
                "catalog needs 1..=256 classes, got {}",
                entries.len()
            )));
        }
        let mut names = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.id.index() != i {
                return Err(Error::Catalog(format!(
                    "class ids must be contiguous from 0; entry {i} has id {}",
                    e.id.0
                )));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::Catalog(format!("duplicate class name `{}`", e.name)));
            }
        }
        if lesion.index() >= entries.len() {
            return Err(Error::Catalog(format!(
                "lesion class {} is not in the catalog",
                lesion.0
            )));
        }
        Ok(ClassCatalog { entries, lesion })
    }

    /// Background, soft tissue, bone, CSF, gray matter, white matter and
    /// ischemic infarct, in that index order.
    pub fn brain_ct() -> Self {
        let roster: [(&str, [u8; 3]); 7] = [
            ("background", [0, 0, 0]),
            ("soft_tissue", [230, 159, 0]),
            ("bone", [240, 240, 240]),
            ("csf", [86, 180, 233]),
            ("gray_matter", [120, 120, 120]),
            ("white_matter", [0, 158, 115]),
            ("infarct", [213, 45, 45]),
        ];
        let entries = roster
            .iter()
            .enumerate()
            .map(|(i, (name, color))| ClassEntry {
                id: ClassId(i as u8),
                name: name.to_string(),
                color: *color,
            })
            .collect();
        ClassCatalog::new(entries, ClassId(6)).expect("built-in catalog is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn lesion_class(&self) -> ClassId {
        self.lesion
    }

    pub fn color(&self, class: ClassId) -> Option<[u8; 3]> {
        self.entries.get(class.index()).map(|e| e.color)
    }

    pub fn name(&self, class: ClassId) -> Option<&str> {
        self.entries.get(class.index()).map(|e| e.name.as_str())
    }

    /// Reverse palette lookup; `None` for colours not in the catalog.
    pub fn class_of_color(&self, color: [u8; 3]) -> Option<ClassId> {
        self.entries.iter().find(|e| e.color == color).map(|e| e.id)
    }
}

impl Default for ClassCatalog {
    fn default() -> Self {
        Self::brain_ct()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_layout() {
        let c = ClassCatalog::brain_ct();
        assert_eq!(c.len(), 7);
        assert_eq!(c.lesion_class(), ClassId(6));
        assert_eq!(c.name(ClassId(4)), Some("gray_matter"));
        let colors: HashSet<_> = c.entries().iter().map(|e| e.color).collect();
        assert_eq!(colors.len(), 7, "palette must be invertible");
    }

    #[test]
    fn rejects_bad_catalogs() {
        let e = |i: u8, n: &str| ClassEntry {
            id: ClassId(i),
            name: n.into(),
            color: [i, 0, 0],
        };
        assert!(ClassCatalog::new(vec![e(0, "a"), e(2, "b")], ClassId(0)).is_err());
        assert!(ClassCatalog::new(vec![e(0, "a"), e(1, "a")], ClassId(0)).is_err());
        assert!(ClassCatalog::new(vec![e(0, "a"), e(1, "b")], ClassId(2)).is_err());
        assert!(ClassCatalog::new(vec![], ClassId(0)).is_err());
    }

    #[test]
    fn json_roundtrip_validates() {
        let c = ClassCatalog::brain_ct();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ClassCatalog>(&s).unwrap(), c);
        let broken = s.replace("\"lesion\":6", "\"lesion\":9");
        assert!(serde_json::from_str::<ClassCatalog>(&broken).is_err());
    }
}
