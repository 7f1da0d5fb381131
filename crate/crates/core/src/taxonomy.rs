//! Class taxonomies and the fine-class to meta-class mapping.
//!
//! Evaluation groups points into a small set of meta-classes. The default
//! semantic taxonomy is {BACKGROUND, CAR, OTHER_VEHICLES, PEDESTRIAN,
//! WHEELED_VRU}; the semantics-free alternative buckets boxes by volume into
//! {BACKGROUND, SMALL, MEDIUM, LARGE}. A [`ClassMap`] carries the taxonomy
//! plus a total mapping from fine dataset class names onto it.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Index of a meta-class within its [`Taxonomy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId(pub u8);

/// Ordered list of meta-class names. `background` marks the class reserved
/// for points outside every box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    names: Vec<String>,
    background: ClassId,
}

pub const BACKGROUND: &str = "BACKGROUND";

impl Taxonomy {
    pub fn new(names: Vec<String>, background_name: &str) -> Result<Self, TaxonomyError> {
        let background = names
            .iter()
            .position(|n| n == background_name)
            .map(|i| ClassId(i as u8))
            .ok_or_else(|| TaxonomyError::UnknownClassName(background_name.to_string()))?;
        Ok(Taxonomy { names, background })
    }

    /// BACKGROUND, CAR, OTHER_VEHICLES, PEDESTRIAN, WHEELED_VRU.
    pub fn semantic() -> Self {
        Taxonomy {
            names: ["BACKGROUND", "CAR", "OTHER_VEHICLES", "PEDESTRIAN", "WHEELED_VRU"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            background: ClassId(0),
        }
    }

    /// BACKGROUND, SMALL, MEDIUM, LARGE (volume-based clustering).
    pub fn size_buckets() -> Self {
        Taxonomy {
            names: ["BACKGROUND", "SMALL", "MEDIUM", "LARGE"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            background: ClassId(0),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn background(&self) -> ClassId {
        self.background
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..self.names.len()).map(|i| ClassId(i as u8))
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.names.iter().position(|n| n == name).map(|i| ClassId(i as u8))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("unknown class name `{0}`")]
    UnknownClassName(String),
    #[error("fine class `{0}` is not covered by the class map")]
    UnmappedFineClass(String),
}

/// Total mapping from fine dataset class names to meta-classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMap {
    taxonomy: Taxonomy,
    fine_to_meta: BTreeMap<String, ClassId>,
}

impl ClassMap {
    pub fn new(taxonomy: Taxonomy) -> Self {
        ClassMap { taxonomy, fine_to_meta: BTreeMap::new() }
    }

    /// Default mapping for common AV dataset class names onto the semantic
    /// taxonomy. Anything not listed must be added explicitly or the lookup
    /// fails; the map has to stay total over the classes actually present.
    pub fn default_semantic() -> Self {
        let taxonomy = Taxonomy::semantic();
        let mut map = ClassMap::new(taxonomy);
        let groups: [(&str, &[&str]); 4] = [
            ("CAR", &["CAR", "REGULAR_VEHICLE"]),
            (
                "OTHER_VEHICLES",
                &[
                    "ARTICULATED_BUS",
                    "BOX_TRUCK",
                    "BUS",
                    "LARGE_VEHICLE",
                    "RAILED_VEHICLE",
                    "SCHOOL_BUS",
                    "TRAILER",
                    "TRUCK",
                    "TRUCK_CAB",
                    "VEHICULAR_TRAILER",
                ],
            ),
            ("PEDESTRIAN", &["OFFICIAL_SIGNALER", "PEDESTRIAN", "STROLLER", "WHEELCHAIR"]),
            (
                "WHEELED_VRU",
                &[
                    "BICYCLE",
                    "BICYCLIST",
                    "MOTORCYCLE",
                    "MOTORCYCLIST",
                    "WHEELED_DEVICE",
                    "WHEELED_RIDER",
                ],
            ),
        ];
        for (meta, fines) in groups {
            let id = map.taxonomy.id_of(meta).unwrap();
            for fine in fines {
                map.fine_to_meta.insert(fine.to_string(), id);
            }
        }
        map
    }

    /// Identity-style map for the size-bucket taxonomy: boxes are expected to
    /// already carry SMALL/MEDIUM/LARGE as their class.
    pub fn size_buckets() -> Self {
        let taxonomy = Taxonomy::size_buckets();
        let mut map = ClassMap::new(taxonomy.clone());
        for id in taxonomy.ids() {
            map.fine_to_meta.insert(taxonomy.name(id).to_string(), id);
        }
        map
    }

    pub fn insert(
        &mut self,
        fine: impl Into<String>,
        meta_name: &str,
    ) -> Result<(), TaxonomyError> {
        let id = self
            .taxonomy
            .id_of(meta_name)
            .ok_or_else(|| TaxonomyError::UnknownClassName(meta_name.to_string()))?;
        self.fine_to_meta.insert(fine.into(), id);
        Ok(())
    }

    /// Meta-class of a fine class name. Failure means the map is not total
    /// over the dataset; callers surface this as a load error.
    pub fn lookup(&self, fine: &str) -> Result<ClassId, TaxonomyError> {
        self.fine_to_meta
            .get(fine)
            .copied()
            .ok_or_else(|| TaxonomyError::UnmappedFineClass(fine.to_string()))
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// Parses a config of the form `{"taxonomy": [names...], "background": name,
    /// "map": {fine: meta, ...}}`.
    pub fn from_config_json(text: &str) -> Result<Self, ClassMapConfigError> {
        #[derive(Deserialize)]
        struct Config {
            taxonomy: Vec<String>,
            background: String,
            map: BTreeMap<String, String>,
        }
        let cfg: Config = serde_json::from_str(text)?;
        let taxonomy = Taxonomy::new(cfg.taxonomy, &cfg.background)?;
        let mut out = ClassMap::new(taxonomy);
        for (fine, meta) in cfg.map {
            out.insert(fine, &meta)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum ClassMapConfigError {
    #[error("malformed taxonomy config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semantic_taxonomy_layout() {
        let t = Taxonomy::semantic();
        assert_eq!(t.len(), 5);
        assert_eq!(t.name(t.background()), "BACKGROUND");
        assert_eq!(t.id_of("PEDESTRIAN"), Some(ClassId(3)));
    }

    #[test]
    fn default_map_covers_common_names() {
        let m = ClassMap::default_semantic();
        let t = m.taxonomy().clone();
        assert_eq!(t.name(m.lookup("REGULAR_VEHICLE").unwrap()), "CAR");
        assert_eq!(t.name(m.lookup("BUS").unwrap()), "OTHER_VEHICLES");
        assert_eq!(t.name(m.lookup("BICYCLIST").unwrap()), "WHEELED_VRU");
        assert_eq!(t.name(m.lookup("STROLLER").unwrap()), "PEDESTRIAN");
    }

    #[test]
    fn lookup_fails_for_unmapped_class() {
        let m = ClassMap::default_semantic();
        assert_eq!(
            m.lookup("DOG").unwrap_err(),
            TaxonomyError::UnmappedFineClass("DOG".to_string())
        );
    }

    #[test]
    fn config_round_trip() {
        let cfg = r#"{
            "taxonomy": ["BACKGROUND", "THING"],
            "background": "BACKGROUND",
            "map": {"CAR": "THING", "PEDESTRIAN": "THING"}
        }"#;
        let m = ClassMap::from_config_json(cfg).unwrap();
        assert_eq!(m.taxonomy().len(), 2);
        assert_eq!(m.taxonomy().name(m.lookup("CAR").unwrap()), "THING");
    }

    #[test]
    fn config_rejects_unknown_meta() {
        let cfg = r#"{
            "taxonomy": ["BACKGROUND"],
            "background": "BACKGROUND",
            "map": {"CAR": "NOPE"}
        }"#;
        assert!(ClassMap::from_config_json(cfg).is_err());
    }
}
