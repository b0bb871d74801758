//! Object class catalog: names, semantic prototypes, physical extents and
//! placement priors. The catalog is the single source of truth for which
//! classes exist, which are parents (large furniture-like anchors) and which
//! are children (target objects placed near parents).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),
    #[error("class {class:?} placement prior references unknown parent {parent:?}")]
    UnknownParentRef { class: String, parent: String },
    #[error("parent {parent:?} (size {parent_size}) smaller than child {child:?} (size {child_size})")]
    ParentSmallerThanChild {
        parent: String,
        parent_size: f64,
        child: String,
        child_size: f64,
    },
    #[error("class {class:?}: {msg}")]
    BadClass { class: String, msg: String },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
}

/// One object class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    /// Semantic cluster id; classes sharing a prototype get nearby synthetic
    /// embeddings, which is what zero-shot transfer relies on.
    pub prototype: String,
    /// Physical size in meters (box edge used by the projection model).
    pub size_m: f64,
    /// Height range (meters, center above floor) sampled at placement.
    pub z_range: [f64; 2],
    pub is_parent: bool,
    /// Child placement prior: (parent class, weight). Empty for parents.
    #[serde(default)]
    pub placement: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCatalog {
    classes: Vec<ClassSpec>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl ClassCatalog {
    pub fn new(classes: Vec<ClassSpec>) -> Result<Self, CatalogError> {
        let mut cat = ClassCatalog {
            classes,
            index: BTreeMap::new(),
        };
        cat.rebuild_index()?;
        cat.validate()?;
        Ok(cat)
    }

    /// Rebuild the name index (needed after deserialization).
    pub fn rebuild_index(&mut self) -> Result<(), CatalogError> {
        self.index.clear();
        for (i, c) in self.classes.iter().enumerate() {
            if self.index.insert(c.name.clone(), i).is_some() {
                return Err(CatalogError::DuplicateClass(c.name.clone()));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CatalogError> {
        let max_child = self
            .children()
            .map(|c| c.size_m)
            .fold(0.0f64, f64::max);
        for c in &self.classes {
            if c.size_m <= 0.0 {
                return Err(CatalogError::BadClass {
                    class: c.name.clone(),
                    msg: "size must be positive".into(),
                });
            }
            if c.z_range[0] > c.z_range[1] || c.z_range[0] < 0.0 {
                return Err(CatalogError::BadClass {
                    class: c.name.clone(),
                    msg: format!("bad z range {:?}", c.z_range),
                });
            }
            if c.is_parent && c.size_m < max_child {
                let child = self
                    .children()
                    .find(|ch| ch.size_m >= c.size_m)
                    .map(|ch| (ch.name.clone(), ch.size_m))
                    .unwrap_or_default();
                return Err(CatalogError::ParentSmallerThanChild {
                    parent: c.name.clone(),
                    parent_size: c.size_m,
                    child: child.0,
                    child_size: child.1,
                });
            }
            for (p, w) in &c.placement {
                let ok = self.get(p).map(|s| s.is_parent).unwrap_or(false);
                if !ok {
                    return Err(CatalogError::UnknownParentRef {
                        class: c.name.clone(),
                        parent: p.clone(),
                    });
                }
                if *w < 0.0 {
                    return Err(CatalogError::BadClass {
                        class: c.name.clone(),
                        msg: "negative placement weight".into(),
                    });
                }
            }
            if !c.is_parent && c.placement.is_empty() {
                return Err(CatalogError::BadClass {
                    class: c.name.clone(),
                    msg: "child class needs a placement prior".into(),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ClassSpec> {
        self.index.get(name).map(|&i| &self.classes[i])
    }

    pub fn require(&self, name: &str) -> Result<&ClassSpec, CatalogError> {
        self.get(name)
            .ok_or_else(|| CatalogError::UnknownClass(name.to_string()))
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassSpec> {
        self.classes.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn parents(&self) -> impl Iterator<Item = &ClassSpec> {
        self.classes.iter().filter(|c| c.is_parent)
    }

    /// Child classes: the target vocabulary.
    pub fn children(&self) -> impl Iterator<Item = &ClassSpec> {
        self.classes.iter().filter(|c| !c.is_parent)
    }

    pub fn child_names(&self) -> Vec<String> {
        self.children().map(|c| c.name.clone()).collect()
    }

    pub fn prototypes(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.classes {
            if seen.insert(c.prototype.clone()) {
                out.push(c.prototype.clone());
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Built-in desk-scale catalog: four parent classes and four semantic
/// clusters of child classes, `children_per_cluster` from each (1..=3).
pub fn desk_catalog(children_per_cluster: usize) -> ClassCatalog {
    assert!((1..=3).contains(&children_per_cluster));
    let parent = |name: &str, size: f64, z: [f64; 2]| ClassSpec {
        name: name.into(),
        prototype: format!("{name}_proto"),
        size_m: size,
        z_range: z,
        is_parent: true,
        placement: vec![],
    };
    let child = |name: &str, proto: &str, size: f64, placement: &[(&str, f64)]| ClassSpec {
        name: name.into(),
        prototype: proto.into(),
        size_m: size,
        z_range: [0.7, 1.1],
        is_parent: false,
        placement: placement
            .iter()
            .map(|(p, w)| (p.to_string(), *w))
            .collect(),
    };

    let clusters: [(&str, [&str; 3], f64, Vec<(&str, f64)>); 4] = [
        (
            "drinkware",
            ["mug", "cup", "bottle"],
            0.14,
            vec![("table", 0.5), ("counter", 0.5)],
        ),
        (
            "electronics",
            ["laptop", "phone", "remote"],
            0.22,
            vec![("table", 0.4), ("sofa", 0.4), ("shelf", 0.2)],
        ),
        (
            "reading",
            ["book", "magazine", "notebook"],
            0.20,
            vec![("shelf", 0.5), ("sofa", 0.3), ("table", 0.2)],
        ),
        (
            "decor",
            ["plant", "vase", "lamp"],
            0.25,
            vec![("shelf", 0.4), ("counter", 0.3), ("table", 0.3)],
        ),
    ];

    let mut classes = vec![
        parent("table", 1.0, [0.4, 0.5]),
        parent("sofa", 1.4, [0.45, 0.55]),
        parent("shelf", 1.1, [0.8, 1.0]),
        parent("counter", 1.2, [0.5, 0.6]),
    ];
    for (proto, names, size, placement) in clusters {
        for name in names.iter().take(children_per_cluster) {
            classes.push(child(name, proto, size, &placement));
        }
    }
    ClassCatalog::new(classes).expect("desk catalog is valid")
}
