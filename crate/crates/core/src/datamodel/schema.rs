use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;
use crate::seed::fnv1a;

/// One attribute column. Binary attributes have `num_classes == 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
}

fn default_num_classes() -> usize {
    2
}

impl AttributeSpec {
    pub fn binary(name: impl Into<String>, class_name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            class_name: class_name.into(),
            category: None,
            num_classes: 2,
        }
    }
}

/// A group of mutually exclusive attributes: at most one may be true per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeClass {
    pub name: String,
    /// Column indices into the schema, in schema order.
    pub members: Vec<usize>,
}

/// Ordered attribute list. The order is the column order of every matrix downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    attributes: Vec<AttributeSpec>,
    classes: Vec<AttributeClass>,
    index: HashMap<String, usize>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Schema("schema has no attributes".into()));
        }
        let mut index = HashMap::with_capacity(attributes.len());
        let mut classes: Vec<AttributeClass> = Vec::new();
        for (i, spec) in attributes.iter().enumerate() {
            if spec.name.is_empty() {
                return Err(Error::Schema(format!("attribute {i} has an empty name")));
            }
            if spec.num_classes < 2 {
                return Err(Error::Schema(format!(
                    "attribute `{}` needs num_classes >= 2, got {}",
                    spec.name, spec.num_classes
                )));
            }
            if index.insert(spec.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate attribute `{}`", spec.name)));
            }
            match classes.iter_mut().find(|c| c.name == spec.class_name) {
                Some(class) => class.members.push(i),
                None => classes.push(AttributeClass {
                    name: spec.class_name.clone(),
                    members: vec![i],
                }),
            }
        }
        Ok(Self {
            attributes,
            classes,
            index,
        })
    }

    /// `k` binary attributes named `attr_00..`, each in its own class.
    pub fn binary_independent(k: usize) -> Result<Self> {
        Self::new(
            (0..k)
                .map(|i| {
                    let name = format!("attr_{i:02}");
                    AttributeSpec::binary(name.clone(), name)
                })
                .collect(),
        )
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn classes(&self) -> &[AttributeClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Class index of every attribute column.
    pub fn class_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.attributes.len()];
        for (ci, class) in self.classes.iter().enumerate() {
            for &m in &class.members {
                out[m] = ci;
            }
        }
        out
    }

    /// Keeps the attributes named in `names`, in this schema's order.
    pub fn restrict(&self, names: &[String]) -> Result<Self> {
        for n in names {
            if self.index_of(n).is_none() {
                return Err(Error::Schema(format!("unknown attribute `{n}`")));
            }
        }
        Self::new(
            self.attributes
                .iter()
                .filter(|a| names.contains(&a.name))
                .cloned()
                .collect(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.attributes).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, SchemaJsonError> {
        let attrs: Vec<AttributeSpec> = serde_json::from_str(text).map_err(SchemaJsonError::Json)?;
        Self::new(attrs).map_err(SchemaJsonError::Invalid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io_util::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            SchemaJsonError::Json(source) => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            SchemaJsonError::Invalid(e) => e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, (self.to_json() + "\n").as_bytes())
    }

    /// Stable hash of the canonical JSON form; stored in model files.
    pub fn hash(&self) -> u64 {
        fnv1a(serde_json::to_string(&self.attributes).expect("schema serializes").as_bytes())
    }
}

#[derive(Debug)]
pub enum SchemaJsonError {
    Json(serde_json::Error),
    Invalid(Error),
}
