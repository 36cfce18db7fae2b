use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::entity::{is_entity_id, ContextEntity, NONE, RELATIONSHIP};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributeSpec {
    pub semantic_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referenced_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SchemaDef {
    pub entity_type: String,
    pub required: Vec<String>,
    pub attribute_specs: BTreeMap<String, AttributeSpec>,
}

impl SchemaDef {
    pub fn check(&self) -> Result<(), ModelError> {
        if self.entity_type.is_empty() {
            return Err(ModelError::InvalidSchema("empty entityType".into()));
        }
        if let Some(missing) = self
            .required
            .iter()
            .find(|name| !self.attribute_specs.contains_key(*name))
        {
            return Err(ModelError::InvalidSchema(format!(
                "{}: required attribute `{missing}` has no spec",
                self.entity_type
            )));
        }
        Ok(())
    }

    fn parse(text: &str) -> Result<Self, ModelError> {
        let schema: SchemaDef =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidSchema(e.to_string()))?;
        schema.check()?;
        Ok(schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Violation {
    MissingRequired { attr: String },
    DisallowedValue { attr: String, value: Value },
    DanglingReference { attr: String, target: Value },
    TypeMismatch { attr: String, expected: String, found: String },
}

/// Outcome of validating one entity. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl SchemaDef {
    /// Checks required attributes, closed value sets, semantic types and the
    /// syntactic shape of references.
    pub fn validate(&self, entity: &ContextEntity) -> Result<ValidationReport, ModelError> {
        self.validate_with_refs(entity, |_| None::<String>, false)
    }

    /// Like [`SchemaDef::validate`], but also resolves every reference through
    /// `lookup` (entity id to entity type) and flags targets that are absent
    /// or of the wrong type.
    pub fn validate_resolved<F>(
        &self,
        entity: &ContextEntity,
        lookup: F,
    ) -> Result<ValidationReport, ModelError>
    where
        F: Fn(&str) -> Option<String>,
    {
        self.validate_with_refs(entity, lookup, true)
    }

    fn validate_with_refs<F>(
        &self,
        entity: &ContextEntity,
        lookup: F,
        resolve: bool,
    ) -> Result<ValidationReport, ModelError>
    where
        F: Fn(&str) -> Option<String>,
    {
        if entity.entity_type != self.entity_type {
            return Err(ModelError::SchemaMismatch {
                expected: self.entity_type.clone(),
                found: entity.entity_type.clone(),
            });
        }
        let mut violations = Vec::new();
        for name in &self.required {
            if !entity.attributes.contains_key(name) {
                violations.push(Violation::MissingRequired { attr: name.clone() });
            }
        }
        for (name, spec) in &self.attribute_specs {
            let Some(attr) = entity.attributes.get(name) else {
                continue;
            };
            // A cleared reference is stored as null.
            let cleared_ref = spec.semantic_type == RELATIONSHIP && attr.kind == NONE;
            if attr.kind != spec.semantic_type && !cleared_ref {
                violations.push(Violation::TypeMismatch {
                    attr: name.clone(),
                    expected: spec.semantic_type.clone(),
                    found: attr.kind.clone(),
                });
            }
            if let Some(allowed) = &spec.allowed_values {
                if !allowed.contains(&attr.value) {
                    violations.push(Violation::DisallowedValue {
                        attr: name.clone(),
                        value: attr.value.clone(),
                    });
                }
            }
            if let Some(target_type) = &spec.referenced_type {
                let dangling = match &attr.value {
                    Value::Null => false,
                    Value::String(target) if is_entity_id(target) => {
                        resolve && lookup(target).as_deref() != Some(target_type.as_str())
                    }
                    _ => true,
                };
                if dangling {
                    violations.push(Violation::DanglingReference {
                        attr: name.clone(),
                        target: attr.value.clone(),
                    });
                }
            }
        }
        Ok(ValidationReport { violations })
    }
}

const BUILTIN: [&str; 4] = [
    include_str!("../../schemas/OffStreetParking.json"),
    include_str!("../../schemas/ParkingSpot.json"),
    include_str!("../../schemas/Vehicle.json"),
    include_str!("../../schemas/WeatherForecast.json"),
];

/// Schema definitions keyed by entity type.
#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    schemas: BTreeMap<String, SchemaDef>,
}

impl SchemaRegistry {
    /// The four parking-twin models.
    pub fn builtin() -> Self {
        let mut registry = Self::default();
        for text in BUILTIN {
            registry.insert(SchemaDef::parse(text).expect("built-in schema is valid"));
        }
        registry
    }

    /// Reads every `<entityType>.json` in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ModelError> {
        let io = |e: std::io::Error| ModelError::Io(e.to_string());
        let mut registry = Self::default();
        let mut paths: Vec<_> = fs::read_dir(dir.as_ref())
            .map_err(io)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let schema = SchemaDef::parse(&fs::read_to_string(&path).map_err(io)?)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if stem != schema.entity_type {
                return Err(ModelError::InvalidSchema(format!(
                    "{} declares entityType `{}`",
                    path.display(),
                    schema.entity_type
                )));
            }
            registry.insert(schema);
        }
        Ok(registry)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<(), ModelError> {
        let io = |e: std::io::Error| ModelError::Io(e.to_string());
        fs::create_dir_all(dir.as_ref()).map_err(io)?;
        for schema in self.schemas.values() {
            let text = serde_json::to_string_pretty(schema).expect("schema serializes");
            fs::write(dir.as_ref().join(format!("{}.json", schema.entity_type)), text).map_err(io)?;
        }
        Ok(())
    }

    pub fn insert(&mut self, schema: SchemaDef) {
        self.schemas.insert(schema.entity_type.clone(), schema);
    }

    pub fn get(&self, entity_type: &str) -> Option<&SchemaDef> {
        self.schemas.get(entity_type)
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    /// Entity types without a registered schema validate trivially.
    pub fn validate(&self, entity: &ContextEntity) -> ValidationReport {
        match self.schemas.get(&entity.entity_type) {
            Some(schema) => schema.validate(entity).expect("types agree"),
            None => ValidationReport::default(),
        }
    }
}
