use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type NodeTypeId = usize;
pub type EdgeTypeId = usize;

pub const INDIVIDUAL: &str = "individual";
pub const ORGANIZATION: &str = "organization";
pub const EXTERNAL: &str = "external";
pub const TXN: &str = "txn";
pub const ROLE: &str = "role";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeDef {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl TypeDef {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        TypeDef {
            name: name.into(),
            dim,
            feature_names: Vec::new(),
        }
    }

    pub fn with_feature_names(mut self, names: &[&str]) -> Self {
        self.feature_names = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn feature_name(&self, i: usize) -> String {
        self.feature_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("f{i}"))
    }
}

/// A typed relation `(source node type, edge type, target node type)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaStep {
    pub source: NodeTypeId,
    pub edge: EdgeTypeId,
    pub target: NodeTypeId,
}

impl MetaStep {
    pub fn new(source: NodeTypeId, edge: EdgeTypeId, target: NodeTypeId) -> Self {
        MetaStep {
            source,
            edge,
            target,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroSchema {
    node_types: Vec<TypeDef>,
    edge_types: Vec<TypeDef>,
    meta_steps: Vec<MetaStep>,
}

impl HeteroSchema {
    pub fn new(
        node_types: Vec<TypeDef>,
        edge_types: Vec<TypeDef>,
        meta_steps: Vec<MetaStep>,
    ) -> Result<Self> {
        check_unique("node", &node_types)?;
        check_unique("edge", &edge_types)?;
        for t in node_types.iter().chain(&edge_types) {
            if !t.feature_names.is_empty() && t.feature_names.len() != t.dim {
                return Err(Error::Schema(format!(
                    "type `{}` declares {} feature names for dimension {}",
                    t.name,
                    t.feature_names.len(),
                    t.dim
                )));
            }
        }
        let mut seen = HashSet::new();
        for s in &meta_steps {
            if s.source >= node_types.len()
                || s.target >= node_types.len()
                || s.edge >= edge_types.len()
            {
                return Err(Error::Schema(format!(
                    "meta-step {s:?} references an undeclared type"
                )));
            }
            if !seen.insert(*s) {
                return Err(Error::Schema(format!("meta-step {s:?} declared twice")));
            }
        }
        Ok(HeteroSchema {
            node_types,
            edge_types,
            meta_steps,
        })
    }

    /// The three-node-type transaction schema: individuals, organizations and
    /// externals connected by `txn` edges (every ordered pair except
    /// external→external) plus `role` edges from individuals to organizations.
    pub fn aml() -> Self {
        let node_types = vec![
            TypeDef::new(INDIVIDUAL, 11),
            TypeDef::new(ORGANIZATION, 8),
            TypeDef::new(EXTERNAL, 2),
        ];
        let edge_types = vec![
            TypeDef::new(TXN, 2).with_feature_names(&["count", "amount"]),
            TypeDef::new(ROLE, 2).with_feature_names(&["role_type", "ownership"]),
        ];
        let (ind, org, ext) = (0, 1, 2);
        let (txn, role) = (0, 1);
        let meta_steps = vec![
            MetaStep::new(ind, txn, ind),
            MetaStep::new(ind, txn, org),
            MetaStep::new(ind, txn, ext),
            MetaStep::new(org, txn, ind),
            MetaStep::new(org, txn, org),
            MetaStep::new(org, txn, ext),
            MetaStep::new(ext, txn, ind),
            MetaStep::new(ext, txn, org),
            MetaStep::new(ind, role, org),
        ];
        HeteroSchema::new(node_types, edge_types, meta_steps).expect("static schema is valid")
    }

    pub fn node_types(&self) -> &[TypeDef] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[TypeDef] {
        &self.edge_types
    }

    /// Allowed meta-steps in declaration order.
    pub fn meta_steps(&self) -> &[MetaStep] {
        &self.meta_steps
    }

    pub fn num_node_types(&self) -> usize {
        self.node_types.len()
    }

    pub fn node_type_id(&self, name: &str) -> Result<NodeTypeId> {
        self.node_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown node type `{name}`")))
    }

    pub fn edge_type_id(&self, name: &str) -> Result<EdgeTypeId> {
        self.edge_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown edge type `{name}`")))
    }

    pub fn node_dim(&self, t: NodeTypeId) -> usize {
        self.node_types[t].dim
    }

    pub fn edge_dim(&self, e: EdgeTypeId) -> usize {
        self.edge_types[e].dim
    }

    pub fn step_index(&self, step: MetaStep) -> Option<usize> {
        self.meta_steps.iter().position(|s| *s == step)
    }

    pub fn step_by_names(&self, source: &str, edge: &str, target: &str) -> Result<MetaStep> {
        let step = MetaStep::new(
            self.node_type_id(source)?,
            self.edge_type_id(edge)?,
            self.node_type_id(target)?,
        );
        match self.step_index(step) {
            Some(_) => Ok(step),
            None => Err(Error::Schema(format!(
                "meta-step ({source}, {edge}, {target}) is not allowed by the schema"
            ))),
        }
    }

    /// Indices (into [`meta_steps`](Self::meta_steps)) of the steps ending at
    /// `target`, in declaration order.
    pub fn steps_into(&self, target: NodeTypeId) -> Vec<usize> {
        (0..self.meta_steps.len())
            .filter(|&i| self.meta_steps[i].target == target)
            .collect()
    }

    /// `<src>__<etype>__<dst>`, used in file names and parameter names.
    pub fn step_name(&self, step: MetaStep) -> String {
        format!(
            "{}__{}__{}",
            self.node_types[step.source].name,
            self.edge_types[step.edge].name,
            self.node_types[step.target].name
        )
    }

    pub fn to_file(&self) -> SchemaFile {
        SchemaFile {
            node_types: self.node_types.clone(),
            edge_types: self.edge_types.clone(),
            allowed_meta_steps: self
                .meta_steps
                .iter()
                .map(|s| StepNames {
                    source: self.node_types[s.source].name.clone(),
                    edge: self.edge_types[s.edge].name.clone(),
                    target: self.node_types[s.target].name.clone(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: SchemaFile) -> Result<Self> {
        let find = |types: &[TypeDef], name: &str, kind: &str| {
            types
                .iter()
                .position(|t| t.name == name)
                .ok_or_else(|| Error::Schema(format!("meta-step references unknown {kind} type `{name}`")))
        };
        let steps = file
            .allowed_meta_steps
            .iter()
            .map(|s| {
                Ok(MetaStep::new(
                    find(&file.node_types, &s.source, "node")?,
                    find(&file.edge_types, &s.edge, "edge")?,
                    find(&file.node_types, &s.target, "node")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        HeteroSchema::new(file.node_types, file.edge_types, steps)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.to_file()).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Type and meta-step indices of the transaction schema, resolved by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AmlIds {
    pub ind: NodeTypeId,
    pub org: NodeTypeId,
    pub ext: NodeTypeId,
    pub txn: EdgeTypeId,
    pub role: EdgeTypeId,
    /// Txn meta-step index for `[source][target]`, `None` where not allowed.
    pub txn_steps: [[Option<usize>; 3]; 3],
    /// The `individual -role-> organization` meta-step index.
    pub role_step: usize,
}

impl AmlIds {
    pub fn resolve(schema: &HeteroSchema) -> Result<Self> {
        let ind = schema.node_type_id(INDIVIDUAL)?;
        let org = schema.node_type_id(ORGANIZATION)?;
        let ext = schema.node_type_id(EXTERNAL)?;
        let txn = schema.edge_type_id(TXN)?;
        let role = schema.edge_type_id(ROLE)?;
        let types = [ind, org, ext];
        let mut txn_steps = [[None; 3]; 3];
        for (a, &s) in types.iter().enumerate() {
            for (b, &t) in types.iter().enumerate() {
                txn_steps[a][b] = schema.step_index(MetaStep::new(s, txn, t));
            }
        }
        let role_step = schema
            .step_index(MetaStep::new(ind, role, org))
            .ok_or_else(|| Error::Schema("schema lacks the individual-role-organization step".into()))?;
        Ok(AmlIds {
            ind,
            org,
            ext,
            txn,
            role,
            txn_steps,
            role_step,
        })
    }

    /// Node type ids in the order individual, organization, external.
    pub fn types(&self) -> [NodeTypeId; 3] {
        [self.ind, self.org, self.ext]
    }

    /// Txn step between two of `types()` positions.
    pub fn txn(&self, source: usize, target: usize) -> Option<usize> {
        self.txn_steps[source][target]
    }
}

fn check_unique(kind: &str, types: &[TypeDef]) -> Result<()> {
    let mut seen = HashSet::new();
    for t in types {
        if !seen.insert(t.name.as_str()) {
            return Err(Error::Schema(format!("duplicate {kind} type name `{}`", t.name)));
        }
    }
    Ok(())
}

/// On-disk form of a schema (`schema.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub node_types: Vec<TypeDef>,
    pub edge_types: Vec<TypeDef>,
    pub allowed_meta_steps: Vec<StepNames>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepNames {
    pub source: String,
    pub edge: String,
    pub target: String,
}

/// Declared meta-steps, in order.
pub fn meta_steps(schema: &HeteroSchema) -> Vec<MetaStep> {
    schema.meta_steps().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aml_schema_has_nine_steps() {
        let s = HeteroSchema::aml();
        let steps = meta_steps(&s);
        assert_eq!(steps.len(), 9);
        let txn = s.edge_type_id(TXN).unwrap();
        let ext = s.node_type_id(EXTERNAL).unwrap();
        let txn_steps: Vec<_> = steps.iter().filter(|m| m.edge == txn).collect();
        assert_eq!(txn_steps.len(), 8);
        assert!(!txn_steps.iter().any(|m| m.source == ext && m.target == ext));
        let role = s.edge_type_id(ROLE).unwrap();
        let role_steps: Vec<_> = steps.iter().filter(|m| m.edge == role).collect();
        assert_eq!(
            role_steps,
            vec![&MetaStep::new(s.node_type_id(INDIVIDUAL).unwrap(), role, s.node_type_id(ORGANIZATION).unwrap())]
        );
    }

    #[test]
    fn single_and_empty_step_lists() {
        let one = HeteroSchema::new(
            vec![TypeDef::new("a", 1)],
            vec![TypeDef::new("e", 0)],
            vec![MetaStep::new(0, 0, 0)],
        )
        .unwrap();
        assert_eq!(meta_steps(&one).len(), 1);
        let none = HeteroSchema::new(vec![TypeDef::new("a", 1)], vec![], vec![]).unwrap();
        assert!(meta_steps(&none).is_empty());
    }

    #[test]
    fn rejects_bad_schemas() {
        let dup = HeteroSchema::new(vec![TypeDef::new("a", 1), TypeDef::new("a", 2)], vec![], vec![]);
        assert!(dup.is_err());
        let dangling = HeteroSchema::new(vec![TypeDef::new("a", 1)], vec![], vec![MetaStep::new(0, 0, 0)]);
        assert!(dangling.is_err());
    }

    #[test]
    fn file_round_trip_and_hash() {
        let s = HeteroSchema::aml();
        let back = HeteroSchema::from_file(s.to_file()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.hash(), back.hash());
        assert_eq!(s.steps_into(0), vec![0, 3, 6]);
        assert_eq!(s.step_name(s.meta_steps()[8]), "individual__role__organization");
    }
}
