//! In-memory medical knowledge graph.
//!
//! Entities are departments, diseases and symptoms; diseases carry optional
//! text properties. Relationships link a disease to another entity or to a
//! literal text payload (for cause, prevention and cure relationships).
//!
//! The exchange format is JSON lines, with names as keys:
//!
//! ```text
//! {"t":"entity","kind":"disease","name":"cold","properties":{"description":"..."}}
//! {"t":"entity","kind":"symptom","name":"fever"}
//! {"t":"rel","kind":"have_symptom","from":"cold","to":"fever"}
//! {"t":"rel","kind":"disease_cureway","from":"cold","to":"rest","literal":true}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::entity::{EntityMatch, IntentKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Department,
    Disease,
    Symptom,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Department, EntityKind::Disease, EntityKind::Symptom];

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Department => "department",
            EntityKind::Disease => "disease",
            EntityKind::Symptom => "symptom",
        }
    }
}

impl std::str::FromStr for EntityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown entity kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKey {
    Description,
    Cause,
    Prevent,
    CureWay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelKind {
    HaveSymptom,
    AccompanyWith,
    DiseasePrevent,
    DiseaseCause,
    DiseaseCureway,
}

impl RelKind {
    pub const ALL: [RelKind; 5] = [
        RelKind::HaveSymptom,
        RelKind::AccompanyWith,
        RelKind::DiseasePrevent,
        RelKind::DiseaseCause,
        RelKind::DiseaseCureway,
    ];

    /// Entity kind an entity target must have.
    pub fn target_kind(self) -> EntityKind {
        match self {
            RelKind::HaveSymptom => EntityKind::Symptom,
            _ => EntityKind::Disease,
        }
    }

    pub fn allows_literal(self) -> bool {
        matches!(self, RelKind::DiseasePrevent | RelKind::DiseaseCause | RelKind::DiseaseCureway)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub name: String,
    pub properties: BTreeMap<PropertyKey, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Entity(EntityId),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relationship {
    pub kind: RelKind,
    pub from: EntityId,
    pub to: Target,
}

/// Exchange-format entity line (also the manager API body).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub kind: EntityKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<PropertyKey, String>,
}

/// Exchange-format relationship line. `to` names an entity of the kind the
/// relationship expects unless `literal` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelRecord {
    pub kind: RelKind,
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub literal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum GraphLine {
    Entity(EntityRecord),
    Rel(RelRecord),
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    by_name: HashMap<(EntityKind, String), EntityId>,
    relationships: BTreeSet<Relationship>,
    outgoing: HashMap<(RelKind, EntityId), Vec<Target>>,
    incoming: HashMap<(RelKind, EntityId), Vec<EntityId>>,
}

fn name_key(name: &str) -> String {
    name.trim().to_lowercase()
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relationship_count(&self) -> usize {
        self.relationships.len()
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(id.0 as usize)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter()
    }

    pub fn relationships(&self) -> impl Iterator<Item = &Relationship> {
        self.relationships.iter()
    }

    /// Case-insensitive exact name lookup.
    pub fn find(&self, kind: EntityKind, name: &str) -> Option<EntityId> {
        self.by_name.get(&(kind, name_key(name))).copied()
    }

    pub fn targets(&self, kind: RelKind, from: EntityId) -> &[Target] {
        self.outgoing.get(&(kind, from)).map_or(&[], Vec::as_slice)
    }

    pub fn sources(&self, kind: RelKind, to: EntityId) -> &[EntityId] {
        self.incoming.get(&(kind, to)).map_or(&[], Vec::as_slice)
    }

    /// Display text of a target: entity name or literal payload.
    pub fn target_text<'a>(&'a self, target: &'a Target) -> &'a str {
        match target {
            Target::Entity(id) => &self.entities[id.0 as usize].name,
            Target::Literal(s) => s,
        }
    }

    /// Insert or replace (by kind and case-insensitive name). Returns the id.
    pub fn upsert_entity(&mut self, record: EntityRecord) -> Result<EntityId> {
        let name = record.name.trim();
        if name.is_empty() {
            return Err(Error::Graph("entity name is empty".into()));
        }
        if record.kind != EntityKind::Disease && !record.properties.is_empty() {
            return Err(Error::Graph(format!(
                "{} {name:?} cannot carry properties (diseases only)",
                record.kind.name()
            )));
        }
        let key = (record.kind, name_key(name));
        if let Some(&id) = self.by_name.get(&key) {
            let e = &mut self.entities[id.0 as usize];
            e.name = name.to_owned();
            e.properties = record.properties;
            return Ok(id);
        }
        let id = EntityId(
            u32::try_from(self.entities.len()).map_err(|_| Error::Graph("too many entities".into()))?,
        );
        self.entities.push(Entity {
            id,
            kind: record.kind,
            name: name.to_owned(),
            properties: record.properties,
        });
        self.by_name.insert(key, id);
        Ok(id)
    }

    /// Insert a relationship by id. Returns whether it was new.
    pub fn insert_relationship(&mut self, rel: Relationship) -> Result<bool> {
        let from = self
            .entity(rel.from)
            .ok_or_else(|| Error::Graph(format!("unknown source entity {:?}", rel.from)))?;
        if from.kind != EntityKind::Disease {
            return Err(Error::Graph(format!("{:?} must start at a disease, not {:?}", rel.kind, from.name)));
        }
        match &rel.to {
            Target::Entity(id) => {
                let to = self
                    .entity(*id)
                    .ok_or_else(|| Error::Graph(format!("unknown target entity {id:?}")))?;
                if to.kind != rel.kind.target_kind() {
                    return Err(Error::Graph(format!(
                        "{:?} target {:?} must be a {}",
                        rel.kind,
                        to.name,
                        rel.kind.target_kind().name()
                    )));
                }
            }
            Target::Literal(s) => {
                if !rel.kind.allows_literal() {
                    return Err(Error::Graph(format!("{:?} does not accept literal targets", rel.kind)));
                }
                if s.trim().is_empty() {
                    return Err(Error::Graph("literal target is empty".into()));
                }
            }
        }
        if !self.relationships.insert(rel.clone()) {
            return Ok(false);
        }
        if let Target::Entity(to) = rel.to {
            self.incoming.entry((rel.kind, to)).or_default().push(rel.from);
        }
        self.outgoing.entry((rel.kind, rel.from)).or_default().push(rel.to);
        Ok(true)
    }

    /// Insert a relationship given by names.
    pub fn upsert_relationship(&mut self, record: &RelRecord) -> Result<bool> {
        let from = self
            .find(EntityKind::Disease, &record.from)
            .ok_or_else(|| Error::Graph(format!("unknown disease {:?}", record.from)))?;
        let to = if record.literal {
            Target::Literal(record.to.trim().to_owned())
        } else {
            let kind = record.kind.target_kind();
            Target::Entity(
                self.find(kind, &record.to)
                    .ok_or_else(|| Error::Graph(format!("unknown {} {:?}", kind.name(), record.to)))?,
            )
        };
        self.insert_relationship(Relationship {
            kind: record.kind,
            from,
            to,
        })
    }

    pub fn to_records(&self) -> Vec<GraphLine> {
        let mut ents: Vec<&Entity> = self.entities.iter().collect();
        ents.sort_by(|a, b| (a.kind, &a.name).cmp(&(b.kind, &b.name)));
        let mut rels: Vec<RelRecord> = self
            .relationships
            .iter()
            .map(|r| RelRecord {
                kind: r.kind,
                from: self.entities[r.from.0 as usize].name.clone(),
                to: self.target_text(&r.to).to_owned(),
                literal: matches!(r.to, Target::Literal(_)),
            })
            .collect();
        rels.sort_by(|a, b| (a.kind, &a.from, &a.to, a.literal).cmp(&(b.kind, &b.from, &b.to, b.literal)));
        ents.into_iter()
            .map(|e| {
                GraphLine::Entity(EntityRecord {
                    kind: e.kind,
                    name: e.name.clone(),
                    properties: e.properties.clone(),
                })
            })
            .chain(rels.into_iter().map(GraphLine::Rel))
            .collect()
    }

    /// Deterministic JSON-lines export.
    pub fn export<W: Write>(&self, mut out: W) -> Result<()> {
        for line in self.to_records() {
            serde_json::to_writer(&mut out, &line).map_err(|e| Error::Format(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Load a JSON-lines stream: every entity first, then every relationship,
    /// so lines may appear in any order. Errors carry the 1-based line number.
    pub fn import<R: BufRead>(source: R) -> Result<Self> {
        let mut entities = Vec::new();
        let mut rels = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<GraphLine>(&line).map_err(|e| Error::parse(i + 1, e.to_string()))? {
                GraphLine::Entity(e) => entities.push((i + 1, e)),
                GraphLine::Rel(r) => rels.push((i + 1, r)),
            }
        }
        let mut graph = KnowledgeGraph::new();
        for (line, e) in entities {
            if graph.find(e.kind, &e.name).is_some() {
                return Err(Error::parse(line, format!("duplicate {} {:?}", e.kind.name(), e.name)));
            }
            graph.upsert_entity(e).map_err(|err| Error::parse(line, err.to_string()))?;
        }
        for (line, r) in rels {
            graph.upsert_relationship(&r).map_err(|err| Error::parse(line, err.to_string()))?;
        }
        Ok(graph)
    }

    /// Recompute the indexes from scratch and compare; also checks every
    /// endpoint exists. Used by tests and debug assertions.
    pub fn check_integrity(&self) -> Result<()> {
        let mut outgoing: HashMap<(RelKind, EntityId), BTreeSet<Target>> = HashMap::new();
        let mut incoming: HashMap<(RelKind, EntityId), BTreeSet<EntityId>> = HashMap::new();
        for r in &self.relationships {
            if self.entity(r.from).is_none() {
                return Err(Error::Graph(format!("dangling source {:?}", r.from)));
            }
            if let Target::Entity(to) = r.to {
                if self.entity(to).is_none() {
                    return Err(Error::Graph(format!("dangling target {to:?}")));
                }
                incoming.entry((r.kind, to)).or_default().insert(r.from);
            }
            outgoing.entry((r.kind, r.from)).or_default().insert(r.to.clone());
        }
        let out_idx: HashMap<_, BTreeSet<Target>> = self
            .outgoing
            .iter()
            .map(|(k, v)| (*k, v.iter().cloned().collect()))
            .collect();
        let in_idx: HashMap<_, BTreeSet<EntityId>> = self
            .incoming
            .iter()
            .map(|(k, v)| (*k, v.iter().copied().collect()))
            .collect();
        let out_len: usize = self.outgoing.values().map(Vec::len).sum();
        if out_idx != outgoing || in_idx != incoming || out_len != self.relationships.len() {
            return Err(Error::Graph("relationship indexes out of sync".into()));
        }
        for e in &self.entities {
            if self.by_name.get(&(e.kind, name_key(&e.name))) != Some(&e.id) {
                return Err(Error::Graph(format!("name index missing {:?}", e.name)));
            }
        }
        if self.by_name.len() != self.entities.len() {
            return Err(Error::Graph("name index has stale keys".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgAnswer {
    pub found: bool,
    pub intent: IntentKind,
    pub subject: String,
    pub items: Vec<String>,
}

impl fmt::Display for KgAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.found {
            return write!(f, "No {} information for {}.", intent_label(self.intent), self.subject);
        }
        let list = self.items.join("; ");
        match self.intent {
            IntentKind::Symptom => write!(f, "The symptoms of {} include: {list}.", self.subject),
            IntentKind::Description => write!(f, "{}: {list}", self.subject),
            IntentKind::Cause => write!(f, "Causes of {}: {list}.", self.subject),
            IntentKind::Prevention => write!(f, "To prevent {}: {list}.", self.subject),
            IntentKind::Accompany => write!(f, "Diseases that may accompany {}: {list}.", self.subject),
            IntentKind::CureWay => write!(f, "Ways to treat {}: {list}.", self.subject),
            IntentKind::Unknown => write!(f, "{list}"),
        }
    }
}

fn intent_label(intent: IntentKind) -> &'static str {
    match intent {
        IntentKind::Symptom => "symptom",
        IntentKind::Description => "description",
        IntentKind::Cause => "cause",
        IntentKind::Prevention => "prevention",
        IntentKind::Accompany => "accompanying disease",
        IntentKind::CureWay => "treatment",
        IntentKind::Unknown => "matching",
    }
}

/// Answer an intent about a disease named by `entity.term`.
///
/// Cause, prevention and cure intents list the disease's property value first,
/// followed by the matching relationship targets sorted by text.
pub fn answer(graph: &KnowledgeGraph, intent: IntentKind, entity: &EntityMatch) -> Result<KgAnswer> {
    let (property, rel) = match intent {
        IntentKind::Unknown => {
            return Err(Error::InvalidArgument("cannot answer an Unknown intent".into()));
        }
        IntentKind::Symptom => (None, Some(RelKind::HaveSymptom)),
        IntentKind::Description => (Some(PropertyKey::Description), None),
        IntentKind::Cause => (Some(PropertyKey::Cause), Some(RelKind::DiseaseCause)),
        IntentKind::Prevention => (Some(PropertyKey::Prevent), Some(RelKind::DiseasePrevent)),
        IntentKind::Accompany => (None, Some(RelKind::AccompanyWith)),
        IntentKind::CureWay => (Some(PropertyKey::CureWay), Some(RelKind::DiseaseCureway)),
    };
    let Some(id) = graph.find(EntityKind::Disease, &entity.term) else {
        return Ok(KgAnswer {
            found: false,
            intent,
            subject: entity.term.clone(),
            items: Vec::new(),
        });
    };
    let disease = &graph.entities[id.0 as usize];
    let mut items = Vec::new();
    if let Some(value) = property.and_then(|p| disease.properties.get(&p)) {
        if !value.trim().is_empty() {
            items.push(value.clone());
        }
    }
    if let Some(kind) = rel {
        let mut targets: Vec<&str> = graph.targets(kind, id).iter().map(|t| graph.target_text(t)).collect();
        targets.sort_unstable();
        for t in targets {
            if !items.iter().any(|i| i == t) {
                items.push(t.to_owned());
            }
        }
    }
    Ok(KgAnswer {
        found: !items.is_empty(),
        intent,
        subject: disease.name.clone(),
        items,
    })
}
