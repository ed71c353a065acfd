use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityRole {
    Disease,
    Symptom,
}

/// Disease and symptom keyword sets. Terms are trimmed and lowercased; a term
/// may appear in both sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MedicalDictionary {
    diseases: BTreeSet<String>,
    symptoms: BTreeSet<String>,
}

pub(crate) fn normalize_term(term: &str) -> String {
    term.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl MedicalDictionary {
    pub fn new<D, S>(diseases: D, symptoms: S) -> Self
    where
        D: IntoIterator,
        D::Item: AsRef<str>,
        S: IntoIterator,
        S::Item: AsRef<str>,
    {
        let mut d = MedicalDictionary::default();
        for t in diseases {
            d.insert(EntityRole::Disease, t.as_ref());
        }
        for t in symptoms {
            d.insert(EntityRole::Symptom, t.as_ref());
        }
        d
    }

    pub fn insert(&mut self, role: EntityRole, term: &str) -> bool {
        let term = normalize_term(term);
        if term.is_empty() {
            return false;
        }
        match role {
            EntityRole::Disease => self.diseases.insert(term),
            EntityRole::Symptom => self.symptoms.insert(term),
        }
    }

    pub fn diseases(&self) -> &BTreeSet<String> {
        &self.diseases
    }

    pub fn symptoms(&self) -> &BTreeSet<String> {
        &self.symptoms
    }

    pub fn is_empty(&self) -> bool {
        self.diseases.is_empty() && self.symptoms.is_empty()
    }

    /// Sorted union of both sets.
    pub fn terms(&self) -> Vec<String> {
        self.diseases.union(&self.symptoms).cloned().collect()
    }

    pub fn roles(&self, term: &str) -> Vec<EntityRole> {
        let mut roles = Vec::new();
        if self.diseases.contains(term) {
            roles.push(EntityRole::Disease);
        }
        if self.symptoms.contains(term) {
            roles.push(EntityRole::Symptom);
        }
        roles
    }

    /// Keep only terms that appear in `keywords` (compared after normalization).
    pub fn restricted_to<I>(&self, keywords: I) -> MedicalDictionary
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let keep: BTreeSet<String> = keywords.into_iter().map(|k| normalize_term(k.as_ref())).collect();
        MedicalDictionary {
            diseases: self.diseases.intersection(&keep).cloned().collect(),
            symptoms: self.symptoms.intersection(&keep).cloned().collect(),
        }
    }

    /// Parse the sectioned dictionary format:
    ///
    /// ```text
    /// [diseases]
    /// cold
    /// [symptoms]
    /// fever
    /// ```
    ///
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dict = MedicalDictionary::default();
        let mut section = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = match &line[1..line.len() - 1] {
                    "diseases" => Some(EntityRole::Disease),
                    "symptoms" => Some(EntityRole::Symptom),
                    other => return Err(Error::parse(i + 1, format!("unknown section [{other}]"))),
                };
                continue;
            }
            let role = section.ok_or_else(|| Error::parse(i + 1, "term outside of a section"))?;
            dict.insert(role, line);
        }
        Ok(dict)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("[diseases]\n");
        for t in &self.diseases {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str("[symptoms]\n");
        for t in &self.symptoms {
            out.push_str(t);
            out.push('\n');
        }
        out
    }
}
