use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{boundary_hits, LoweredText, PatternAutomaton};

const DEFAULT_RULES: &str = include_str!("../../data/intents.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntentKind {
    Symptom,
    Description,
    Cause,
    Prevention,
    Accompany,
    CureWay,
    Unknown,
}

impl IntentKind {
    pub const ANSWERABLE: [IntentKind; 6] = [
        IntentKind::Symptom,
        IntentKind::Description,
        IntentKind::Cause,
        IntentKind::Prevention,
        IntentKind::Accompany,
        IntentKind::CureWay,
    ];

    /// Name used in rule files.
    pub fn rule_name(self) -> &'static str {
        match self {
            IntentKind::Symptom => "symptom",
            IntentKind::Description => "description",
            IntentKind::Cause => "cause",
            IntentKind::Prevention => "prevention",
            IntentKind::Accompany => "accompany",
            IntentKind::CureWay => "cure_way",
            IntentKind::Unknown => "unknown",
        }
    }
}

impl fmt::Display for IntentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for IntentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        IntentKind::ANSWERABLE
            .into_iter()
            .chain([IntentKind::Unknown])
            .find(|k| k.rule_name() == lower || k.to_string().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown intent {s:?}")))
    }
}

/// Ordered phrase rules. The earliest rule with a whole-word phrase match in
/// the question decides the intent.
#[derive(Debug, Clone)]
pub struct IntentRules {
    rules: Vec<(IntentKind, Vec<String>)>,
    automaton: PatternAutomaton,
    /// Rule index per automaton pattern id (the earliest rule using it).
    priority: Vec<usize>,
}

impl IntentRules {
    pub fn new(rules: Vec<(IntentKind, Vec<String>)>) -> Result<Self> {
        let mut phrases: Vec<String> = Vec::new();
        let mut priority = Vec::new();
        for (rank, (kind, list)) in rules.iter().enumerate() {
            if *kind == IntentKind::Unknown {
                return Err(Error::InvalidArgument("a rule cannot map to Unknown".into()));
            }
            for p in list {
                let p = super::dictionary::normalize_term(p);
                if p.is_empty() {
                    return Err(Error::InvalidArgument(format!("empty phrase in {} rule", kind.rule_name())));
                }
                if !phrases.contains(&p) {
                    phrases.push(p);
                    priority.push(rank);
                }
            }
        }
        if phrases.is_empty() {
            return Err(Error::EmptyInput("intent rules contain no phrases".into()));
        }
        let automaton = PatternAutomaton::new(&phrases)?;
        Ok(IntentRules {
            rules,
            automaton,
            priority,
        })
    }

    /// Parse `kind: phrase | phrase` lines; `#` comments and blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(i + 1, "expected `kind: phrase | ...`"))?;
            let kind: IntentKind = kind.parse().map_err(|_| Error::parse(i + 1, format!("unknown intent {kind:?}")))?;
            if kind == IntentKind::Unknown {
                return Err(Error::parse(i + 1, "a rule cannot map to unknown"));
            }
            let phrases: Vec<String> = rest.split('|').map(|p| p.trim().to_owned()).collect();
            if phrases.iter().any(String::is_empty) {
                return Err(Error::parse(i + 1, "empty phrase"));
            }
            rules.push((kind, phrases));
        }
        IntentRules::new(rules)
    }

    /// The bundled rule table.
    pub fn builtin() -> &'static IntentRules {
        static RULES: OnceLock<IntentRules> = OnceLock::new();
        RULES.get_or_init(|| IntentRules::parse(DEFAULT_RULES).expect("bundled intent rules are valid"))
    }

    pub fn rules(&self) -> &[(IntentKind, Vec<String>)] {
        &self.rules
    }

    pub fn classify(&self, text: &str) -> IntentKind {
        let lowered = LoweredText::new(text);
        boundary_hits(&self.automaton, &lowered)
            .into_iter()
            .map(|m| self.priority[m.pattern])
            .min()
            .map_or(IntentKind::Unknown, |rank| self.rules[rank].0)
    }
}

/// Classify with the bundled rules.
pub fn classify_intent(text: &str) -> IntentKind {
    IntentRules::builtin().classify(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(classify_intent("What are the symptoms of cold?"), IntentKind::Symptom);
        assert_eq!(classify_intent("the weather is nice"), IntentKind::Unknown);
        assert_eq!(classify_intent("How do you treat a cat with a cold?"), IntentKind::CureWay);
        assert_eq!(classify_intent("What is asthma?"), IntentKind::Description);
        assert_eq!(classify_intent("Why do I get migraines"), IntentKind::Cause);
        assert_eq!(classify_intent("how can I AVOID the flu"), IntentKind::Prevention);
        assert_eq!(classify_intent("diseases that come together with diabetes"), IntentKind::Accompany);
    }

    #[test]
    fn priority_order_wins() {
        // "treat" (cure_way) appears before "symptoms", but symptom has priority
        assert_eq!(classify_intent("how to treat the symptoms of flu"), IntentKind::Symptom);
        assert_eq!(classify_intent("why is the treatment failing"), IntentKind::Cause);
    }

    #[test]
    fn whole_words_only() {
        assert_eq!(classify_intent("treaty signatures"), IntentKind::Unknown);
        assert_eq!(classify_intent("whyever"), IntentKind::Unknown);
    }

    #[test]
    fn builtin_follows_declared_order() {
        let kinds: Vec<IntentKind> = IntentRules::builtin().rules().iter().map(|r| r.0).collect();
        assert_eq!(kinds, IntentKind::ANSWERABLE);
    }

    #[test]
    fn custom_rules_and_errors() {
        let r = IntentRules::parse("cause: because\nsymptom: because | hurts\n").unwrap();
        assert_eq!(r.classify("it hurts because"), IntentKind::Cause);
        assert_eq!(r.classify("it hurts"), IntentKind::Symptom);
        assert!(matches!(IntentRules::parse("cause because"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(IntentRules::parse("\nweather: sunny"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(IntentRules::parse("cause: a || b"), Err(Error::Parse { line: 1, .. })));
        assert!(IntentRules::parse("# nothing\n").is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in IntentKind::ANSWERABLE {
            assert_eq!(k.rule_name().parse::<IntentKind>().unwrap(), k);
            assert_eq!(k.to_string().parse::<IntentKind>().unwrap(), k);
        }
    }

    proptest! {
        #[test]
        fn total_and_deterministic(text in "\\PC{0,80}") {
            prop_assert_eq!(classify_intent(&text), classify_intent(&text));
        }
    }
}
