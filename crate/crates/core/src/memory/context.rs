use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::MemoryError;

/// The Source's daily context document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    #[serde(rename = "Background")]
    pub background: String,
    #[serde(rename = "PersonalityTraits")]
    pub personality_traits: String,
    #[serde(rename = "SocialRelationshipInfo")]
    pub social_relationships: Vec<RelationshipEntry>,
    #[serde(rename = "ValidDate", default, skip_serializing_if = "Option::is_none")]
    pub valid_date: Option<NaiveDate>,
    /// Fields this engine does not read, kept for round-tripping.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipEntry {
    #[serde(rename = "Who")]
    pub who: String,
    #[serde(rename = "RelationshipInfo")]
    pub relationship_info: String,
    #[serde(rename = "SourceIntent")]
    pub source_intent: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl UserContext {
    pub fn relationship(&self, who: &str) -> Option<&RelationshipEntry> {
        self.social_relationships.iter().find(|r| r.who == who)
    }

    pub fn traits(&self) -> Vec<&str> {
        self.personality_traits
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.social_relationships.iter().map(|r| r.who.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("context serializes")
    }
}

fn required_str<'a>(obj: &'a Map<String, Value>, field: &str, allow_empty: bool) -> Result<&'a str, MemoryError> {
    match obj.get(field) {
        Some(Value::String(s)) if allow_empty || !s.trim().is_empty() => Ok(s),
        Some(Value::String(_)) | None | Some(Value::Null) => Err(MemoryError::Missing(field.to_owned())),
        Some(_) => Err(MemoryError::WrongType(field.to_owned())),
    }
}

/// Parses and validates a context document.
pub fn load_context(document: &str) -> Result<UserContext, MemoryError> {
    let value: Value = serde_json::from_str(document).map_err(|e| MemoryError::Syntax(e.to_string()))?;
    let Value::Object(obj) = &value else {
        return Err(MemoryError::WrongType("document".into()));
    };
    required_str(obj, "Background", false)?;
    required_str(obj, "PersonalityTraits", true)?;
    let rels = match obj.get("SocialRelationshipInfo") {
        Some(Value::Array(a)) => a,
        None | Some(Value::Null) => return Err(MemoryError::Missing("SocialRelationshipInfo".into())),
        Some(_) => return Err(MemoryError::WrongType("SocialRelationshipInfo".into())),
    };
    let mut seen = std::collections::BTreeSet::new();
    for rel in rels {
        let Value::Object(r) = rel else {
            return Err(MemoryError::WrongType("SocialRelationshipInfo".into()));
        };
        let who = required_str(r, "Who", false)?;
        required_str(r, "RelationshipInfo", true)?;
        required_str(r, "SourceIntent", true)?;
        if !seen.insert(who.to_owned()) {
            return Err(MemoryError::DuplicateWho(who.to_owned()));
        }
    }
    serde_json::from_value(value).map_err(|e| MemoryError::Syntax(e.to_string()))
}

/// The context in force today, replaced each day.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveContext {
    context: UserContext,
}

impl ActiveContext {
    pub fn new(context: UserContext) -> Self {
        Self { context }
    }

    pub fn get(&self) -> &UserContext {
        &self.context
    }

    /// Swaps in a new day's document. An invalid document leaves the current
    /// context in place.
    pub fn rotate_daily(&mut self, document: &str, date: NaiveDate) -> Result<&UserContext, MemoryError> {
        let mut next = load_context(document)?;
        next.valid_date = Some(date);
        self.context = next;
        Ok(&self.context)
    }
}
