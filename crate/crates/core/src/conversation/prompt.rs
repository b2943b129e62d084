use serde::{Deserialize, Serialize};

use crate::memory::UserContext;
use crate::proxemics::PersonIdentity;

use super::{UtterancePurpose, Utterance};

pub const TOPIC_INSTRUCTION: &str =
    "Choose one of the topics of the day to talk about. You should choose different topic that is not in the summary.";

pub const DISENGAGEMENT_RULES: &str = "You should try to ask questions that would keep the conversation going, don't try to disengage unless the person has shown clear intent to disengage with you.
Remember that you are having a hallway conversation. So if the conversation turns are over 5 be mindful of the user's time.
Ask if they can stay longer to talk. You should always ask if they can stay longer to talk.
Do not disengage until the person has responded to your disengagement request.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub title: String,
    #[serde(default)]
    pub detail: String,
}

impl Topic {
    pub fn new(title: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            detail: detail.into(),
        }
    }
}

/// Lower-cased alphanumeric words of a topic title, three letters or more.
pub fn topic_tokens(title: &str) -> Vec<String> {
    title
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 3)
        .map(str::to_lowercase)
        .collect()
}

/// First topic none of whose title words occur in `summary`, ignoring case.
pub fn choose_topic<'a>(topics: &'a [Topic], summary: &str) -> Option<&'a Topic> {
    let summary = summary.to_lowercase();
    topics.iter().find(|t| {
        let toks = topic_tokens(&t.title);
        !toks.is_empty() && toks.iter().all(|tok| !summary.contains(tok.as_str()))
    })
}

/// Who the agent is talking to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Addressee {
    Passerby,
    Tagged(PersonIdentity),
}

impl Addressee {
    pub fn name(&self) -> Option<&str> {
        match self {
            Addressee::Passerby => None,
            Addressee::Tagged(p) => Some(&p.name),
        }
    }

    pub fn label(&self) -> String {
        self.name().map_or_else(|| "a passerby".to_owned(), str::to_owned)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub transcript: Vec<Utterance>,
    pub addressee: String,
    pub purpose: UtterancePurpose,
}

/// Builds the responder prompt. Sections appear in a fixed order and are
/// left out entirely when they do not apply. The second value is a warning
/// for a tagged person missing from the context.
pub fn assemble_prompt(
    context: &UserContext,
    memory: &str,
    transcript: &[Utterance],
    topic: Option<&Topic>,
    addressee: &Addressee,
    purpose: UtterancePurpose,
) -> (PromptBundle, Option<String>) {
    let mut sections = vec![
        format!("Background:\n{}", context.background.trim_end()),
        format!("Personality traits: {}", context.personality_traits.trim()),
    ];
    let mut warning = None;
    match addressee {
        Addressee::Passerby => {
            sections.push("You are talking with a passerby whose name you do not know.".to_owned());
        }
        Addressee::Tagged(person) => {
            sections.push(format!("You are talking with {}.", person.name));
            let key = person.context_key.as_deref().unwrap_or(&person.name);
            match context.relationship(key) {
                Some(rel) => {
                    sections.push(format!("What you know about {}:\n{}", person.name, rel.relationship_info));
                    sections.push(format!("Your intent for {}:\n{}", person.name, rel.source_intent));
                }
                None => {
                    warning = Some(format!("{} wears tag {} but has no context entry", person.name, person.tag_id));
                }
            }
        }
    }
    if !memory.trim().is_empty() {
        sections.push(format!("Summary of your previous conversations:\n{}", memory.trim_end()));
    }
    if let Some(t) = topic {
        let detail = if t.detail.is_empty() { String::new() } else { format!(": {}", t.detail) };
        sections.push(format!("{TOPIC_INSTRUCTION}\n\nTopic of the Day:\nTopic 1 {}{detail}", t.title));
    }
    sections.push(DISENGAGEMENT_RULES.to_owned());
    let bundle = PromptBundle {
        system_text: sections.join("\n\n"),
        transcript: transcript.to_vec(),
        addressee: addressee.label(),
        purpose,
    };
    (bundle, warning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::load_context;

    fn context() -> UserContext {
        load_context(
            r#"{"Background": "You are Sam's Ditto.", "PersonalityTraits": "Cheerful, Witty",
                "SocialRelationshipInfo": [
                  {"Who": "Y", "RelationshipInfo": "You built a dog park simulation for Y.", "SourceIntent": "Wish Y luck."}
                ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn topic_selection() {
        let topics = [Topic::new("Pottery", ""), Topic::new("Lunch", "")];
        assert_eq!(choose_topic(&topics[..1], "").unwrap().title, "Pottery");
        assert_eq!(choose_topic(&topics, "We discussed POTTERY.").unwrap().title, "Lunch");
        assert!(choose_topic(&topics, "pottery then lunch").is_none());
        assert!(choose_topic(&[], "").is_none());
    }

    #[test]
    fn tagged_bundle_carries_relationship() {
        let y = Addressee::Tagged(PersonIdentity::new("tag-y", "Y", None));
        let (b, w) = assemble_prompt(&context(), "", &[], None, &y, UtterancePurpose::Reply);
        assert!(w.is_none());
        assert!(b.system_text.contains("dog park simulation"));
        assert!(b.system_text.contains("Wish Y luck."));
    }

    #[test]
    fn passerby_bundle_omits_relationships() {
        let (b, _) = assemble_prompt(&context(), "", &[], None, &Addressee::Passerby, UtterancePurpose::Reply);
        assert!(!b.system_text.contains("dog park"));
        assert!(!b.system_text.contains("Wish Y"));
        assert!(!b.system_text.contains("Summary of your previous"));
    }

    #[test]
    fn unknown_tag_is_named_passerby() {
        let z = Addressee::Tagged(PersonIdentity::new("tag-z", "Zed", None));
        let (b, w) = assemble_prompt(&context(), "", &[], None, &z, UtterancePurpose::Reply);
        assert!(w.is_some());
        assert!(b.system_text.contains("Zed"));
        assert!(!b.system_text.contains("dog park"));
    }

    #[test]
    fn sections_are_ordered() {
        let y = Addressee::Tagged(PersonIdentity::new("tag-y", "Y", None));
        let topic = Topic::new("Pottery", "a bowl");
        let (b, _) = assemble_prompt(&context(), "Talked before.", &[], Some(&topic), &y, UtterancePurpose::Reply);
        let at = |s: &str| b.system_text.find(s).unwrap();
        let order = [
            at("Background:"),
            at("Personality traits:"),
            at("You are talking with Y"),
            at("What you know about Y"),
            at("Your intent for Y"),
            at("Summary of your previous"),
            at("Topic of the Day"),
            at("Do not disengage"),
        ];
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }
}
