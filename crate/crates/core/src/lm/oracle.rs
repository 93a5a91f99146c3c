use std::sync::Arc;

use super::{AnswerSource, Group, LmError, Query, QueryRole, RelevanceAnswer, RelevanceBackend, Verdict};
use crate::scenario::Registry;

/// Answers relevance queries from the registered ground-truth distributions.
#[derive(Clone, Debug)]
pub struct RuleOracle {
    registry: Arc<Registry>,
}

impl RuleOracle {
    pub fn new(registry: Arc<Registry>) -> Self {
        Self { registry }
    }

    pub fn verdict(&self, q: &Query) -> Result<Verdict, LmError> {
        let spec = self
            .registry
            .by_utterance(&q.utterance)
            .ok_or_else(|| LmError::Oracle(format!("unregistered utterance {:?}", q.utterance)))?;
        let cat = self.registry.catalog();
        let set = match q.role {
            QueryRole::Target => Some(&spec.truth.target),
            QueryRole::Avoid => spec.truth.avoid.as_ref(),
        };
        let hit = match q.group {
            Group::ObjectType => {
                let id = cat
                    .type_id(&q.candidate)
                    .ok_or_else(|| LmError::Specification(format!("unknown object type {:?}", q.candidate)))?;
                set.is_some_and(|s| s.types.contains(&id))
            }
            Group::ObjectColor => {
                let id = cat
                    .texture_id(&q.candidate)
                    .ok_or_else(|| LmError::Specification(format!("unknown texture {:?}", q.candidate)))?;
                set.is_some_and(|s| s.textures.contains(&id))
            }
        };
        Ok(if hit { Verdict::Yes } else { Verdict::No })
    }
}

impl RelevanceBackend for RuleOracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn query(&self, q: &Query) -> Result<RelevanceAnswer, LmError> {
        let verdict = self.verdict(q)?;
        let word = if verdict.is_yes() { "yes" } else { "no" };
        Ok(RelevanceAnswer { verdict, transcript: format!("Final answer: {word}"), source: AnswerSource::Oracle })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(u: &str, group: Group, c: &str, role: QueryRole) -> Query {
        Query { utterance: u.into(), group, candidate: c.into(), role }
    }

    #[test]
    fn listing_examples() {
        let o = RuleOracle::new(Arc::new(Registry::builtin()));
        let tiger = "Bring me the tiger-colored object.";
        assert_eq!(o.verdict(&q(tiger, Group::ObjectColor, "tiger", QueryRole::Target)).unwrap(), Verdict::Yes);
        assert_eq!(o.verdict(&q(tiger, Group::ObjectColor, "red", QueryRole::Target)).unwrap(), Verdict::No);
        assert_eq!(o.verdict(&q(tiger, Group::ObjectType, "pallet", QueryRole::Target)).unwrap(), Verdict::Yes);
        let heart = "Bring me the red heart.";
        assert_eq!(o.verdict(&q(heart, Group::ObjectType, "block", QueryRole::Target)).unwrap(), Verdict::No);
        assert_eq!(o.verdict(&q(heart, Group::ObjectType, "heart", QueryRole::Avoid)).unwrap(), Verdict::No);
        let sweep = "Sweep the block without touching the pan.";
        assert_eq!(o.verdict(&q(sweep, Group::ObjectType, "pan", QueryRole::Avoid)).unwrap(), Verdict::Yes);
        assert_eq!(o.verdict(&q(sweep, Group::ObjectType, "pan", QueryRole::Target)).unwrap(), Verdict::No);
    }

    #[test]
    fn multitask_utterances_are_registered() {
        let o = RuleOracle::new(Arc::new(Registry::builtin()));
        let fruit = "Bring me a fruit.";
        assert!(o.verdict(&q(fruit, Group::ObjectType, "tomato", QueryRole::Target)).unwrap().is_yes());
        assert!(o.verdict(&q(fruit, Group::ObjectType, "apple", QueryRole::Target)).unwrap().is_yes());
        assert!(!o.verdict(&q("Bring me a tomato.", Group::ObjectType, "apple", QueryRole::Target)).unwrap().is_yes());
    }

    #[test]
    fn unregistered_utterance_is_an_error() {
        let o = RuleOracle::new(Arc::new(Registry::builtin()));
        let e = o.query(&q("Juggle the pan.", Group::ObjectType, "pan", QueryRole::Target));
        assert!(matches!(e, Err(LmError::Oracle(_))));
    }
}
