use serde::{Deserialize, Serialize};

use super::{Group, LmError, QueryRole};
use crate::sim::Catalog;

const SYSTEM_TEMPLATE: &str = "You are interfacing with a robotics environment that has a robotic arm learning to manipulate objects based on some linguistic command (e.g. \"pick up the red bowl\"). At each interaction, the researcher will specify the command that you need to teach the robot. In order to teach the robot, you will need to help design the training distribution by specifying what properties task-relevant objects can have based on the given command. Objects in this environment have two properties: object type, object color.  Any object type can be paired with any color, but an object can only take on exactly one object type and exactly one color.\nObject types:\n{object_list}\nObject colors:\n{object_colors}";

const USER_TEMPLATE: &str = "The command is \"{rule}\". In an instantiation of the environment that contains only some subset of the object types and colors, could the {role} have {group} \"{candidate}\"? Think step-by-step and then finish with a new line that says \"Final answer:\" followed by \"yes\" or \"no\".";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

pub fn system_prompt(catalog: &Catalog) -> String {
    let types: Vec<&str> = catalog.object_types().iter().map(|t| t.name.as_str()).collect();
    let textures: Vec<&str> = catalog.textures().iter().map(|t| t.name.as_str()).collect();
    SYSTEM_TEMPLATE.replace("{object_list}", &types.join(", ")).replace("{object_colors}", &textures.join(", "))
}

pub fn user_prompt(utterance: &str, group: Group, candidate: &str, role: QueryRole) -> String {
    USER_TEMPLATE
        .replace("{rule}", utterance)
        .replace("{role}", role.phrase())
        .replace("{group}", group.phrase())
        .replace("{candidate}", candidate)
}

pub fn build_prompt(
    catalog: &Catalog,
    utterance: &str,
    group: Group,
    candidate: &str,
    role: QueryRole,
) -> Result<PromptPair, LmError> {
    let known = match group {
        Group::ObjectType => catalog.type_id(candidate).is_some(),
        Group::ObjectColor => catalog.texture_id(candidate).is_some(),
    };
    if !known {
        return Err(LmError::Specification(format!("{candidate:?} is not a catalog {}", group.phrase())));
    }
    Ok(PromptPair { system: system_prompt(catalog), user: user_prompt(utterance, group, candidate, role) })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN_USER: &str = "The command is \"Bring me the red heart.\". In an instantiation of the environment that contains only some subset of the object types and colors, could the target object have object type \"heart\"? Think step-by-step and then finish with a new line that says \"Final answer:\" followed by \"yes\" or \"no\".";

    #[test]
    fn user_prompt_golden() {
        let cat = Catalog::builtin();
        let p = build_prompt(&cat, "Bring me the red heart.", Group::ObjectType, "heart", QueryRole::Target).unwrap();
        assert_eq!(p.user, GOLDEN_USER);
        assert!(p.user.contains("The command is \"Bring me the red heart.\""));
    }

    #[test]
    fn system_prompt_lists_every_name_once() {
        let cat = Catalog::builtin();
        let s = system_prompt(&cat);
        assert!(s.starts_with("You are interfacing with a robotics environment"));
        assert!(s.contains("object color.  Any object type"));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "Object types:");
        assert_eq!(lines[3], "Object colors:");
        let types: Vec<&str> = lines[2].split(", ").collect();
        let colors: Vec<&str> = lines[4].split(", ").collect();
        assert_eq!(types.len(), 29);
        assert_eq!(colors.len(), 81);
        for t in cat.object_types() {
            assert_eq!(types.iter().filter(|n| **n == t.name).count(), 1);
        }
        for t in cat.textures() {
            assert_eq!(colors.iter().filter(|n| **n == t.name).count(), 1);
        }
    }

    #[test]
    fn candidate_appears_once_and_instruction_ends() {
        let cat = Catalog::builtin();
        let p = build_prompt(&cat, "Rotate the block.", Group::ObjectColor, "tiger", QueryRole::Target).unwrap();
        assert_eq!(p.user.matches("\"tiger\"").count(), 1);
        assert!(p.user.ends_with("Think step-by-step and then finish with a new line that says \"Final answer:\" followed by \"yes\" or \"no\"."));
        assert!(p.user.contains("could the target object have object color \"tiger\""));
    }

    #[test]
    fn avoid_role_substitutes_the_object_phrase() {
        let cat = Catalog::builtin();
        let p = build_prompt(&cat, "Sweep the block without touching the pan.", Group::ObjectType, "pan", QueryRole::Avoid)
            .unwrap();
        assert!(p.user.contains("could the object to avoid have object type \"pan\""));
    }

    #[test]
    fn unknown_candidate_is_rejected() {
        let cat = Catalog::builtin();
        let e = build_prompt(&cat, "Rotate the block.", Group::ObjectType, "teapot", QueryRole::Target);
        assert!(matches!(e, Err(LmError::Specification(_))));
    }
}
