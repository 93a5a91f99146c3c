use super::{LmError, Verdict};

const MARKER: &str = "final answer";

fn strip_decoration(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '#' | '>' | '`' | '-' | '"' | '\''))
}

fn token(s: &str) -> Option<Verdict> {
    let word: String = strip_decoration(s).chars().take_while(|c| c.is_alphabetic()).collect::<String>().to_lowercase();
    match word.as_str() {
        "yes" => Some(Verdict::Yes),
        "no" => Some(Verdict::No),
        _ => None,
    }
}

/// Reads the verdict after the last `Final answer:` line.
///
/// Markdown emphasis and trailing punctuation are ignored; if the marker line
/// has nothing after it, the next non-empty line is used.
pub fn parse_final_answer(transcript: &str) -> Result<Verdict, LmError> {
    let lines: Vec<&str> = transcript.lines().collect();
    let marker = lines.iter().enumerate().rev().find_map(|(i, l)| {
        let s = strip_decoration(l);
        let head = s.get(..MARKER.len())?;
        head.eq_ignore_ascii_case(MARKER).then(|| (i, s[MARKER.len()..].to_string()))
    });
    let Some((i, rest)) = marker else {
        return Err(LmError::Parse("no \"Final answer:\" line".into()));
    };
    let rest = strip_decoration(rest.trim_start_matches(|c: char| c == ':' || c == '*' || c.is_whitespace()));
    if !rest.is_empty() {
        return token(rest).ok_or_else(|| LmError::Parse(format!("unexpected final answer {rest:?}")));
    }
    let next = lines[i + 1..].iter().map(|l| strip_decoration(l)).find(|l| !l.is_empty());
    next.and_then(token).ok_or_else(|| LmError::Parse("final answer has no yes/no token".into()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn examples() {
        assert_eq!(parse_final_answer("The heart is red.\nFinal answer: yes").unwrap(), Verdict::Yes);
        assert_eq!(parse_final_answer("Final answer: No.").unwrap(), Verdict::No);
        assert!(parse_final_answer("I think so").is_err());
    }

    #[test]
    fn last_marker_wins() {
        let t = "Final answer: yes\nWait, reconsider.\nFinal answer: no";
        assert_eq!(parse_final_answer(t).unwrap(), Verdict::No);
    }

    #[test]
    fn tolerates_markdown() {
        assert_eq!(parse_final_answer("**Final answer:** Yes").unwrap(), Verdict::Yes);
        assert_eq!(parse_final_answer("  final ANSWER :  **no**!").unwrap(), Verdict::No);
        assert_eq!(parse_final_answer("Final answer:\n\nyes").unwrap(), Verdict::Yes);
    }

    #[test]
    fn rejects_non_verdicts() {
        assert!(parse_final_answer("Final answer: maybe").is_err());
        assert!(parse_final_answer("Final answer: nobody").is_err());
        assert!(parse_final_answer("Final answer:").is_err());
        assert!(parse_final_answer("").is_err());
    }

    proptest! {
        #[test]
        fn never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
            let s = String::from_utf8_lossy(&bytes);
            let _ = parse_final_answer(&s);
        }

        #[test]
        fn never_panics_near_marker(prefix in ".{0,40}", suffix in ".{0,40}") {
            let _ = parse_final_answer(&format!("{prefix}\nFinal answer:{suffix}"));
            let _ = parse_final_answer(&format!("{prefix}final answer{suffix}"));
        }
    }
}
