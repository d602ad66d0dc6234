//! Small text helpers shared by retrieval and goal decomposition.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercased alphanumeric runs of `text`.
pub(crate) fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            out.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// How a clause is joined to the clause before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Connective {
    /// First clause of the goal.
    Start,
    /// `and`: runs alongside the previous clause.
    And,
    /// `then`, `and then` or `;`: runs after the previous group.
    Then,
}

/// Split a goal into clauses on `then`, `and then`, `and` and `;`.
///
/// Words are matched case-insensitively and only as whole words. Empty
/// clauses are dropped; when several connectives meet, `Then` wins.
pub(crate) fn split_clauses(goal: &str) -> Vec<(Connective, String)> {
    let spaced = goal.replace(';', " ; ");
    let raw: Vec<&str> = spaced.split_whitespace().collect();

    let mut clauses: Vec<(Connective, String)> = Vec::new();
    let mut words: Vec<&str> = Vec::new();
    let mut pending: Option<Connective> = None;

    let mut i = 0;
    while i < raw.len() {
        let word = raw[i].trim_matches(',');
        let boundary = if word == ";" || word.eq_ignore_ascii_case("then") {
            Some(Connective::Then)
        } else if word.eq_ignore_ascii_case("and") {
            let followed_by_then = raw
                .get(i + 1)
                .is_some_and(|n| n.trim_matches(',').eq_ignore_ascii_case("then"));
            if followed_by_then {
                i += 1;
                Some(Connective::Then)
            } else {
                Some(Connective::And)
            }
        } else {
            None
        };
        i += 1;

        match boundary {
            Some(conn) => {
                if !words.is_empty() {
                    push_clause(&mut clauses, &mut words, pending.take());
                }
                if !clauses.is_empty() {
                    pending = Some(match pending {
                        Some(Connective::Then) => Connective::Then,
                        _ => conn,
                    });
                }
            }
            None => words.push(raw[i - 1]),
        }
    }
    push_clause(&mut clauses, &mut words, pending);
    clauses
}

fn push_clause(clauses: &mut Vec<(Connective, String)>, words: &mut Vec<&str>, pending: Option<Connective>) {
    let joined = words.join(" ");
    words.clear();
    let trimmed = joined.trim_matches(|c: char| c == ',' || c.is_whitespace());
    if trimmed.is_empty() {
        return;
    }
    let conn = if clauses.is_empty() {
        Connective::Start
    } else {
        pending.unwrap_or(Connective::And)
    };
    clauses.push((conn, String::from(trimmed)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tokens_lowercase_alnum_runs() {
        assert_eq!(tokens("Marker_table, DE-genes 2x"), vec!["marker", "table", "de", "genes", "2x"]);
        assert!(tokens("  --  ").is_empty());
    }

    #[test]
    fn clause_splitting() {
        let c = split_clauses("identify markers then interpret the gene set");
        assert_eq!(c, vec![(Connective::Start, "identify markers".into()), (Connective::Then, "interpret the gene set".into())]);
        let c = split_clauses("run RNA analysis and run ATAC analysis");
        assert_eq!(c[1].0, Connective::And);
        let c = split_clauses("a and then b; c");
        assert_eq!(c.iter().map(|x| x.0).collect::<Vec<_>>(), vec![Connective::Start, Connective::Then, Connective::Then]);
        assert_eq!(split_clauses("sort a list").len(), 1);
        assert_eq!(split_clauses("then ; sort").len(), 1);
        let c = split_clauses("a then and b");
        assert_eq!(c[1].0, Connective::Then);
    }
}
