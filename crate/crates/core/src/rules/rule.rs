use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::kg::Vocab;
use crate::{Error, Result};

/// Longest supported rule body.
pub const MAX_RULE_LENGTH: usize = 4;

/// Variable names used in rule files: `X` and `Y` are the head variables.
pub const VAR_NAMES: [&str; 8] = ["X", "Y", "Z", "A", "B", "C", "D", "E"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(u8),
    Const(u32),
}

pub const X: Term = Term::Var(0);
pub const Y: Term = Term::Var(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub relation: u32,
    pub subject: Term,
    pub object: Term,
}

/// One body atom seen while walking from the anchor: `forward` means the walk follows
/// the atom from subject to object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Step {
    pub relation: u32,
    pub forward: bool,
}

/// What the last term of the body chain is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    /// The other head variable (cyclic rule).
    Head,
    Const(u32),
    /// A variable bound nowhere else.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    /// `h(X,Y) <= b1(X,..), .., bn(..,Y)`
    Cyclic,
    /// `h(X,c) <= b1(X,..), .., bn(..,d)`
    ConstantEnd,
    /// `h(X,c) <= b1(X,..), .., bn(..,Z)` with `Z` free
    DanglingEnd,
    /// `h(X,c) <=` with an empty body; `X` ranges over the entities seen in that
    /// position of `h`.
    ZeroBody,
}

/// A chain-shaped Horn rule in canonical form.
///
/// The body is a path starting at the anchor (the head variable; `X` for cyclic
/// rules) and its variables are numbered in walk order, so equal rules compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    head: Atom,
    body: Vec<Atom>,
}

impl Rule {
    /// Builds the canonical rule for a walk.
    ///
    /// `head_const` is the constant head entity (`None` for cyclic rules). A cyclic rule
    /// is always anchored on the head subject.
    pub fn build(
        relation: u32,
        anchor_subject: bool,
        head_const: Option<u32>,
        steps: &[Step],
        end: End,
    ) -> Result<Rule> {
        if steps.len() > MAX_RULE_LENGTH {
            return Err(Error::Config(format!(
                "rule body of length {} exceeds {MAX_RULE_LENGTH}",
                steps.len()
            )));
        }
        let head = match (head_const, anchor_subject) {
            (None, true) => {
                if steps.is_empty() || end != End::Head {
                    return Err(Error::Config("cyclic rules need a body ending in Y".into()));
                }
                Atom {
                    relation,
                    subject: X,
                    object: Y,
                }
            }
            (None, false) => return Err(Error::Config("cyclic rules are anchored on X".into())),
            (Some(c), true) => Atom {
                relation,
                subject: X,
                object: Term::Const(c),
            },
            (Some(c), false) => Atom {
                relation,
                subject: Term::Const(c),
                object: Y,
            },
        };
        if head_const.is_some() && end == End::Head {
            return Err(Error::Config("only cyclic rules end in the other head variable".into()));
        }
        let mut prev = if anchor_subject { X } else { Y };
        let mut fresh = 2u8;
        let mut body = Vec::with_capacity(steps.len());
        for (i, st) in steps.iter().enumerate() {
            let next = match (i + 1 == steps.len(), end) {
                (true, End::Head) => Y,
                (true, End::Const(d)) => Term::Const(d),
                _ => {
                    fresh += 1;
                    Term::Var(fresh - 1)
                }
            };
            body.push(if st.forward {
                Atom {
                    relation: st.relation,
                    subject: prev,
                    object: next,
                }
            } else {
                Atom {
                    relation: st.relation,
                    subject: next,
                    object: prev,
                }
            });
            prev = next;
        }
        Ok(Rule { head, body })
    }

    /// Canonical rule from arbitrary atoms; the body must be a chain from the anchor.
    pub fn from_atoms(head: Atom, body: Vec<Atom>) -> Result<Rule> {
        let bad = |m: &str| Err(Error::Config(format!("malformed rule: {m}")));
        let (anchor_subject, head_const, other) = match (head.subject, head.object) {
            (Term::Var(a), Term::Var(b)) if a != b => (true, None, Some(head.object)),
            (Term::Var(_), Term::Const(c)) => (true, Some(c), None),
            (Term::Const(c), Term::Var(_)) => (false, Some(c), None),
            _ => return bad("the head needs one or two distinct variables"),
        };
        let anchor = if anchor_subject { head.subject } else { head.object };
        let mut seen = vec![anchor];
        if let Some(o) = other {
            seen.push(o);
        }
        let mut cur = anchor;
        let mut steps = Vec::with_capacity(body.len());
        let mut end = End::Free;
        for (i, a) in body.iter().enumerate() {
            let last = i + 1 == body.len();
            let (forward, next) = if a.subject == cur {
                (true, a.object)
            } else if a.object == cur {
                (false, a.subject)
            } else {
                return bad("body atoms must form a chain from the head variable");
            };
            if a.subject == a.object {
                return bad("an atom relates a term to itself");
            }
            steps.push(Step {
                relation: a.relation,
                forward,
            });
            match next {
                Term::Const(d) if last => end = End::Const(d),
                Term::Const(_) => return bad("constants may only end the body"),
                v if Some(v) == other => {
                    if !last {
                        return bad("the second head variable may only end the body");
                    }
                    end = End::Head;
                }
                v if seen.contains(&v) => return bad("a body variable is reused"),
                v => seen.push(v),
            }
            cur = next;
        }
        if other.is_some() && end != End::Head {
            return bad("a cyclic head needs a body ending in its second variable");
        }
        // a cyclic head `h(Y,X)` is renamed so the anchor is called X
        Rule::build(head.relation, anchor_subject, head_const, &steps, end)
    }

    pub fn head(&self) -> &Atom {
        &self.head
    }

    pub fn body(&self) -> &[Atom] {
        &self.body
    }

    pub fn len(&self) -> usize {
        self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    pub fn relation(&self) -> u32 {
        self.head.relation
    }

    pub fn kind(&self) -> RuleKind {
        match (self.head_constant(), self.end()) {
            (None, _) => RuleKind::Cyclic,
            (Some(_), _) if self.body.is_empty() => RuleKind::ZeroBody,
            (Some(_), End::Const(_)) => RuleKind::ConstantEnd,
            _ => RuleKind::DanglingEnd,
        }
    }

    /// True when the body walk starts from the head subject.
    pub fn anchor_subject(&self) -> bool {
        matches!(self.head.subject, Term::Var(0))
    }

    pub fn head_constant(&self) -> Option<u32> {
        match (self.head.subject, self.head.object) {
            (Term::Const(c), _) | (_, Term::Const(c)) => Some(c),
            _ => None,
        }
    }

    /// The body as walk steps from the anchor.
    pub fn steps(&self) -> Vec<Step> {
        let mut cur = if self.anchor_subject() { X } else { Y };
        self.body
            .iter()
            .map(|a| {
                let forward = a.subject == cur;
                cur = if forward { a.object } else { a.subject };
                Step {
                    relation: a.relation,
                    forward,
                }
            })
            .collect()
    }

    pub fn end(&self) -> End {
        match self.body.last() {
            None => End::Free,
            Some(a) => {
                let last = if self.steps().last().is_some_and(|s| s.forward) {
                    a.object
                } else {
                    a.subject
                };
                match last {
                    Term::Const(d) => End::Const(d),
                    Y if self.head_constant().is_none() => End::Head,
                    _ => End::Free,
                }
            }
        }
    }

    /// `rel(T,T) <= rel(T,T), ...` with entity and relation names.
    pub fn display(&self, entities: &Vocab, relations: &Vocab) -> String {
        let term = |t: Term| match t {
            Term::Var(v) => VAR_NAMES[v as usize].to_owned(),
            Term::Const(c) => entities.name(c).to_owned(),
        };
        let atom = |a: &Atom| format!("{}({},{})", relations.name(a.relation), term(a.subject), term(a.object));
        let body: Vec<String> = self.body.iter().map(atom).collect();
        format!("{} <= {}", atom(&self.head), body.join(", "))
    }

    /// Parses the `display` form.
    pub fn parse(text: &str, entities: &Vocab, relations: &Vocab) -> Result<Rule> {
        let (head, body) = text
            .split_once("<=")
            .ok_or_else(|| Error::Format(format!("missing '<=' in rule {text:?}")))?;
        let head = parse_atoms(head, entities, relations)?;
        let [head] = head.as_slice() else {
            return Err(Error::Format(format!("rule {text:?} needs exactly one head atom")));
        };
        let body = parse_atoms(body, entities, relations)?;
        Rule::from_atoms(*head, body)
    }
}

fn parse_atoms(text: &str, entities: &Vocab, relations: &Vocab) -> Result<Vec<Atom>> {
    let mut rest = text.trim();
    let mut atoms = Vec::new();
    while !rest.is_empty() {
        let open = rest
            .find('(')
            .ok_or_else(|| Error::Format(format!("expected an atom at {rest:?}")))?;
        let close = rest[open..]
            .find(')')
            .map(|c| c + open)
            .ok_or_else(|| Error::Format(format!("unclosed atom at {rest:?}")))?;
        let rel_name = rest[..open].trim();
        let relation = relations
            .id(rel_name)
            .ok_or_else(|| Error::Lookup(format!("unknown relation {rel_name:?}")))?;
        let (s, o) = rest[open + 1..close]
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("atom {:?} needs two terms", &rest[..=close])))?;
        atoms.push(Atom {
            relation,
            subject: parse_term(s.trim(), entities)?,
            object: parse_term(o.trim(), entities)?,
        });
        rest = rest[close + 1..].trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(atoms)
}

fn parse_term(s: &str, entities: &Vocab) -> Result<Term> {
    if let Some(v) = VAR_NAMES.iter().position(|&n| n == s) {
        return Ok(Term::Var(v as u8));
    }
    entities
        .id(s)
        .map(Term::Const)
        .ok_or_else(|| Error::Lookup(format!("unknown entity {s:?}")))
}

/// Names that cannot appear as constants or relations in a rules file.
pub(crate) fn check_name(name: &str, is_entity: bool) -> Result<()> {
    if name.contains(['(', ')', ',', '\t', '\n']) || name.contains("<=") {
        return Err(Error::Format(format!(
            "name {name:?} cannot be written to a rules file"
        )));
    }
    if is_entity && VAR_NAMES.contains(&name) {
        return Err(Error::Format(format!("entity {name:?} collides with a rule variable")));
    }
    Ok(())
}

/// A rule with its counts on the training graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRule {
    pub rule: Rule,
    pub support: u64,
    pub body_count: u64,
    pub confidence: f64,
}

impl ScoredRule {
    /// `support⇥body_count⇥confidence⇥rule`
    pub fn to_line(&self, entities: &Vocab, relations: &Vocab) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{}\t{}\t{}\t{}",
            self.support,
            self.body_count,
            self.confidence,
            self.rule.display(entities, relations)
        );
        s
    }

    pub fn parse_line(line: &str, entities: &Vocab, relations: &Vocab) -> Result<ScoredRule> {
        let mut parts = line.splitn(4, '\t');
        let mut field = |what: &str| {
            parts
                .next()
                .ok_or_else(|| Error::Format(format!("rule line lacks the {what} field")))
        };
        let support = field("support")?;
        let body_count = field("body count")?;
        let confidence = field("confidence")?;
        let rule = field("rule")?;
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Format(format!("bad {what} {s:?}")))
        };
        let support = num(support, "support")?;
        let body_count = num(body_count, "body count")?;
        let confidence: f64 = confidence
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad confidence {confidence:?}")))?;
        if body_count == 0 || support > body_count || !(confidence > 0.0 && confidence <= 1.0) {
            return Err(Error::Format(format!(
                "inconsistent counts {support}/{body_count} with confidence {confidence}"
            )));
        }
        Ok(ScoredRule {
            rule: Rule::parse(rule, entities, relations)?,
            support,
            body_count,
            confidence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocabs() -> (Vocab, Vocab) {
        (
            Vocab::from_names(["d", "D006099", "D006973", "m"]),
            Vocab::from_names(["DrDiA", "treats"]),
        )
    }

    #[test]
    fn display_and_parse_round_trip() {
        let (e, r) = vocabs();
        let rule = Rule::build(
            0,
            true,
            Some(2),
            &[Step {
                relation: 0,
                forward: true,
            }],
            End::Const(1),
        )
        .unwrap();
        let text = rule.display(&e, &r);
        assert_eq!(text, "DrDiA(X,D006973) <= DrDiA(X,D006099)");
        assert_eq!(Rule::parse(&text, &e, &r).unwrap(), rule);
        assert_eq!(rule.kind(), RuleKind::ConstantEnd);
    }

    #[test]
    fn every_kind_round_trips() {
        let (e, r) = vocabs();
        let f = Step {
            relation: 1,
            forward: true,
        };
        let b = Step {
            relation: 0,
            forward: false,
        };
        let rules = [
            Rule::build(0, true, None, &[f, b], End::Head).unwrap(),
            Rule::build(0, false, Some(3), &[b, f, f], End::Free).unwrap(),
            Rule::build(1, true, Some(0), &[], End::Free).unwrap(),
            Rule::build(1, false, Some(0), &[f], End::Const(2)).unwrap(),
        ];
        let kinds: Vec<RuleKind> = rules.iter().map(Rule::kind).collect();
        assert_eq!(
            kinds,
            [
                RuleKind::Cyclic,
                RuleKind::DanglingEnd,
                RuleKind::ZeroBody,
                RuleKind::ConstantEnd
            ]
        );
        for rule in rules {
            let line = ScoredRule {
                rule: rule.clone(),
                support: 3,
                body_count: 4,
                confidence: 0.75,
            }
            .to_line(&e, &r);
            let back = ScoredRule::parse_line(&line, &e, &r).unwrap();
            assert_eq!(back.rule, rule, "{line}");
            assert_eq!((back.support, back.body_count, back.confidence), (3, 4, 0.75));
            assert_eq!(
                Rule::build(
                    rule.relation(),
                    rule.anchor_subject(),
                    rule.head_constant(),
                    &rule.steps(),
                    rule.end()
                )
                .unwrap(),
                rule
            );
        }
    }

    #[test]
    fn renamed_variables_are_canonicalized() {
        let (e, r) = vocabs();
        let a = Rule::parse("treats(X,Y) <= DrDiA(X,B), DrDiA(Y,B)", &e, &r).unwrap();
        let b = Rule::parse("treats(X,Y) <= DrDiA(X,Z), DrDiA(Y,Z)", &e, &r).unwrap();
        assert_eq!(a, b);
        let c = Rule::parse("treats(Y,X) <= DrDiA(Y,Z), DrDiA(X,Z)", &e, &r).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn malformed_rules_are_rejected() {
        let (e, r) = vocabs();
        for bad in [
            "treats(X,Y) <= DrDiA(Z,m)",
            "treats(X,Y) <= DrDiA(X,m)",
            "treats(d,m) <= DrDiA(X,m)",
            "treats(X,m) <= DrDiA(X,Z), DrDiA(Z,X)",
            "treats(X,m) DrDiA(X,Z)",
            "nope(X,m) <= DrDiA(X,Z)",
            "treats(X,m) <= DrDiA(X,Z), DrDiA(Z,A), DrDiA(A,B), DrDiA(B,C), DrDiA(C,D)",
        ] {
            assert!(Rule::parse(bad, &e, &r).is_err(), "{bad}");
        }
    }

    #[test]
    fn inconsistent_counts_are_rejected() {
        let (e, r) = vocabs();
        assert!(ScoredRule::parse_line("5\t4\t1\ttreats(X,m) <= ", &e, &r).is_err());
        assert!(ScoredRule::parse_line("0\t0\t0\ttreats(X,m) <= ", &e, &r).is_err());
        assert!(ScoredRule::parse_line("1\t2\t0.5\ttreats(X,m) <= ", &e, &r).is_ok());
    }
}
