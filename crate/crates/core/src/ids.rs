//! Identifier newtypes shared across modules.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Catalogue identifier such as `NBS17`. Ordered naturally, so `NBS2 < NBS10`.
    NbsId
);
string_id!(
    /// Classification node code such as `NBS_su`.
    TaxonomyCode
);
string_id!(
    /// Baseline facet identifier (urban challenge or ecosystem service).
    FacetId
);
string_id!(
    /// Source project acronym (`GU`, `UNL`, `N4C`, `TN`).
    ProjectId
);

impl Ord for NbsId {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for NbsId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

macro_rules! lexical_ord {
    ($($name:ident),*) => {$(
        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                self.0.cmp(&other.0)
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
    )*};
}

lexical_ord!(TaxonomyCode, FacetId, ProjectId);

/// Compares a trailing run of digits numerically, everything before it lexically.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (a_head, a_num) = split_trailing_digits(a);
    let (b_head, b_num) = split_trailing_digits(b);
    a_head
        .cmp(b_head)
        .then_with(|| match (a_num, b_num) {
            (Some(x), Some(y)) => x.cmp(&y),
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.cmp(b))
}

fn split_trailing_digits(s: &str) -> (&str, Option<u128>) {
    let split = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let (head, digits) = s.split_at(split);
    (head, digits.parse().ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nbs_ids_sort_naturally() {
        let mut ids: Vec<NbsId> = ["NBS10", "NBS2", "NBS1", "NBS32", "NBS_a"]
            .into_iter()
            .map(NbsId::from)
            .collect();
        ids.sort();
        let got: Vec<&str> = ids.iter().map(NbsId::as_str).collect();
        assert_eq!(got, ["NBS1", "NBS2", "NBS10", "NBS32", "NBS_a"]);
    }

    #[test]
    fn leading_zeros_do_not_collapse_ids() {
        assert_ne!(NbsId::from("NBS01").cmp(&NbsId::from("NBS1")), Ordering::Equal);
    }
}
