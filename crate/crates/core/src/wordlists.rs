//! Packaged word lists: seed sets, WEAT target/attribute lists and the stereotyped
//! adjective and profession lists used for indirect-stereotype tests.
//!
//! Name lists for the names-based career/home test are not packaged; supply them as a
//! test-spec file.

pub const SEEDS_MASCULINE: &[&str] = &["he", "him", "his", "himself", "man", "men", "boy", "boys"];
pub const SEEDS_FEMININE: &[&str] = &["she", "her", "hers", "herself", "woman", "women", "girl", "girls"];

pub const FEMININE_ADJECTIVES: &[&str] = &[
    "affectionate",
    "sensitive",
    "appreciative",
    "sentimental",
    "sympathetic",
    "nagging",
    "fussy",
    "emotional",
];

pub const MASCULINE_ADJECTIVES: &[&str] = &[
    "handsome",
    "aggressive",
    "tough",
    "courageous",
    "strong",
    "forceful",
    "arrogant",
    "egotistical",
    "boastful",
    "dominant",
];

pub const FEMININE_PROFESSIONS: &[&str] = &[
    "therapist",
    "planner",
    "librarian",
    "paralegal",
    "nurse",
    "receptionist",
    "hairdresser",
    "nutritionist",
    "hygienist",
    "pathologist",
];

pub const MASCULINE_PROFESSIONS: &[&str] = &[
    "plumber",
    "mechanic",
    "carpenter",
    "electrician",
    "machinist",
    "engineer",
    "programmer",
    "architect",
    "officer",
    "paramedic",
];

pub const CAREER: &[&str] = &[
    "executive",
    "management",
    "professional",
    "corporation",
    "salary",
    "office",
    "business",
    "career",
];

pub const HOME: &[&str] = &[
    "home",
    "parents",
    "children",
    "family",
    "cousins",
    "marriage",
    "wedding",
    "relatives",
];

/// Science targets, without the proper noun of the classic list.
pub const SCIENCE: &[&str] = &[
    "science",
    "technology",
    "physics",
    "chemistry",
    "nasa",
    "experiment",
    "astronomy",
];

pub const ART: &[&str] = &[
    "poetry",
    "art",
    "dance",
    "literature",
    "novel",
    "symphony",
    "drama",
    "sculpture",
];

pub const MATH: &[&str] = &[
    "math",
    "algebra",
    "geometry",
    "calculus",
    "equations",
    "computation",
    "numbers",
    "addition",
];

/// Science targets of the classic science/arts association test.
pub const WEAT_SCIENCE: &[&str] = &[
    "science",
    "technology",
    "physics",
    "chemistry",
    "einstein",
    "nasa",
    "experiment",
    "astronomy",
];

/// Arts targets paired with [`WEAT_SCIENCE`].
pub const WEAT_SCIENCE_ARTS: &[&str] = &[
    "poetry",
    "art",
    "shakespeare",
    "dance",
    "literature",
    "novel",
    "symphony",
    "drama",
];

/// Masculine attribute terms paired with math/arts.
pub const MALE_TERMS: &[&str] = &["male", "man", "boy", "brother", "he", "him", "his", "son"];
pub const FEMALE_TERMS: &[&str] = &["female", "woman", "girl", "sister", "she", "her", "hers", "daughter"];

/// Masculine attribute terms paired with science/arts.
pub const MALE_FAMILY_TERMS: &[&str] = &["brother", "father", "uncle", "grandfather", "son", "he", "his", "him"];
pub const FEMALE_FAMILY_TERMS: &[&str] = &["sister", "mother", "aunt", "grandmother", "daughter", "she", "hers", "her"];

pub fn to_strings(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn list_sizes() {
        assert_eq!(FEMININE_ADJECTIVES.len(), 8);
        assert_eq!(MASCULINE_ADJECTIVES.len(), 10);
        assert_eq!(FEMININE_PROFESSIONS.len(), 10);
        assert_eq!(MASCULINE_PROFESSIONS.len(), 10);
        assert_eq!(WEAT_SCIENCE.len(), WEAT_SCIENCE_ARTS.len());
        assert_eq!(MATH.len(), ART.len());
        assert_eq!(CAREER.len(), HOME.len());
    }

    #[test]
    fn seeds_are_disjoint_lowercase() {
        let a: HashSet<_> = SEEDS_MASCULINE.iter().collect();
        assert!(SEEDS_FEMININE.iter().all(|w| !a.contains(w)));
        for list in [SEEDS_MASCULINE, SEEDS_FEMININE, MALE_TERMS, FEMALE_TERMS, WEAT_SCIENCE] {
            assert!(list.iter().all(|w| w.chars().all(|c| c.is_ascii_lowercase())));
        }
    }
}
