use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::StoreError;

/// Specialty folders created by default, one per dataset specialty.
pub const DEFAULT_SPECIALTIES: [&str; 22] = [
    "Allergy and Immunology",
    "Cardiology",
    "Dermatology",
    "Emergency Medicine",
    "Endocrinology",
    "Gastroenterology",
    "General Surgery",
    "Hematology",
    "Infectious Disease",
    "Internal Medicine",
    "Nephrology",
    "Neurology",
    "Obstetrics and Gynecology",
    "Oncology",
    "Ophthalmology",
    "Orthopedics",
    "Otolaryngology",
    "Pediatrics",
    "Psychiatry",
    "Pulmonology",
    "Rheumatology",
    "Urology",
];

/// Pseudo-specialty naming the central database as a referral origin.
/// It never has a folder under the specialty root.
pub const PRIMARY_CARE: &str = "PrimaryCare";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreLayout {
    pub patient_root: String,
    pub specialty_root: String,
    pub specialties: Vec<String>,
}

impl Default for StoreLayout {
    fn default() -> Self {
        Self {
            patient_root: "Patient".into(),
            specialty_root: "Specialty".into(),
            specialties: DEFAULT_SPECIALTIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl StoreLayout {
    pub fn with_specialties<I, S>(specialties: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            specialties: specialties.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        for dir in [&self.patient_root, &self.specialty_root] {
            check_segment(dir).map_err(|why| {
                StoreError::CorruptLayout(format!("root directory {dir:?}: {why}"))
            })?;
        }
        if self.patient_root == self.specialty_root {
            return Err(StoreError::CorruptLayout(
                "patient and specialty roots must differ".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in &self.specialties {
            check_segment(name)
                .map_err(|why| StoreError::CorruptLayout(format!("specialty {name:?}: {why}")))?;
            if name == PRIMARY_CARE {
                return Err(StoreError::CorruptLayout(format!(
                    "specialty name {PRIMARY_CARE:?} is reserved"
                )));
            }
            if !seen.insert(name.to_lowercase()) {
                return Err(StoreError::CorruptLayout(format!(
                    "duplicate specialty {name:?}"
                )));
            }
        }
        Ok(())
    }

    /// Resolves a specialty name case-insensitively to its canonical spelling.
    pub fn resolve_specialty(&self, name: &str) -> Option<&str> {
        let wanted = name.trim().to_lowercase();
        self.specialties
            .iter()
            .find(|s| s.to_lowercase() == wanted)
            .map(String::as_str)
    }
}

fn check_segment(name: &str) -> Result<(), &'static str> {
    if name.trim().is_empty() {
        return Err("empty name");
    }
    if name.contains(['/', '\\', '\0']) {
        return Err("contains a path separator");
    }
    if name.starts_with('.') {
        return Err("starts with '.'");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_valid() {
        let layout = StoreLayout::default();
        layout.validate().unwrap();
        assert_eq!(layout.specialties.len(), 22);
    }

    #[test]
    fn rejects_bad_names() {
        for bad in ["", "Cardio/logy", ".hidden", PRIMARY_CARE] {
            let layout = StoreLayout::with_specialties([bad]);
            assert!(matches!(layout.validate(), Err(StoreError::CorruptLayout(_))), "{bad:?}");
        }
        let dup = StoreLayout::with_specialties(["Cardiology", "cardiology"]);
        assert!(matches!(dup.validate(), Err(StoreError::CorruptLayout(_))));
    }

    #[test]
    fn resolves_case_insensitively() {
        let layout = StoreLayout::default();
        assert_eq!(layout.resolve_specialty(" pulmonology "), Some("Pulmonology"));
        assert_eq!(layout.resolve_specialty("Astrology"), None);
    }
}
