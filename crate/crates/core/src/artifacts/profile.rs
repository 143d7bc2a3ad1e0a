use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::excerpt::parse_json_document;
use super::{ArtifactError, Extras, Generation, JsonFields, Parsed};

/// Account holder data from the gen-1 `userObject.json` or the gen-2
/// `active-account.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: Option<String>,
    pub first_name: Option<String>,
    pub last_name: Option<String>,
    pub gender: Option<String>,
    pub date_of_birth: Option<String>,
    pub email: Option<String>,
    /// Kept as stored; may be an object, a string, or an elided `{}`.
    pub home_address: Option<Value>,
    pub phone: Option<String>,
    /// Linked social accounts; `null` entries are kept to show the slot exists.
    pub social: Extras,
    pub extras: Extras,
}

const SOCIAL_KEYS: &[&str] = &["facebook", "twitter", "instagram", "strava", "google", "apple", "komoot"];

pub fn parse_user_profile(bytes: &[u8], generation: Generation) -> Result<Parsed<UserProfile>, ArtifactError> {
    let (doc, redacted) = parse_json_document(bytes)?;
    let Value::Object(map) = doc else {
        return Err(ArtifactError::invalid("profile", "top level is not an object"));
    };
    let mut f = JsonFields::new(map);

    // Both spellings are accepted regardless of generation; the generation
    // only decides which one is tried first.
    let pick = |gen1: &'static str, gen2: &'static str| -> [&'static str; 2] {
        match generation {
            Generation::Gen2 => [gen2, gen1],
            _ => [gen1, gen2],
        }
    };

    let mut p = UserProfile {
        user_id: f.take_string(&pick("user_id", "userId")),
        first_name: f.take_string(&pick("first_name", "firstName")),
        last_name: f.take_string(&pick("last_name", "lastName")),
        gender: f.take_string(&["gender"]),
        date_of_birth: f.take_string(&pick("date_of_birth", "dateOfBirth")),
        email: f.take_string(&["email", "emailAddress"]),
        home_address: f.take(&["home_address", "homeAddress", "address"]),
        phone: f.take_string(&["mobile_phone_number", "phoneNumber", "mobilePhoneNumber", "phone"]),
        ..Default::default()
    };
    for key in SOCIAL_KEYS {
        if let Some(v) = f.take(&[key]) {
            p.social.insert((*key).to_string(), v);
        }
    }
    p.extras = f.into_extras();

    let mut warnings = Vec::new();
    if redacted {
        warnings.push("document carries redaction marks; masked values read as null".to_string());
    }
    if p.user_id.is_none() {
        warnings.push("no user id".to_string());
    }
    Ok(Parsed::new(p, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn gen1_keys() {
        let doc = br#"{"user_id": 7, "first_name": "A", "last_name": "B", "gender": "f",
            "date_of_birth": "1990-01-01", "email": "a@b.c", "home_address": {"city": "X"},
            "mobile_phone_number": "+49", "facebook": null, "locale": "de"}"#;
        let p = parse_user_profile(doc, Generation::Gen1).unwrap();
        assert!(p.warnings.is_empty());
        let p = p.value;
        assert_eq!(p.user_id.as_deref(), Some("7"));
        assert_eq!(p.home_address, Some(json!({"city": "X"})));
        assert_eq!(p.phone.as_deref(), Some("+49"));
        assert_eq!(p.social["facebook"], Value::Null);
        assert_eq!(p.extras["locale"], "de");
    }

    #[test]
    fn gen2_keys() {
        let doc = br#"{"userId": "u", "firstName": "C", "lastName": "D", "dateOfBirth": "2000-02-02",
            "address": "Street 1", "phoneNumber": "0"}"#;
        let p = parse_user_profile(doc, Generation::Gen2).unwrap().value;
        assert_eq!(p.first_name.as_deref(), Some("C"));
        assert_eq!(p.home_address, Some(json!("Street 1")));
        assert!(p.extras.is_empty());
    }

    #[test]
    fn rejects_non_object() {
        assert!(parse_user_profile(b"[1]", Generation::Gen1).is_err());
        assert!(matches!(parse_user_profile(b"{", Generation::Gen1), Err(ArtifactError::Json(_))));
    }
}
