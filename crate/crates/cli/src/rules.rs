//! Attribute rules that select the characteristic images of a probe, e.g.
//! `gender==female`, `somatotype.endo>0.6`, `hair!=shaved`.

use std::fmt;
use std::str::FromStr;

use soma_forge::synthset::{Gender, HairStyle, ImageRecord, SkinTone};
use soma_forge::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Gender,
    Skin,
    Hair,
    Ecto,
    Meso,
    Endo,
    Subject,
    Clothing,
    Pose,
    Camera,
    /// Camera elevation in degrees.
    Elevation,
    /// Camera distance in metres.
    Distance,
}

const FIELDS: [(&str, Field); 12] = [
    ("gender", Field::Gender),
    ("skin", Field::Skin),
    ("hair", Field::Hair),
    ("somatotype.ecto", Field::Ecto),
    ("somatotype.meso", Field::Meso),
    ("somatotype.endo", Field::Endo),
    ("subject", Field::Subject),
    ("clothing", Field::Clothing),
    ("pose", Field::Pose),
    ("camera", Field::Camera),
    ("elevation", Field::Elevation),
    ("distance", Field::Distance),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Ge,
    Le,
    Gt,
    Lt,
}

// Two-character operators first so `>=` is not read as `>`.
const OPS: [(&str, Op); 6] = [
    ("==", Op::Eq),
    ("!=", Op::Ne),
    (">=", Op::Ge),
    ("<=", Op::Le),
    (">", Op::Gt),
    ("<", Op::Lt),
];

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Number(f64),
    Word(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    text: String,
    field: Field,
    op: Op,
    value: Value,
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = |why: &str| Error::Config(format!("attribute rule `{s}`: {why}"));
        let (at, op_text, op) = OPS
            .iter()
            .filter_map(|&(t, op)| text.find(t).map(|i| (i, t, op)))
            .min_by_key(|&(i, t, _)| (i, std::cmp::Reverse(t.len())))
            .ok_or_else(|| bad("no comparison operator"))?;
        let name = &text[..at];
        let raw = &text[at + op_text.len()..];
        let field = FIELDS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, f)| f)
            .ok_or_else(|| {
                let known: Vec<&str> = FIELDS.iter().map(|(n, _)| *n).collect();
                bad(&format!(
                    "unknown attribute `{name}` (known: {})",
                    known.join(", ")
                ))
            })?;
        if raw.is_empty() {
            return Err(bad("missing value"));
        }
        let categorical = matches!(field, Field::Gender | Field::Skin | Field::Hair);
        let value = if categorical {
            if !matches!(op, Op::Eq | Op::Ne) {
                return Err(bad("categorical attributes only support == and !="));
            }
            let word = raw.to_ascii_lowercase();
            let known: &[&str] = match field {
                Field::Gender => &["female", "male"],
                Field::Skin => &["caucasian", "dark", "beige"],
                _ => &["shaved", "short", "ponytail", "long"],
            };
            if !known.contains(&word.as_str()) {
                return Err(bad(&format!("`{raw}` is not one of {}", known.join(", "))));
            }
            Value::Word(word)
        } else {
            Value::Number(
                raw.parse()
                    .map_err(|_| bad(&format!("`{raw}` is not a number")))?,
            )
        };
        Ok(Rule {
            text,
            field,
            op,
            value,
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Rule {
    pub fn matches(&self, r: &ImageRecord) -> Result<bool> {
        let missing = || Error::Data(format!("{}: no value for rule `{}`", r.path, self.text));
        let value = match self.field {
            Field::Gender => Value::Word(
                match r.gender.ok_or_else(missing)? {
                    Gender::Female => "female",
                    Gender::Male => "male",
                }
                .into(),
            ),
            Field::Skin => Value::Word(
                match r.skin_tone.ok_or_else(missing)? {
                    SkinTone::Caucasian => "caucasian",
                    SkinTone::Dark => "dark",
                    SkinTone::Beige => "beige",
                }
                .into(),
            ),
            Field::Hair => Value::Word(
                match r.hair.ok_or_else(missing)?.style {
                    HairStyle::Shaved => "shaved",
                    HairStyle::Short => "short",
                    HairStyle::Ponytail => "ponytail",
                    HairStyle::Long => "long",
                }
                .into(),
            ),
            Field::Ecto => Value::Number(r.somatotype.ok_or_else(missing)?.w_ecto),
            Field::Meso => Value::Number(r.somatotype.ok_or_else(missing)?.w_meso),
            Field::Endo => Value::Number(r.somatotype.ok_or_else(missing)?.w_endo),
            Field::Subject => Value::Number(r.subject_id as f64),
            Field::Clothing => Value::Number(r.clothing_id.ok_or_else(missing)? as f64),
            Field::Pose => Value::Number(r.pose_id.ok_or_else(missing)? as f64),
            Field::Camera => Value::Number(r.camera_id as f64),
            Field::Elevation => Value::Number(r.camera.ok_or_else(missing)?.elevation.to_degrees()),
            Field::Distance => Value::Number(r.camera.ok_or_else(missing)?.distance),
        };
        Ok(match (&value, &self.value) {
            (Value::Word(a), Value::Word(b)) => (a == b) == (self.op == Op::Eq),
            (Value::Number(a), Value::Number(b)) => match self.op {
                Op::Eq => a == b,
                Op::Ne => a != b,
                Op::Ge => a >= b,
                Op::Le => a <= b,
                Op::Gt => a > b,
                Op::Lt => a < b,
            },
            _ => unreachable!("value kinds are checked at parse time"),
        })
    }

    pub fn select(&self, records: &[&ImageRecord]) -> Result<Vec<bool>> {
        records.iter().map(|r| self.matches(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ImageRecord {
        serde_json::from_str(
            r#"{"path": "a.ppm", "subject_id": 3, "camera_id": 7, "gender": "female",
                "somatotype": {"w_ecto": 0.1, "w_meso": 0.2, "w_endo": 0.7},
                "hair": {"style": "ponytail", "colour": [1, 2, 3]}}"#,
        )
        .unwrap()
    }

    fn eval(rule: &str) -> bool {
        rule.parse::<Rule>().unwrap().matches(&record()).unwrap()
    }

    #[test]
    fn comparisons() {
        assert!(eval("gender==female"));
        assert!(!eval("gender != female"));
        assert!(eval("somatotype.endo>0.6"));
        assert!(!eval("somatotype.endo<=0.6"));
        assert!(eval("somatotype.ecto>=0.1"));
        assert!(eval("subject==3"));
        assert!(eval("camera<8"));
        assert!(eval("hair==Ponytail"));
    }

    #[test]
    fn malformed_rules() {
        for bad in [
            "gender",
            "height>2",
            "gender>female",
            "gender==robot",
            "subject==x",
            "subject==",
        ] {
            assert!(bad.parse::<Rule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn missing_attribute_is_a_data_error() {
        let r = record();
        let rule: Rule = "skin==dark".parse().unwrap();
        assert!(matches!(rule.matches(&r), Err(Error::Data(_))));
    }
}
