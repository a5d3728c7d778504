//! Serde adapter writing non-finite floats as the strings `inf`, `-inf` and
//! `nan`, which plain JSON cannot represent.

use serde::{Deserialize, Deserializer, Serializer};

#[derive(Deserialize)]
#[serde(untagged)]
enum Repr {
    Number(f64),
    Text(String),
}

fn decode<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
    match r {
        Repr::Number(v) => Ok(v),
        Repr::Text(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("invalid float '{other}'"))),
        },
    }
}

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string().to_lowercase())
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    decode(Repr::deserialize(d)?)
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<Repr>::deserialize(d)?.map(decode).transpose()
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Row {
        #[serde(with = "super")]
        a: f64,
        #[serde(with = "super::option")]
        b: Option<f64>,
    }

    #[test]
    fn non_finite_values_round_trip() {
        for (a, b) in [(f64::INFINITY, None), (1.5, Some(f64::NEG_INFINITY)), (-2.0, Some(3.0))] {
            let json = serde_json::to_string(&Row { a, b }).unwrap();
            let back: Row = serde_json::from_str(&json).unwrap();
            assert_eq!(back, Row { a, b });
        }
        assert_eq!(serde_json::to_string(&Row { a: f64::INFINITY, b: None }).unwrap(), r#"{"a":"inf","b":null}"#);
        let nan: Row = serde_json::from_str(r#"{"a":"nan","b":null}"#).unwrap();
        assert!(nan.a.is_nan());
    }
}
