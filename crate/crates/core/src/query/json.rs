//! Canonical JSON AST encoding used in dataset files.
//!
//! Concepts: `{"op":"nominal","entity":s}`, `{"op":"not","arg":A}`,
//! `{"op":"and","args":[..]}`, `{"op":"or","args":[..]}`,
//! `{"op":"exists","role":R,"arg":A}`. Roles: `{"op":"rel","name":s}`,
//! `{"op":"inv","arg":R}`, `{"op":"comp","args":[..]}`,
//! `{"op":"meet","args":[..]}`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{Concept, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid JSON AST: {0}")]
pub struct JsonAstError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, JsonAstError> {
    Err(JsonAstError(msg.into()))
}

fn field<'v>(obj: &'v Map<String, Value>, key: &str) -> Result<&'v Value, JsonAstError> {
    obj.get(key)
        .ok_or_else(|| JsonAstError(format!("missing field '{key}'")))
}

fn str_field<'v>(obj: &'v Map<String, Value>, key: &str) -> Result<&'v str, JsonAstError> {
    field(obj, key)?
        .as_str()
        .ok_or_else(|| JsonAstError(format!("field '{key}' must be a string")))
}

fn list_field<'v>(
    obj: &'v Map<String, Value>,
    key: &str,
    min: usize,
) -> Result<&'v [Value], JsonAstError> {
    let list = field(obj, key)?
        .as_array()
        .ok_or_else(|| JsonAstError(format!("field '{key}' must be an array")))?;
    if list.len() < min {
        return err(format!("field '{key}' needs at least {min} entries"));
    }
    Ok(list)
}

impl Role {
    pub fn to_json(&self) -> Value {
        match self {
            Role::Name(n) => json!({"op": "rel", "name": n}),
            Role::Inverse(r) => json!({"op": "inv", "arg": r.to_json()}),
            Role::Compose(a, b) => json!({"op": "comp", "args": [a.to_json(), b.to_json()]}),
            Role::Meet(ms) => {
                json!({"op": "meet", "args": ms.iter().map(Role::to_json).collect::<Vec<_>>()})
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<Role, JsonAstError> {
        let obj = v
            .as_object()
            .ok_or_else(|| JsonAstError("role must be an object".into()))?;
        match str_field(obj, "op")? {
            "rel" => Ok(Role::name(str_field(obj, "name")?)),
            "inv" => Ok(Role::from_json(field(obj, "arg")?)?.inv()),
            "comp" => {
                let args = list_field(obj, "args", 2)?
                    .iter()
                    .map(Role::from_json)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Role::chain(args))
            }
            "meet" => Ok(Role::Meet(
                list_field(obj, "args", 2)?
                    .iter()
                    .map(Role::from_json)
                    .collect::<Result<_, _>>()?,
            )),
            other => err(format!("unknown role op '{other}'")),
        }
    }
}

impl Concept {
    pub fn to_json(&self) -> Value {
        match self {
            Concept::Nominal(a) => json!({"op": "nominal", "entity": a}),
            Concept::Not(c) => json!({"op": "not", "arg": c.to_json()}),
            Concept::And(cs) => {
                json!({"op": "and", "args": cs.iter().map(Concept::to_json).collect::<Vec<_>>()})
            }
            Concept::Or(cs) => {
                json!({"op": "or", "args": cs.iter().map(Concept::to_json).collect::<Vec<_>>()})
            }
            Concept::Exists(r, c) => json!({"op": "exists", "role": r.to_json(), "arg": c.to_json()}),
        }
    }

    pub fn from_json(v: &Value) -> Result<Concept, JsonAstError> {
        let obj = v
            .as_object()
            .ok_or_else(|| JsonAstError("concept must be an object".into()))?;
        let list = |key| -> Result<Vec<Concept>, JsonAstError> {
            list_field(obj, key, 2)?
                .iter()
                .map(Concept::from_json)
                .collect()
        };
        match str_field(obj, "op")? {
            "nominal" => Ok(Concept::nominal(str_field(obj, "entity")?)),
            "not" => Ok(Concept::not(Concept::from_json(field(obj, "arg")?)?)),
            "and" => Ok(Concept::And(list("args")?)),
            "or" => Ok(Concept::Or(list("args")?)),
            "exists" => Ok(Concept::exists(
                Role::from_json(field(obj, "role")?)?,
                Concept::from_json(field(obj, "arg")?)?,
            )),
            other => err(format!("unknown concept op '{other}'")),
        }
    }
}

impl Serialize for Concept {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Concept {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Concept::from_json(&v).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_exists_inverse() {
        let c = Concept::exists(Role::name("r").inv(), Concept::nominal("a"));
        assert_eq!(
            c.to_json(),
            json!({"op":"exists","role":{"op":"inv","arg":{"op":"rel","name":"r"}},
                   "arg":{"op":"nominal","entity":"a"}})
        );
        assert_eq!(Concept::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn long_comp_lists_fold_left() {
        let v = json!({"op":"comp","args":[{"op":"rel","name":"a"},{"op":"rel","name":"b"},{"op":"rel","name":"c"}]});
        assert_eq!(
            Role::from_json(&v).unwrap(),
            Role::chain([Role::name("a"), Role::name("b"), Role::name("c")])
        );
    }

    #[test]
    fn rejects_malformed() {
        assert!(Concept::from_json(&json!({"op":"and","args":[{"op":"nominal","entity":"a"}]})).is_err());
        assert!(Concept::from_json(&json!({"op":"xor"})).is_err());
        assert!(Concept::from_json(&json!("{a}")).is_err());
        assert!(Role::from_json(&json!({"op":"rel"})).is_err());
    }
}
