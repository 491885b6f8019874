//! Object fields as the raw tokens the server wrote.

/// Per object, each key with its value token exactly as serialized.
pub fn raw_fields(text: &str) -> Vec<Vec<(String, String)>> {
    let parsed: Vec<indexed::Fields> = serde_json::from_str(text).unwrap();
    parsed
        .into_iter()
        .map(|f| {
            f.0.into_iter()
                .map(|(k, v)| (k, v.get().to_string()))
                .collect()
        })
        .collect()
}

mod indexed {
    use serde::de::{Deserializer, MapAccess, Visitor};
    use serde::Deserialize;
    use serde_json::value::RawValue;

    /// Object entries in source order with their raw value tokens.
    pub struct Fields(pub Vec<(String, Box<RawValue>)>);

    impl<'de> Deserialize<'de> for Fields {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl<'de> Visitor<'de> for V {
                type Value = Fields;
                fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                    f.write_str("an object")
                }
                fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<Fields, A::Error> {
                    let mut out = Vec::new();
                    while let Some((k, v)) = m.next_entry::<String, Box<RawValue>>()? {
                        out.push((k, v));
                    }
                    Ok(Fields(out))
                }
            }
            d.deserialize_map(V)
        }
    }
}
