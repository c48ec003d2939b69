use serde_json::Value;

fn schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

// Every object in the schema lists exactly the fields of the config, with the
// same defaults.
fn compare(schema: &Value, value: &Value, at: &str) {
    match value {
        Value::Object(fields) => {
            let props = schema["properties"].as_object().unwrap_or_else(|| panic!("{at}: no properties"));
            let mut a: Vec<&String> = props.keys().collect();
            let mut b: Vec<&String> = fields.keys().collect();
            a.sort();
            b.sort();
            assert_eq!(a, b, "{at}");
            assert_eq!(schema["additionalProperties"], Value::Bool(false), "{at}");
            for (k, v) in fields {
                compare(&props[k], v, &format!("{at}.{k}"));
            }
        }
        Value::Null => assert!(schema.get("default").is_none(), "{at}"),
        other => {
            let d = &schema["default"];
            let same = match (d.as_f64(), other.as_f64()) {
                (Some(x), Some(y)) => x == y,
                _ => d == other,
            };
            assert!(same || d.is_array(), "{at}: schema default {d} vs {other}");
            if let (Some(x), Some(y)) = (d.as_array(), other.as_array()) {
                assert_eq!(x.len(), y.len(), "{at}");
                for (p, q) in x.iter().zip(y) {
                    assert_eq!(p.as_f64(), q.as_f64(), "{at}");
                }
            }
        }
    }
}

#[test]
fn shipped_schema_matches_defaults() {
    let defaults = serde_json::to_value(risloc::harness::Config::default()).unwrap();
    compare(&schema(), &defaults, "config");
}
