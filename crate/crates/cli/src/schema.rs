//! A deliberately small JSON Schema checker — just the keyword subset the
//! report schema uses ($ref into $defs, type, enum, const, properties,
//! required, additionalProperties, items, oneOf/anyOf, and numeric/array
//! bounds). It exists so tests can hold report.json to the schema shipped
//! in docs/ without pulling in a full validator implementation.

use serde_json::Value;

/// Validates `instance` against `schema`. `$ref` is resolved against the
/// schema document itself and must use the local `#/...` form.
pub fn validate(schema: &Value, instance: &Value) -> Result<(), Vec<String>> {
    let mut errors = Vec::new();
    check(schema, schema, instance, "$", &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn resolve<'a>(root: &'a Value, reference: &str) -> Option<&'a Value> {
    let pointer = reference.strip_prefix('#')?;
    root.pointer(pointer)
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn matches_type(value: &Value, ty: &str) -> bool {
    match ty {
        "integer" => match value {
            Value::Number(n) => {
                n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0)
            }
            _ => false,
        },
        "number" => value.is_number(),
        other => type_name(value) == other,
    }
}

fn check(root: &Value, schema: &Value, instance: &Value, path: &str, errors: &mut Vec<String>) {
    let Some(schema_obj) = schema.as_object() else {
        // `true` accepts anything, `false` rejects everything; any other
        // non-object schema is a schema bug.
        match schema {
            Value::Bool(true) => {}
            Value::Bool(false) => errors.push(format!("{path}: schema forbids any value")),
            _ => errors.push(format!("{path}: schema node is not an object")),
        }
        return;
    };

    if let Some(Value::String(reference)) = schema_obj.get("$ref") {
        match resolve(root, reference) {
            Some(target) => check(root, target, instance, path, errors),
            None => errors.push(format!("{path}: unresolvable $ref {reference}")),
        }
        return;
    }

    if let Some(ty) = schema_obj.get("type") {
        let allowed: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        if !allowed.iter().any(|t| matches_type(instance, t)) {
            errors.push(format!(
                "{path}: expected type {}, got {}",
                allowed.join("|"),
                type_name(instance)
            ));
            return;
        }
    }

    if let Some(Value::Array(options)) = schema_obj.get("enum") {
        if !options.contains(instance) {
            errors.push(format!("{path}: value not in enum"));
        }
    }
    if let Some(expected) = schema_obj.get("const") {
        if expected != instance {
            errors.push(format!("{path}: value does not match const"));
        }
    }

    for (key, op) in [("minimum", "<"), ("maximum", ">")] {
        if let (Some(bound), Some(actual)) = (
            schema_obj.get(key).and_then(Value::as_f64),
            instance.as_f64(),
        ) {
            let violated = if op == "<" {
                actual < bound
            } else {
                actual > bound
            };
            if violated {
                errors.push(format!("{path}: {actual} violates {key} {bound}"));
            }
        }
    }

    let alternatives = schema_obj.get("oneOf").or_else(|| schema_obj.get("anyOf"));
    if let Some(Value::Array(options)) = alternatives {
        let passed = options.iter().any(|option| {
            let mut sub_errors = Vec::new();
            check(root, option, instance, path, &mut sub_errors);
            sub_errors.is_empty()
        });
        if !passed {
            errors.push(format!("{path}: no alternative schema matched"));
        }
    }

    match instance {
        Value::Object(fields) => {
            let properties = schema_obj.get("properties").and_then(Value::as_object);
            if let Some(Value::Array(required)) = schema_obj.get("required") {
                for name in required.iter().filter_map(Value::as_str) {
                    if !fields.contains_key(name) {
                        errors.push(format!("{path}: missing required property {name:?}"));
                    }
                }
            }
            for (name, value) in fields {
                let child_path = format!("{path}.{name}");
                if let Some(subschema) = properties.and_then(|p| p.get(name)) {
                    check(root, subschema, value, &child_path, errors);
                } else {
                    match schema_obj.get("additionalProperties") {
                        Some(Value::Bool(false)) => {
                            errors.push(format!("{path}: unexpected property {name:?}"));
                        }
                        Some(Value::Bool(true)) | None => {}
                        Some(subschema) => check(root, subschema, value, &child_path, errors),
                    }
                }
            }
        }
        Value::Array(items) => {
            if let Some(min) = schema_obj.get("minItems").and_then(Value::as_u64) {
                if (items.len() as u64) < min {
                    errors.push(format!("{path}: fewer than {min} items"));
                }
            }
            if let Some(max) = schema_obj.get("maxItems").and_then(Value::as_u64) {
                if (items.len() as u64) > max {
                    errors.push(format!("{path}: more than {max} items"));
                }
            }
            match schema_obj.get("items") {
                // Tuple form: positional schemas.
                Some(Value::Array(schemas)) => {
                    for (i, (item, item_schema)) in items.iter().zip(schemas).enumerate() {
                        check(root, item_schema, item, &format!("{path}[{i}]"), errors);
                    }
                }
                Some(item_schema) => {
                    for (i, item) in items.iter().enumerate() {
                        check(root, item_schema, item, &format!("{path}[{i}]"), errors);
                    }
                }
                None => {}
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn accepts_matching_object() {
        let schema = json!({
            "type": "object",
            "required": ["name", "points"],
            "additionalProperties": false,
            "properties": {
                "name": {"type": "string"},
                "points": {
                    "type": "array",
                    "items": {"type": "array", "minItems": 2, "maxItems": 2,
                              "items": {"type": "number"}}
                }
            }
        });
        let ok = json!({"name": "jitter", "points": [[0.0, 1.5], [1.0, 2.5]]});
        assert!(validate(&schema, &ok).is_ok());
    }

    #[test]
    fn rejects_wrong_type_missing_and_extra_fields() {
        let schema = json!({
            "type": "object",
            "required": ["name"],
            "additionalProperties": false,
            "properties": {"name": {"type": "string"}}
        });
        let errors = validate(&schema, &json!({"nom": 3})).unwrap_err();
        assert_eq!(errors.len(), 2, "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("missing required")));
        assert!(errors.iter().any(|e| e.contains("unexpected property")));

        let errors = validate(&schema, &json!({"name": 3})).unwrap_err();
        assert!(errors[0].contains("expected type string"));
    }

    #[test]
    fn resolves_local_refs_and_alternatives() {
        let schema = json!({
            "oneOf": [{"$ref": "#/$defs/a"}, {"$ref": "#/$defs/b"}],
            "$defs": {
                "a": {"type": "object", "required": ["kind"],
                      "properties": {"kind": {"const": "a"}}},
                "b": {"type": "object", "required": ["kind"],
                      "properties": {"kind": {"const": "b"}}}
            }
        });
        assert!(validate(&schema, &json!({"kind": "a"})).is_ok());
        assert!(validate(&schema, &json!({"kind": "b"})).is_ok());
        assert!(validate(&schema, &json!({"kind": "c"})).is_err());
    }

    #[test]
    fn integer_type_accepts_whole_numbers_only() {
        let schema = json!({"type": "integer", "minimum": 1});
        assert!(validate(&schema, &json!(3)).is_ok());
        assert!(validate(&schema, &json!(3.5)).is_err());
        assert!(validate(&schema, &json!(0)).is_err());
    }

    #[test]
    fn tuple_items_validate_positionally() {
        let schema = json!({
            "type": "array", "minItems": 2, "maxItems": 2,
            "items": [{"type": "number"}, {"type": "integer", "minimum": 0}]
        });
        assert!(validate(&schema, &json!([0.5, 3])).is_ok());
        assert!(validate(&schema, &json!([0.5, 3.5])).is_err());
        assert!(validate(&schema, &json!([0.5])).is_err());
    }
}
