//! Validation for the subset of JSON Schema used by agent response schemas:
//! `type`, `properties`, `required`, `additionalProperties: false`, `items`,
//! `enum`, `minLength` and `minItems`.

use serde_json::Value;

pub fn validate(instance: &Value, schema: &Value) -> Result<(), String> {
    check(instance, schema, "$")
}

/// Parses model output as JSON, tolerating a surrounding markdown code fence.
pub fn parse_json_content(content: &str) -> Result<Value, String> {
    let trimmed = content.trim();
    let body = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    serde_json::from_str(body.trim()).map_err(|e| format!("not valid JSON: {e}"))
}

fn type_matches(instance: &Value, ty: &str) -> bool {
    match ty {
        "object" => instance.is_object(),
        "array" => instance.is_array(),
        "string" => instance.is_string(),
        "number" => instance.is_number(),
        "integer" => instance.is_i64() || instance.is_u64(),
        "boolean" => instance.is_boolean(),
        "null" => instance.is_null(),
        _ => false,
    }
}

fn check(instance: &Value, schema: &Value, path: &str) -> Result<(), String> {
    match schema.get("type") {
        Some(Value::String(ty)) if !type_matches(instance, ty) => {
            return Err(format!("{path}: expected {ty}"));
        }
        Some(Value::Array(types)) if !types.iter().filter_map(Value::as_str).any(|t| type_matches(instance, t)) => {
            return Err(format!("{path}: type not in {types:?}"));
        }
        _ => {}
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(instance) {
            return Err(format!("{path}: value not in enum"));
        }
    }
    if let (Some(min), Some(s)) = (schema.get("minLength").and_then(Value::as_u64), instance.as_str()) {
        if (s.trim().chars().count() as u64) < min {
            return Err(format!("{path}: shorter than {min} characters"));
        }
    }
    if let Some(obj) = instance.as_object() {
        if let Some(Value::Array(required)) = schema.get("required") {
            for key in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(key) {
                    return Err(format!("{path}: missing required field `{key}`"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (key, value) in obj {
            match props.and_then(|p| p.get(key)) {
                Some(sub) => check(value, sub, &format!("{path}.{key}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected field `{key}`"));
                }
                None => {}
            }
        }
    }
    if let Some(items) = instance.as_array() {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                return Err(format!("{path}: fewer than {min} items"));
            }
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(item, item_schema, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}
