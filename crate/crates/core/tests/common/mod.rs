#![allow(dead_code)]

pub mod service_suite;

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::Router;

pub fn schema_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas/v1/api.schema.json")
}

/// Validates `instance` against `$defs/<name>` of the v1 API schema.
pub fn check_schema(name: &str, instance: &serde_json::Value) -> Result<(), String> {
    let raw = std::fs::read_to_string(schema_path()).map_err(|e| e.to_string())?;
    let mut doc: serde_json::Value = serde_json::from_str(&raw).map_err(|e| e.to_string())?;
    doc["$ref"] = serde_json::Value::String(format!("#/$defs/{name}"));
    let validator = jsonschema::validator_for(&doc).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("{name} schema: {}", errors.join("; ")))
    }
}

/// Serves `app` on an ephemeral loopback port.
pub async fn spawn_server(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    addr
}
