//! Bearer tokens from the identity service and the policy proxy in front
//! of the broker. Each role tries the three guarded operations.
//!
//! cargo run --example secured_access

use serde_json::{json, Value};
use twinmesh::auth::{AuthConfig, UserSpec};
use twinmesh::sim::{Stack, StackOptions};

fn user(name: &str, role: &str) -> UserSpec {
    UserSpec {
        username: name.into(),
        password: format!("{name}-secret"),
        roles: [role.to_string()].into(),
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut options = StackOptions::new(60, dir.path());
    options.auth = Some(AuthConfig::parking(vec![
        user("ada", "admin"),
        user("sam", "supervisor"),
        user("uma", "user"),
    ]));
    let stack = Stack::start(options).await?;
    let identity = stack.urls.identity.clone().unwrap();
    let proxy = stack.urls.proxy.clone().unwrap();
    let http = reqwest::Client::new();

    let anonymous = http.get(format!("{proxy}/v2/entities?type=ParkingSpot")).send().await?;
    println!("no token: {} login at {:?}", anonymous.status(), anonymous.headers().get("x-login-url"));

    for name in ["ada", "sam", "uma"] {
        let password = format!("{name}-secret");
        let token: Value = http
            .post(format!("{identity}/oauth/token"))
            .form(&[("grant_type", "password"), ("username", name), ("password", &password)])
            .send()
            .await?
            .json()
            .await?;
        let bearer = format!("Bearer {}", token["access_token"].as_str().unwrap_or_default());

        let create = http
            .post(format!("{identity}/users"))
            .header("authorization", &bearer)
            .json(&json!({"username": format!("{name}-friend"), "password": "pw", "roles": ["user"]}))
            .send()
            .await?
            .status();
        let update = http
            .patch(format!("{proxy}/v2/entities/spot:51/attrs"))
            .header("authorization", &bearer)
            .json(&json!({"status": {"type": "Text", "value": "closed"}}))
            .send()
            .await?
            .status();
        let list = http
            .get(format!("{proxy}/v2/entities?type=ParkingSpot&options=keyValues"))
            .header("authorization", &bearer)
            .send()
            .await?
            .status();
        println!("{name}: manage subjects {create}, update status {update}, retrieve {list}");
    }
    println!("requests forwarded to the broker: {}", stack.proxy.as_ref().unwrap().upstream_calls());
    stack.shutdown().await;
    Ok(())
}
