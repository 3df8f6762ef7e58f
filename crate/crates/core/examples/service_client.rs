//! Start the HTTP service on a free port and call each endpoint.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use unison::service::{serve_on, Runtime, ServiceConfig};

fn main() {
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).expect("bind");
    let base = format!("http://{}", listener.local_addr().expect("address"));
    let rt = Arc::new(Runtime::from_config(ServiceConfig::default()).expect("default config"));
    runtime.spawn(serve_on(listener, rt, std::future::pending()));

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let get = |path: &str| -> Value { agent.get(&format!("{base}{path}")).call().unwrap().body_mut().read_json().unwrap() };
    let post = |path: &str, body: Value| -> (u16, Value) {
        let mut r = agent.post(&format!("{base}{path}")).send_json(&body).unwrap();
        (r.status().as_u16(), r.body_mut().read_json().unwrap())
    };

    println!("healthz {}", get("/healthz"));
    println!("plan    {:?}", post("/v1/plan", json!({"instruction": "make a 1080P picture of a fox"})));
    println!("plan    {:?}", post("/v1/plan", json!({"instruction": "what is 2+2"})));
    println!("plan    {:?}", post("/v1/plan", json!({"instruction": "edit", "attachments": [{"kind": "photo"}]})));

    let (_, routed) = post(
        "/v1/route",
        json!({
            "instruction": "This is the mask <att:1> and this is the source image <att:2>. Remove the hat",
            "attachments": [{"kind": "mask", "uri": "file:///tmp/mask.png"}, {"kind": "image", "uri": "file:///tmp/photo.png"}]
        }),
    );
    println!("route   {routed}");
    let id = routed["job_id"].as_str().expect("job id");
    std::thread::sleep(Duration::from_millis(20));
    println!("job     {}", get(&format!("/v1/jobs/{id}")));
}
