use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use unison::router::{BackendRegistry, MockBackend, TaskKind};
use unison::service::{serve_on, Runtime, ServiceConfig};

struct Server {
    addr: SocketAddr,
    agent: ureq::Agent,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    fn start(runtime: Runtime) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve_on(listener, Arc::new(runtime), async {
                    let _ = stopped.await;
                })
                .await
                .unwrap();
            });
        });
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Server { addr: addr_rx.recv().unwrap(), agent, stop: Some(stop), thread: Some(thread) }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut r = self.agent.get(self.url(path)).call().unwrap();
        (r.status().as_u16(), r.body_mut().read_json().unwrap())
    }

    fn post(&self, path: &str, body: &str) -> (u16, Value) {
        let mut r = self.agent.post(self.url(path)).content_type("application/json").send(body).unwrap();
        (r.status().as_u16(), r.body_mut().read_json().unwrap())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.stop.take().unwrap().send(());
        let _ = self.thread.take().unwrap().join();
    }
}

fn default_server() -> Server {
    Server::start(Runtime::from_config(ServiceConfig::default()).unwrap())
}

#[test]
fn plan_endpoint() {
    let s = default_server();
    let (status, v) = s.post("/v1/plan", r#"{"instruction":"make a 1080P picture of a fox"}"#);
    assert_eq!(status, 200);
    assert_eq!(v["mode"], "generation");
    assert!(v["plan"]["raw"].as_str().unwrap().contains("<BORES>1920,1080<EORES>"));
    assert_eq!(v["plan"]["task_kind"], "TextToImage");

    let (status, v) = s.post("/v1/plan", r#"{"instruction":"what is 2+2"}"#);
    assert_eq!(status, 200);
    assert_eq!(v["mode"], "understanding");
    assert!(v.get("plan").is_none());
}

#[test]
fn route_and_poll() {
    let s = default_server();
    let body = json!({
        "instruction": "This is the mask <att:1> and this is the source image <att:2>. Remove the hat",
        "attachments": [{"kind": "mask", "uri": "s3://m.png"}, {"kind": "image", "uri": "s3://s.png"}],
    });
    let (status, v) = s.post("/v1/route", &body.to_string());
    assert_eq!(status, 200, "{v}");
    assert_eq!(v["job"]["task"], "ImageEditing");
    assert_eq!(v["job"]["edit_roles"], json!({"mask_id": 1, "source_id": 2}));
    let id = v["job_id"].as_str().unwrap().to_string();
    let mut state = String::new();
    for _ in 0..200 {
        let (status, v) = s.get(&format!("/v1/jobs/{id}"));
        assert_eq!(status, 200);
        state = v["state"].as_str().unwrap().to_string();
        if state == "done" {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(state, "done");
}

#[test]
fn error_bodies_and_statuses() {
    let s = default_server();
    let (status, v) = s.post("/v1/plan", "not json");
    assert_eq!(status, 400);
    assert_eq!(v["error"]["code"], "InvalidRequest");

    let (status, v) = s.post("/v1/plan", r#"{"instruction":"x","extra":1}"#);
    assert_eq!(status, 400);
    assert_eq!(v["error"]["code"], "InvalidRequest");

    // an image cannot be generated from a video
    let (status, v) = s.post("/v1/route", r#"{"instruction":"make a 1080P picture of a fox","attachments":[{"kind":"video"}]}"#);
    assert_eq!(status, 400);
    assert_eq!(v["error"]["code"], "ValidationFailed");

    let (status, v) = s.get("/v1/jobs/not-a-uuid");
    assert_eq!(status, 400);
    assert_eq!(v["error"]["code"], "InvalidRequest");

    let (status, v) = s.get("/v1/jobs/00000000-0000-4000-8000-000000000000");
    assert_eq!(status, 404);
    assert_eq!(v["error"]["code"], "UnknownJob");
}

#[test]
fn missing_capability_is_unavailable() {
    let images: BTreeSet<_> = [TaskKind::TextToImage].into_iter().collect();
    let mut registry = BackendRegistry::new();
    registry.register(Arc::new(MockBackend::with_capabilities("images-only", images)));
    let s = Server::start(Runtime::with_registry(ServiceConfig::default(), registry).unwrap());
    let (status, v) = s.post("/v1/route", r#"{"instruction":"Make a 5 second vertical video of rain"}"#);
    assert_eq!(status, 503);
    assert_eq!(v["error"]["code"], "NoCapableBackend");
    let (status, _) = s.post("/v1/route", r#"{"instruction":"make a 1080P picture of a fox"}"#);
    assert_eq!(status, 200);
}

#[test]
fn health_reports_digest() {
    let s = default_server();
    let (status, v) = s.get("/healthz");
    assert_eq!(status, 200);
    assert_eq!(v["status"], "ok");
    let digest = Runtime::from_config(ServiceConfig::default()).unwrap().digest().to_string();
    assert_eq!(v["config_digest"], digest);
    assert_eq!(v["backends"], json!(["mock"]));
}
