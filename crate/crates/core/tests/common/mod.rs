//! Helpers shared by the integration tests and a few examples.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenelayout::{AssetSpec, Placement, Pose, Relation, Room, SceneProgram};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

/// A generated scene: room, inventory and a program whose relations hold
/// at the nominal grid poses but not always at the jittered initial ones.
pub struct Synthetic {
    pub room: Room,
    pub inventory: Vec<AssetSpec>,
    pub program: SceneProgram,
}

const CELL: f64 = 1.35;
const NOMINAL: [f64; 4] = [0.0, 90.0, 180.0, -90.0];

/// `n` assets: floor items on a jittered grid plus one small item on top of
/// every ninth floor item.
pub fn synthetic_scene(n: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tops = n / 10;
    let floor = n - tops;
    let cols = (floor as f64).sqrt().ceil() as usize;
    let rows = floor.div_ceil(cols);
    let room = Room::new(cols as f64 * CELL, rows as f64 * CELL, 3.0).unwrap();

    let mut inventory = Vec::new();
    let mut program = SceneProgram::default();
    let mut nominal = Vec::new();
    for k in 0..floor {
        let (r, c) = (k / cols, k % cols);
        let id = format!("item_{k}");
        let dims = [
            rng.gen_range(0.3..0.7),
            rng.gen_range(0.3..0.8),
            rng.gen_range(0.4..1.8),
        ];
        let rot = if r + 1 < rows && k % 3 == 0 {
            90.0
        } else {
            NOMINAL[rng.gen_range(0..4)]
        };
        nominal.push(rot);
        let x = (c as f64 + 0.5) * CELL + rng.gen_range(-0.25..0.25);
        let y = (r as f64 + 0.5) * CELL + rng.gen_range(-0.25..0.25);
        let theta = rot + rng.gen_range(-15.0..15.0);
        program
            .poses
            .insert(id.clone(), Pose::from_degrees(x, y, dims[2] / 2.0, theta));
        inventory.push(AssetSpec::new(id, dims).with_description("synthetic box"));
    }
    for k in 0..floor {
        let (r, c) = (k / cols, k % cols);
        let id = format!("item_{k}");
        if c + 1 < cols && k + 1 < floor {
            let right = format!("item_{}", k + 1);
            program
                .relations
                .push(Relation::distance(&id, &right, CELL - 0.3, CELL + 0.3).unwrap());
            let phi = (nominal[k] - nominal[k + 1]).to_radians();
            program
                .relations
                .push(Relation::align_with(&id, &right, phi).unwrap());
        }
        if r + 1 < rows && k % 3 == 0 && k + cols < floor {
            let up = format!("item_{}", k + cols);
            program
                .relations
                .push(Relation::point_towards(&id, &up, 0.0).unwrap());
        }
    }
    for t in 0..tops {
        let base = format!("item_{}", (t * 9) % floor);
        let id = format!("top_{t}");
        let bp = program.poses[&base];
        program.poses.insert(
            id.clone(),
            Pose::new(bp.x + 0.03, bp.y - 0.02, 2.0, bp.theta),
        );
        let mut spec = AssetSpec::new(&id, [0.2, 0.2, 0.3]).with_description("small item");
        spec.placement = Placement {
            on_floor: false,
            on_object: true,
            ..spec.placement
        };
        inventory.push(spec);
        program
            .relations
            .push(Relation::on_top_of(&id, &base).unwrap());
    }
    Synthetic {
        room,
        inventory,
        program,
    }
}

/// A request seen by the mock endpoint.
#[derive(Debug, Clone)]
pub struct Seen {
    pub url: String,
    pub authorization: Option<String>,
    pub body: String,
}

/// Chat-completions endpoint on localhost that answers requests in order
/// from a script of `(status, content)`. A 200 wraps `content` as the
/// assistant message; any other status returns it as the raw body.
pub struct Mock {
    pub base: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
    handle: Option<JoinHandle<()>>,
}

impl Mock {
    pub fn start(script: Vec<(u16, String)>) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").expect("bind mock endpoint");
        let base = format!("http://{}", server.server_addr().to_ip().expect("tcp"));
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let handle = std::thread::spawn(move || {
            for (status, content) in script {
                let Ok(mut req) = server.recv() else { return };
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let authorization = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.to_string());
                log.lock().unwrap().push(Seen {
                    url: req.url().to_string(),
                    authorization,
                    body,
                });
                let text = if status == 200 {
                    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
                } else {
                    content
                };
                let _ =
                    req.respond(tiny_http::Response::from_string(text).with_status_code(status));
            }
        });
        Self {
            base,
            seen,
            handle: Some(handle),
        }
    }

    pub fn ok(responses: &[&str]) -> Self {
        Self::start(responses.iter().map(|r| (200, r.to_string())).collect())
    }

    /// Waits until the whole script has been served.
    pub fn finish(mut self) -> Vec<Seen> {
        if let Some(h) = self.handle.take() {
            h.join().expect("mock thread");
        }
        self.seen.lock().unwrap().clone()
    }
}
