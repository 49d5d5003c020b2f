//! What the config loader accepts and rejects.

use pmbm_slam::RunConfig;

fn main() {
    let cases = [
        r#"{}"#,
        r#"{"preset": "III", "scale": "desk", "runs": 10}"#,
        r#"{"preset": "III", "outer_iter": 10}"#,
        r#"{"outer_iters": 10, "gamma": 20}"#,
        r#"{"sampler": {"mode": "gibbs_only", "gate_distance": -1.0}}"#,
        r#"{"thresholds": {"r_min": 0.2, "dist_max": 0.5, "r_report": 0.6}}"#,
    ];
    for text in cases {
        match RunConfig::from_json(text) {
            Ok(c) => println!("ok    {text}\n      -> {} steps, {} outer iterations, {} kept", c.scenario().steps, c.outer_iters, c.gamma),
            Err(e) => println!("error {text}\n      -> {e}"),
        }
    }
}
