use perihyp_demo::{counterexample_json, solve_wave_json, wave_margins_json};
use serde_json::Value;

#[test]
fn damped_wave_converges() {
    let out: Value = serde_json::from_str(&solve_wave_json("1", "-0.2*ut", "sin(2*pi*t)*x", 16, 20).unwrap()).unwrap();
    assert_eq!(out["outcome"], "converged");
    assert_eq!(out["values"].as_array().unwrap().len(), 16 * 21);
}

#[test]
fn telegraph_margins_follow_the_damping_integral() {
    let m: Value = serde_json::from_str(&wave_margins_json("1", "ut", 16, 20).unwrap()).unwrap();
    assert_eq!(m[0]["satisfied"], true);
    let m: Value = serde_json::from_str(&wave_margins_json("1", "(x - 0.5)*ut", 16, 20).unwrap()).unwrap();
    assert_eq!(m[0]["satisfied"], false);
}

#[test]
fn counterexample_reports_refinement() {
    let out: Value = serde_json::from_str(&counterexample_json("triangle", 64).unwrap()).unwrap();
    let weak = out["weak"].as_array().unwrap();
    assert_eq!(weak.len(), 3);
    assert!(weak[2].as_f64().unwrap() < weak[0].as_f64().unwrap());
    assert!(out["exponent"].as_f64().is_some());
}

#[test]
fn bad_input_is_an_error() {
    assert!(solve_wave_json("1 +", "0", "", 16, 20).is_err());
    assert!(counterexample_json("square", 64).is_err());
    assert!(wave_margins_json("1", "0", 4, 20).is_err());
}
