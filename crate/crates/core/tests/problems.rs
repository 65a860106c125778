mod common;

use reinvest_core::{OpCounts, ProblemInstance};

fn instances(n: usize) -> Vec<ProblemInstance> {
    vec![ProblemInstance::laplace(n).unwrap(), ProblemInstance::rosenbrock(n, 1.0).unwrap()]
}

fn fd_jvp(prob: &ProblemInstance, x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let mut c = OpCounts::default();
    let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
    let fp = prob.residual(&plus, &mut c).unwrap();
    let fm = prob.residual(&minus, &mut c).unwrap();
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

#[test]
fn jvp_matches_central_differences() {
    let mut rng = common::rng(7);
    let tol = 10.0 * f64::EPSILON.sqrt();
    for &n in &[3usize, 10, 101] {
        for prob in instances(n) {
            for _ in 0..100 {
                let x = common::uniform_vec(&mut rng, n, -2.0, 2.0);
                let v = common::uniform_vec(&mut rng, n, -2.0, 2.0);
                let mut c = OpCounts::default();
                let jv = prob.jacobian_vector_product(&x, &v, &mut c).unwrap();
                let fd = fd_jvp(&prob, &x, &v, 1e-6);
                let diff: Vec<f64> = jv.iter().zip(&fd).map(|(a, b)| a - b).collect();
                let rel = common::norm(&diff) / common::norm(&jv).max(1.0);
                assert!(rel <= tol, "{:?} n={n}: relative error {rel:e}", prob.kind());
            }
        }
    }
}

#[test]
fn rosenbrock_jvp_at_minimizer() {
    let prob = ProblemInstance::rosenbrock(3, 1.0).unwrap();
    let x = [1.0; 3];
    let v = [0.3, -1.1, 0.7];
    let mut c = OpCounts::default();
    let jv = prob.jacobian_vector_product(&x, &v, &mut c).unwrap();
    let fd = fd_jvp(&prob, &x, &v, 1e-6);
    for (a, b) in jv.iter().zip(&fd) {
        assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
    }
}

#[test]
fn jvp_is_linear_in_v() {
    let mut rng = common::rng(11);
    let n = 50;
    for prob in instances(n) {
        let x = common::uniform_vec(&mut rng, n, -2.0, 2.0);
        let v = common::uniform_vec(&mut rng, n, -2.0, 2.0);
        let w = common::uniform_vec(&mut rng, n, -2.0, 2.0);
        let alpha = 0.37;
        let combo: Vec<f64> = v.iter().zip(&w).map(|(a, b)| alpha * a + b).collect();
        let mut c = OpCounts::default();
        let jc = prob.jacobian_vector_product(&x, &combo, &mut c).unwrap();
        let jv = prob.jacobian_vector_product(&x, &v, &mut c).unwrap();
        let jw = prob.jacobian_vector_product(&x, &w, &mut c).unwrap();
        for i in 0..n {
            let expect = alpha * jv[i] + jw[i];
            let scale = jv[i].abs() + jw[i].abs() + 1.0;
            assert!((jc[i] - expect).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn laplace_residual_is_affine() {
    let mut rng = common::rng(13);
    let n = 40;
    let prob = ProblemInstance::laplace(n).unwrap();
    let x = common::uniform_vec(&mut rng, n, -2.0, 2.0);
    let v = common::uniform_vec(&mut rng, n, -2.0, 2.0);
    let xv: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + b).collect();
    let mut c = OpCounts::default();
    let f0 = prob.residual(&x, &mut c).unwrap();
    let f1 = prob.residual(&xv, &mut c).unwrap();
    let jv = prob.jacobian_vector_product(&x, &v, &mut c).unwrap();
    for i in 0..n {
        assert!((f1[i] - f0[i] - jv[i]).abs() <= 1e-13 * (f1[i].abs() + f0[i].abs() + 1.0));
    }
}

#[test]
fn binary32_evaluation_tracks_binary64() {
    let mut rng = common::rng(17);
    let n = 64;
    for prob in instances(n) {
        let x = common::uniform_vec(&mut rng, n, -1.0, 1.0);
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let xr: Vec<f64> = x32.iter().map(|&v| v as f64).collect();
        let mut c = OpCounts::default();
        let f64s = prob.residual(&xr, &mut c).unwrap();
        let f32s = prob.residual(&x32, &mut c).unwrap();
        for (a, b) in f64s.iter().zip(&f32s) {
            assert!((a - *b as f64).abs() <= 1e-4 * a.abs().max(1.0));
        }
    }
}
