// scratch driver: effective input sensitivities of the trained PLP head
use lenpred::dataio;
use lenpred::head::{forward, load_model};
use lenpred::plp::{aggregate, remaining_target};
use lenpred::pooling::egtp_pool;
use std::path::Path;

fn main() {
    let records = dataio::read_dump(Path::new("/tmp/lenpred-smoke/data.flen")).unwrap();
    let (_, _, test) = dataio::split(records, (3, 1, 1), 42).unwrap();
    let (params, bins) = load_model(Path::new("/tmp/lenpred-smoke/plp.flhd")).unwrap();
    let d = test[0].prompt.d();

    for &f in &[0.25, 0.5, 0.75] {
        let mut dy_dprompt0 = 0.0;
        let mut dy_dpool0 = 0.0;
        let mut v_err = 0.0;
        let mut count = 0.0;
        for r in test.iter().take(150) {
            let resp = r.response.as_ref().unwrap();
            let total = resp.n();
            let t = ((f * total as f64).floor() as usize).min(total - 1);
            let target = remaining_target(total as u32, t as u32).unwrap() as f64;
            let pf = egtp_pool(&r.prompt, 1.0).unwrap().vector;
            let z = aggregate(&pf, resp, t, 1.0).unwrap();
            let out = forward(&params, &z, &bins).unwrap();
            // d y_hat / d z_j = sum_i p_i (c_i - y_hat) W_ij
            let coeff: Vec<f64> = out
                .p_hat
                .as_slice()
                .iter()
                .zip(bins.centers())
                .map(|(p, c)| p * (c - out.y_hat))
                .collect();
            let mut grad = vec![0.0; 2 * d];
            for i in 0..params.k() {
                for j in 0..2 * d {
                    grad[j] += coeff[i] * params.weights().get(i, j);
                }
            }
            dy_dprompt0 += grad[0];
            dy_dpool0 += grad[d];
            // how informative is the raw pooled coordinate?
            if t > 0 {
                v_err += (z[d] * 1024.0 - target).abs();
            }
            count += 1.0;
        }
        println!(
            "f={f}: mean d(yhat)/d(prompt_c0)={:.1} d(yhat)/d(pool_c0)={:.1} raw-feature |v*L - target| mean={:.1}",
            dy_dprompt0 / count,
            dy_dpool0 / count,
            v_err / count
        );
    }
}
