// scratch driver for inspecting PLP prediction bias per fraction
use lenpred::dataio;
use lenpred::head::{forward, load_model};
use lenpred::plp::{aggregate, remaining_target};
use lenpred::pooling::egtp_pool;
use std::path::Path;

fn main() {
    let records = dataio::read_dump(Path::new("/tmp/lenpred-smoke/data.flen")).unwrap();
    let (_, _, test) = dataio::split(records, (3, 1, 1), 42).unwrap();
    let (params, bins) = load_model(Path::new("/tmp/lenpred-smoke/plp.flhd")).unwrap();
    for &f in &[0.0, 0.25, 0.5, 0.75, 0.9] {
        for (lo, hi, label) in [(1u32, 80u32, "short"), (80, 300, "mid"), (300, 2000, "long")] {
            let mut bias = 0.0;
            let mut mae = 0.0;
            let mut target_mean = 0.0;
            let mut count = 0.0;
            for r in &test {
                if r.y < lo || r.y >= hi {
                    continue;
                }
                let resp = r.response.as_ref().unwrap();
                let total = resp.n();
                let t = ((f * total as f64).floor() as usize).min(total - 1);
                let target = remaining_target(total as u32, t as u32).unwrap() as f64;
                let pf = egtp_pool(&r.prompt, 1.0).unwrap().vector;
                let z = aggregate(&pf, resp, t, 1.0).unwrap();
                let out = forward(&params, &z, &bins).unwrap();
                let y_hat = bins.decode_prediction(out.y_hat).max(1.0);
                bias += y_hat - target;
                mae += (y_hat - target).abs();
                target_mean += target;
                count += 1.0;
            }
            println!(
                "f={f} {label} (n={count}): mean_target={:.1} mean_bias={:.2} mae={:.2}",
                target_mean / count,
                bias / count,
                mae / count
            );
        }
    }
}
