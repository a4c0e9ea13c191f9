//! Full-covariance mixture fits scored by BIC over a range of K.
use scnet::mixture::{select_k, GmmConfig, KStrategy};
use scnet::rng::Rng;

fn main() -> scnet::Result<()> {
    let mut rng = Rng::new(11);
    let centres = [(0.0, 0.0), (6.0, 0.0), (3.0, 5.0)];
    let mut points = Vec::new();
    for &(cx, cy) in &centres {
        for _ in 0..150 {
            // elongated along x
            points.push(vec![cx + 1.5 * rng.normal(), cy + 0.4 * rng.normal()]);
        }
    }
    let sel = select_k(&points, &KStrategy::Bic { min: 1, max: 6 }, 0, &GmmConfig::default())?;
    for d in &sel.diagnostics {
        println!("K={}\tlogL {:.2}\tBIC {:.2}", d.k, d.log_likelihood, d.bic);
    }
    println!("chosen K = {}", sel.k);
    for (w, m) in sel.fit.model.weights.iter().zip(&sel.fit.model.means) {
        println!("weight {w:.3} mean {m:?}");
    }
    Ok(())
}
