use gpi_lab::linalg::*;
use gpi_lab::moments::*;

fn main() {
    let sigma = CovMatrix::identity(1);
    let part = IndexPartition::new(1, &[0]).unwrap();
    // probe the laplace factor across magnitudes
    for exp in [0, 10, 100, 200, 270, 280, 290, 300] {
        let s = 10f64.powi(exp);
        match gaussian_laplace_factor(&sigma, &part, &[s]) {
            Ok(v) => println!("s=1e{exp}: L={v:e}"),
            Err(e) => println!("s=1e{exp}: ERR {e}"),
        }
    }
}
