//! Scratch driver for watching solver convergence behavior.

use orthoreg_core::exponents::ExponentVector;
use orthoreg_core::grid::Grid;
use orthoreg_core::model::{BoundaryData, ModelParams, DEFAULT_EPS0};
use orthoreg_core::solver::{solve, InitialGuess, SolveConfig};

fn run(label: &str, p: Vec<f64>, eps: f64, nodes: usize, warm: Option<&orthoreg_core::grid::NodalField>) -> Option<orthoreg_core::grid::NodalField> {
    let dim = p.len();
    let grid = Grid::uniform(vec![(0.0, 1.0); dim], nodes).unwrap();
    let data = BoundaryData::random_smooth(dim, 7, 4, 2, 0.8);
    let m = ModelParams::new(ExponentVector::new(p).unwrap(), eps, DEFAULT_EPS0).unwrap();
    let mut cfg = SolveConfig::default();
    if let Some(w) = warm {
        cfg.initial = InitialGuess::Field(w.clone());
    }
    let t0 = std::time::Instant::now();
    match solve(&m, &data, &grid, &cfg) {
        Ok(res) => {
            println!(
                "{label:30} nodes {:7} iters {:6} residual {:.2e} energy {:.8} time {:?}",
                grid.node_count(),
                res.iterations,
                res.residual_max,
                res.energy,
                t0.elapsed()
            );
            Some(res.u)
        }
        Err(e) => {
            println!("{label:30} FAILED: {e} after {:?}", t0.elapsed());
            None
        }
    }
}

fn main() {
    run("2d p=(2,6) eps=.2 17", vec![2.0, 6.0], 0.2, 17, None);
    run("2d p=(2,6) eps=.2 65", vec![2.0, 6.0], 0.2, 65, None);
    let c = run("2d p=(2,10) eps=.25 65", vec![2.0, 10.0], 0.25, 65, None);
    run(
        "2d p=(2,10) eps=.25 129 warm",
        vec![2.0, 10.0],
        0.25,
        129,
        c.as_ref(),
    );
    run("2d p=(2,10) eps=.25 129 cold", vec![2.0, 10.0], 0.25, 129, None);
    let c3 = run("3d p=(2,4,8) eps=.25 17", vec![2.0, 4.0, 8.0], 0.25, 17, None);
    run(
        "3d p=(2,4,8) eps=.25 33 warm",
        vec![2.0, 4.0, 8.0],
        0.25,
        33,
        c3.as_ref(),
    );
}
