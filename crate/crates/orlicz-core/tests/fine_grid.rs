//! Fine-resolution checks that need large allocations (about 1 GB).

use orlicz_core::grid::{distribution_function, Grid, GridField, Region};

#[test]
fn level_set_volume_resolves_at_fine_h() {
    // |x|^{-2} > 100 on [-1,1]^3 \ {0} is the ball of radius 0.1; at
    // h = 1/256 the nodal volume matches (4 pi/3) 1e-3 within 2%.
    let grid = Grid::new(3, &[-1.0; 3], &[2.0; 3], &[512, 512, 512]).unwrap();
    let f = GridField::from_fn(grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        if r2 == 0.0 {
            0.0
        } else {
            1.0 / r2
        }
    });
    let got = distribution_function(&f, 100.0, &Region::All);
    let expect = 4.0 * std::f64::consts::PI / 3.0 * 1e-3;
    let rel = (got - expect).abs() / expect;
    assert!(rel <= 0.02, "level-set volume {got:.6e} vs {expect:.6e} (rel {rel:.4})");
}
