use rdfock::grid::{GridSpec, RadialGrid};
use rdfock::discretize::assemble_channel;
use rdfock::params::ChannelIndex;
use rdfock::analytic::sommerfeld_eigenvalue;
use std::sync::Arc;

fn main() {
    // artifact check: free positive edge per channel
    let g = Arc::new(RadialGrid::exponential(GridSpec::new(350, 1e-5, 60.0)).unwrap());
    for kk in [-3i32, -2, -1, 1, 2, 3, 8] {
        let k = ChannelIndex::new(kk).unwrap();
        let op = assemble_channel(k, 0.0, None, &g).unwrap();
        let lo = op.matrix().eigenvalues_in(0.0, 2.0, Some(1));
        println!("k={kk}: free positive edge {:.8}", lo[0]);
    }
    // convergence re-check
    for (kappa, k, nr, rmax) in [(0.5f64, -1i32, 0u32, 150.0f64), (0.9, -1, 0, 120.0), (0.5, 1, 1, 150.0), (0.3, -5, 0, 400.0), (0.9, 4, 1, 150.0)] {
        let exact = sommerfeld_eigenvalue(kappa, nr, ChannelIndex::new(k).unwrap()).unwrap();
        print!("kappa={kappa} k={k} nr={nr}: ");
        for m in [3000usize, 6000, 12000] {
            let spec = GridSpec::for_coupling(kappa, m, rmax);
            let gg = Arc::new(RadialGrid::exponential(spec).unwrap());
            let op = assemble_channel(ChannelIndex::new(k).unwrap(), kappa, None, &gg).unwrap();
            let got = op.matrix().eigenvalues_in(1e-10, 1.0 - 1e-10, Some(nr as usize + 1))[nr as usize];
            print!(" M={m}:{:.2e}", (got - exact).abs() / exact);
        }
        println!();
    }
}
