use mforge_core::ff::Field;
use mforge_core::ore::{diagonalize, MatOre, OrePoly, Twist};
use mforge_core::ratfun::parse;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn main() {
    std::thread::spawn(|| loop {
        std::thread::sleep(std::time::Duration::from_secs(5));
        eprint!("[watchdog] ");
        mforge_core::ratfun::stats::dump();
    });
    let f = Field::new(3, 1).unwrap();
    let pool = ["1", "2", "t", "th", "t+th", "2*th+1"];
    let units = ["1", "2", "t", "t+1"];
    let mut rng = StdRng::seed_from_u64(97);
    for trial in 0..12 {
        let twist = if trial % 2 == 0 { Twist::Tau } else { Twist::TauInv };
        let d = rng.gen_range(1..=3);
        let rand_entry = |max_deg: usize, rng: &mut StdRng| {
            let c = (0..=rng.gen_range(0..=max_deg))
                .map(|_| parse(&f, pool[rng.gen_range(0..pool.len())]).unwrap())
                .collect();
            OrePoly::from_coeffs(twist, &f, c)
        };
        let maxdeg = if d == 1 { 2 } else { 1 };
        let mut diag = vec![];
        for _ in 0..d {
            let mut x = rand_entry(maxdeg, &mut rng);
            while x.is_zero() {
                x = rand_entry(maxdeg, &mut rng);
            }
            diag.push(x);
        }
        let planted = MatOre::diag(&f, twist, &diag);
        let mut m = planted.clone();
        for _ in 0..6 {
            let i = rng.gen_range(0..d);
            let mut j = rng.gen_range(0..d);
            if d > 1 {
                while j == i {
                    j = rng.gen_range(0..d);
                }
            }
            if i == j {
                continue;
            }
            let g = OrePoly::constant(
                parse(&f, units[rng.gen_range(0..units.len())]).unwrap(),
                twist,
            );
            if rng.gen_bool(0.5) {
                m.row_addmul(i, j, &g);
            } else {
                m.col_addmul(i, j, &g);
            }
        }
        let t0 = Instant::now();
        eprintln!("trial {trial}: d={d} twist={twist:?} maxdeg={}", m.max_deg());
        let cert_m = diagonalize(&m).unwrap();
        eprintln!("  diag(m) took {:?}", t0.elapsed());
        let t1 = Instant::now();
        assert!(cert_m.verify(&m));
        eprintln!("  verify took {:?}", t1.elapsed());
        mforge_core::ratfun::stats::dump();
    }
}
