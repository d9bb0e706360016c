use mindiff_core::law::{Atom, DensityPiece, TargetLaw};
use mindiff_core::speed::{self, DiffusionSpec};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn u01(r: &mut ChaCha8Rng) -> f64 { ((r.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64 }

#[test]
#[ignore]
fn hunt_conflict() {
    for seed in 0..4000u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        // random: up to 2 atoms + 1 three-node piece
        let mut atoms = vec![];
        let na = (r.next_u64() % 3) as usize;
        for _ in 0..na { atoms.push((u01(&mut r) * 3.0, 0.05 + u01(&mut r))); }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-3);
        let with_piece = r.next_u64() % 2 == 0 || atoms.len() < 2;
        let (lo, w) = (u01(&mut r) * 2.4, 0.1 + 0.5 * u01(&mut r));
        let (f0, f1, f2) = (0.05 + u01(&mut r), 0.05 + u01(&mut r), 0.05 + u01(&mut r));
        let mut total: f64 = atoms.iter().map(|a| a.1).sum();
        if with_piece { total += (f0 + f1) / 2.0 * w / 2.0 + (f1 + f2) / 2.0 * w / 2.0; }
        let atoms: Vec<Atom> = atoms.iter().map(|&(x, m)| Atom { position: x, mass: m / total }).collect();
        let mut pieces = vec![];
        if with_piece {
            pieces.push(DensityPiece::new(vec![(lo, f0 / total), (lo + w / 2.0, f1 / total), (lo + w, f2 / total)]).unwrap());
        }
        let law = match TargetLaw::new(atoms, pieces) { Ok(l) => l, Err(_) => continue };
        let (a, b) = law.support();
        if b - a < 0.2 { continue; }
        let x0 = a + (b - a) * (0.2 + 0.6 * u01(&mut r));
        let k0 = match law.kappa0(x0) { Ok(k) => k, Err(_) => continue };
        let kappa = k0 * (1.0 + 0.05 + u01(&mut r));
        let spec = match DiffusionSpec::new(law.clone(), x0, 1.0, kappa) { Ok(s) => s, Err(_) => continue };
        if let Err(e) = speed::classify(&spec) {
            println!("seed {seed}: {e}");
            println!("  support ({a}, {b}) x0 {x0} k0 {k0} kappa {kappa}");
            for at in law.atoms() { println!("  atom {} {}", at.position, at.mass); }
            for p in law.pieces() { println!("  piece {:?}", p.nodes()); }
            let (lo_d, hi_d) = spec.speed.domain();
            let mut eps = 0.25 * (hi_d - lo_d);
            for k in 0..48 {
                let x = hi_d - 0.75 * eps;
                if k % 6 == 0 { println!("  band k={k} eps={eps:.3e} dens(mid)={:.6e}", spec.speed.density(x)); }
                eps *= 0.5;
            }
            return;
        }
    }
    println!("no conflict found");
}
