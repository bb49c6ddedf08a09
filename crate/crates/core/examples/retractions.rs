//! Cone-compatibility axioms for the three retractions, and one step of each
//! from the same particle.

use meopt::cone::{check_cone_compatibility, retract_canonical, retract_induced, retract_mirror, ConeParticle, ConeTangent, RetractionKind};
use meopt::manifold::Manifold;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> meopt::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (kind, man) in [
        (RetractionKind::Canonical, Manifold::torus(2)),
        (RetractionKind::Mirror, Manifold::torus(2)),
        (RetractionKind::Induced, Manifold::sphere(2)),
    ] {
        let rep = check_cone_compatibility(&kind, &man, 1000, &mut rng)?;
        println!("{:9} pass = {} (homogeneity deviation {:.1e})", rep.retraction, rep.pass(), rep.homogeneity.worst_deviation);
    }

    let sphere = Manifold::sphere(2);
    let p = ConeParticle::new(1.0, sphere.point(vec![0.0, 0.0, 1.0])?)?;
    let t = ConeTangent { dr: -0.5, dpos: vec![0.3, 0.0, 0.0] };
    for (name, q) in [
        ("canonical", retract_canonical(&sphere, &p, &t)?),
        ("mirror", retract_mirror(&sphere, &p, &t)?),
        ("induced", retract_induced(&sphere, &p, &t)?),
    ] {
        println!("{name:9} r = {:.4}, theta = {:?}", q.r, q.pos.coords());
    }
    Ok(())
}
