//! K-means over noisy 2-D blobs, then size-proportional participant
//! selection across the resulting clusters.
//!
//! cargo run --example clustering_selection -- [k] [budget] [seed]

use perfedrec::math::RandomStream;
use perfedrec::server::{apportion, kmeans_cluster, select_participants};

fn main() -> perfedrec::Result<()> {
    let mut args = std::env::args().skip(1);
    let k = args.next().map_or(3, |s| s.parse().expect("k"));
    let budget = args.next().map_or(12, |s| s.parse().expect("budget"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed"));

    let mut rng = RandomStream::new(seed);
    let centers = [(0.0, 0.0, 40), (5.0, 5.0, 25), (-4.0, 6.0, 10)];
    let mut points = Vec::new();
    for &(x, y, count) in &centers {
        for _ in 0..count {
            points.push(vec![x + rng.next_f64() - 0.5, y + rng.next_f64() - 0.5]);
        }
    }

    let clusters = kmeans_cluster(&points, k, 100, &mut RandomStream::new(seed).derive(1))?;
    println!("objective {:.4}", clusters.objective);
    for (c, centroid) in clusters.centroids.iter().enumerate() {
        println!("cluster {c}: size {:>3} centroid ({:+.2}, {:+.2})", clusters.sizes()[c], centroid[0], centroid[1]);
    }

    println!("quotas for budget {budget}: {:?}", apportion(&clusters.sizes(), budget)?);
    let chosen = select_participants(&clusters, budget, &mut RandomStream::new(seed).derive(2))?;
    println!("participants {chosen:?}");
    Ok(())
}
